//! Grid neighbor search against the O(n²) all-pairs oracle.

use proptest::prelude::*;
use vivarium_core::*;

fn brute_force_neighbors(positions: &[Vec3], center: usize, radius: f64) -> Vec<usize> {
    let p = positions[center];
    (0..positions.len())
        .filter(|&j| j != center && (positions[j] - p).norm() <= radius)
        .collect()
}

fn build_sim(positions: &[Vec3], diameters: &[f64], min_box: f64) -> Simulation<()> {
    let mut s = Simulation::new(
        SimParams { min_box_edge: min_box, parallel: false, ..SimParams::default() },
        0,
    );
    for (p, d) in positions.iter().zip(diameters) {
        s.add_agent(Agent::sphere(*p, *d, ())).unwrap();
    }
    s
}

#[test]
fn two_agents_within_radius_see_each_other() {
    let s = build_sim(&[Vec3::ZERO, Vec3::new(5.0, 0.0, 0.0)], &[10.0, 10.0], 10.0);
    let snap = s.make_snapshot();
    assert_eq!(snap.neighbors(0, 10.0).unwrap(), vec![1]);
    assert_eq!(snap.neighbors(1, 10.0).unwrap(), vec![0]);
}

#[test]
fn agents_outside_radius_are_not_neighbors() {
    let s = build_sim(&[Vec3::ZERO, Vec3::new(11.0, 0.0, 0.0)], &[10.0, 10.0], 12.0);
    let snap = s.make_snapshot();
    assert!(snap.neighbors(0, 10.0).unwrap().is_empty());
    assert!(snap.neighbors(1, 10.0).unwrap().is_empty());
}

#[test]
fn radius_exceeding_box_edge_is_rejected_with_guidance() {
    let s = build_sim(&[Vec3::ZERO, Vec3::new(2.0, 0.0, 0.0)], &[1.0, 1.0], 2.0);
    let snap = s.make_snapshot();
    let err = snap.neighbors(0, 5.0).unwrap_err();
    match err {
        EngineError::RadiusExceedsBox { radius, edge } => {
            assert_eq!(radius, 5.0);
            assert_eq!(edge, 2.0);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn five_hundred_agents_match_brute_force_exactly() {
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let positions: Vec<Vec3> = (0..500)
        .map(|_| Vec3::new(next() * 200.0, next() * 200.0, next() * 200.0))
        .collect();
    let diameters: Vec<f64> = (0..500).map(|_| 2.0 + next() * 8.0).collect();
    let s = build_sim(&positions, &diameters, 1.0);
    let snap = s.make_snapshot();
    let radius = snap.grid().edge();
    for i in 0..positions.len() {
        let mut got = snap.neighbors(i, radius).unwrap();
        got.sort_unstable();
        let expected = brute_force_neighbors(&positions, i, radius);
        assert_eq!(got, expected, "neighbor mismatch at agent {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn grid_equals_brute_force(
        coords in prop::collection::vec((0.0f64..150.0, 0.0f64..150.0, 0.0f64..150.0), 1..300),
        max_d in 2.0f64..20.0,
        radius_frac in 0.1f64..1.0,
    ) {
        let positions: Vec<Vec3> = coords.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
        let diameters: Vec<f64> = (0..positions.len()).map(|i| 1.0 + (i as f64 % 7.0) / 7.0 * (max_d - 1.0)).collect();
        let s = build_sim(&positions, &diameters, 1.0);
        let snap = s.make_snapshot();
        let radius = snap.grid().edge() * radius_frac;
        for i in 0..positions.len() {
            let mut got = snap.neighbors(i, radius).unwrap();
            got.sort_unstable();
            let expected = brute_force_neighbors(&positions, i, radius);
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn neighbor_relation_is_symmetric(
        coords in prop::collection::vec((0.0f64..80.0, 0.0f64..80.0, 0.0f64..80.0), 2..150),
    ) {
        let positions: Vec<Vec3> = coords.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
        let diameters = vec![6.0; positions.len()];
        let s = build_sim(&positions, &diameters, 1.0);
        let snap = s.make_snapshot();
        let radius = snap.grid().edge() * 0.8;
        let sets: Vec<Vec<usize>> = (0..positions.len())
            .map(|i| snap.neighbors(i, radius).unwrap())
            .collect();
        for (a, set) in sets.iter().enumerate() {
            for &b in set {
                prop_assert!(sets[b].contains(&a), "asymmetry between {} and {}", a, b);
            }
        }
    }
}
