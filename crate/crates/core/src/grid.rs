//! Uniform-grid spatial index. Space is divided into cubic boxes whose edge
//! is at least the largest agent's bounding diameter, so all interactions
//! within a radius not exceeding the edge are found by scanning a box and its
//! 26 surrounding boxes. Boxes live on an absolute lattice (the origin is a
//! multiple of the edge length), which lets consecutive steps compare box
//! contents for the stationary-region optimization.

use crate::agent::AgentId;
use crate::exec;
use crate::math::Vec3;

/// Upper bound on total boxes; beyond this the edge is doubled (correctness
/// is preserved: a larger edge still satisfies the box-size invariant).
const MAX_CELLS: usize = 64 << 20;

pub struct GridInput<'a> {
    pub positions: &'a [Vec3],
    pub bounding_diameters: &'a [f64],
    pub ids: &'a [AgentId],
}

/// Retained between steps for stationary-region detection.
#[derive(Clone)]
pub struct GridSummary {
    pub(crate) edge: f64,
    pub(crate) base: [i64; 3],
    pub(crate) dims: [usize; 3],
    pub(crate) cell_offsets: Vec<u32>,
    pub(crate) cell_ids: Vec<AgentId>,
}

pub struct UniformGrid {
    edge: f64,
    base: [i64; 3],
    origin: Vec3,
    dims: [usize; 3],
    cell_offsets: Vec<u32>,
    /// Agent slot indices, grouped by cell, in slot (= id) order.
    entries: Vec<u32>,
    entry_ids: Vec<AgentId>,
    /// Per-agent linear cell index.
    cell_of_agent: Vec<u32>,
    /// Per-cell stationary flag; empty when change tracking was not enabled.
    stationary: Vec<bool>,
}

impl UniformGrid {
    pub fn build(input: &GridInput<'_>, min_box_edge: f64, parallel: bool) -> UniformGrid {
        Self::build_inner(input, min_box_edge, parallel, None)
    }

    /// Builds the grid and computes stationary flags against the previous
    /// step. A box is stationary iff no agent in it or its 26 surrounding
    /// boxes moved more than `eps_move` or was created/removed since the
    /// previous step.
    pub fn build_tracked(
        input: &GridInput<'_>,
        min_box_edge: f64,
        parallel: bool,
        prev: &GridSummary,
        prev_positions: &[Vec3],
        eps_move: f64,
    ) -> UniformGrid {
        Self::build_inner(input, min_box_edge, parallel, Some((prev, prev_positions, eps_move)))
    }

    fn build_inner(
        input: &GridInput<'_>,
        min_box_edge: f64,
        parallel: bool,
        tracking: Option<(&GridSummary, &[Vec3], f64)>,
    ) -> UniformGrid {
        let n = input.positions.len();
        assert_eq!(n, input.bounding_diameters.len());
        assert_eq!(n, input.ids.len());
        let min_box_edge = if min_box_edge > 0.0 { min_box_edge } else { 1.0 };

        if n == 0 {
            return UniformGrid {
                edge: min_box_edge,
                base: [0, 0, 0],
                origin: Vec3::ZERO,
                dims: [1, 1, 1],
                cell_offsets: vec![0, 0],
                entries: Vec::new(),
                entry_ids: Vec::new(),
                cell_of_agent: Vec::new(),
                stationary: Vec::new(),
            };
        }

        // Bounds and largest agent, reduced in parallel (min/max are exact
        // regardless of order).
        let (lo, hi, max_diam) = exec::fold_ref(
            input.positions,
            parallel,
            || (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY), 0.0f64),
            |(lo, hi, d), i, p| {
                (
                    lo.min_components(*p),
                    hi.max_components(*p),
                    d.max(input.bounding_diameters[i]),
                )
            },
            |(l1, h1, d1), (l2, h2, d2)| {
                (l1.min_components(l2), h1.max_components(h2), d1.max(d2))
            },
        );

        let mut edge = min_box_edge.max(max_diam);
        let (mut base, mut dims);
        loop {
            base = [
                (lo.x / edge).floor() as i64,
                (lo.y / edge).floor() as i64,
                (lo.z / edge).floor() as i64,
            ];
            let origin = Vec3::new(
                base[0] as f64 * edge,
                base[1] as f64 * edge,
                base[2] as f64 * edge,
            );
            dims = [
                ((hi.x - origin.x) / edge).floor() as usize + 1,
                ((hi.y - origin.y) / edge).floor() as usize + 1,
                ((hi.z - origin.z) / edge).floor() as usize + 1,
            ];
            if dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]) <= MAX_CELLS {
                break;
            }
            edge *= 2.0;
        }
        let origin =
            Vec3::new(base[0] as f64 * edge, base[1] as f64 * edge, base[2] as f64 * edge);
        let ncells = dims[0] * dims[1] * dims[2];

        let cell_of = |p: Vec3| -> u32 {
            let ix = (((p.x - origin.x) / edge).floor() as i64).clamp(0, dims[0] as i64 - 1) as usize;
            let iy = (((p.y - origin.y) / edge).floor() as i64).clamp(0, dims[1] as i64 - 1) as usize;
            let iz = (((p.z - origin.z) / edge).floor() as i64).clamp(0, dims[2] as i64 - 1) as usize;
            ((iz * dims[1] + iy) * dims[0] + ix) as u32
        };

        let cell_of_agent: Vec<u32> =
            exec::map_collect(input.positions, parallel, |_, &p| cell_of(p));

        // Counting scatter in slot order keeps per-cell entries in id order.
        let mut cell_offsets = vec![0u32; ncells + 1];
        for &c in &cell_of_agent {
            cell_offsets[c as usize + 1] += 1;
        }
        for i in 0..ncells {
            cell_offsets[i + 1] += cell_offsets[i];
        }
        let mut cursor = cell_offsets.clone();
        let mut entries = vec![0u32; n];
        for (slot, &c) in cell_of_agent.iter().enumerate() {
            entries[cursor[c as usize] as usize] = slot as u32;
            cursor[c as usize] += 1;
        }
        let entry_ids: Vec<AgentId> =
            entries.iter().map(|&slot| input.ids[slot as usize]).collect();

        let mut grid = UniformGrid {
            edge,
            base,
            origin,
            dims,
            cell_offsets,
            entries,
            entry_ids,
            cell_of_agent,
            stationary: Vec::new(),
        };

        if let Some((prev, prev_positions, eps_move)) = tracking {
            grid.compute_stationary(input, parallel, prev, prev_positions, eps_move);
        }
        grid
    }

    fn compute_stationary(
        &mut self,
        input: &GridInput<'_>,
        parallel: bool,
        prev: &GridSummary,
        prev_positions: &[Vec3],
        eps_move: f64,
    ) {
        let ncells = self.cell_count();
        let eps_sq = eps_move * eps_move;
        let same_lattice = prev.edge == self.edge;

        let changed: Vec<bool> = if !same_lattice {
            vec![true; ncells]
        } else {
            exec::fill_indexed(ncells, parallel, |c| {
                let my = self.cell_ids(c);
                let world = self.world_of_linear(c);
                let prev_ids = prev_cell_ids(prev, world);
                if my.len() != prev_ids.len() {
                    return true;
                }
                for (a, b) in my.iter().zip(prev_ids) {
                    if a != b {
                        return true;
                    }
                }
                // Same membership: check movement.
                let (s, e) = self.cell_range(c);
                for k in s..e {
                    let slot = self.entries[k] as usize;
                    let id = input.ids[slot].raw() as usize;
                    let prev_p = prev_positions.get(id).copied().unwrap_or(input.positions[slot]);
                    if (input.positions[slot] - prev_p).norm_sq() > eps_sq {
                        return true;
                    }
                }
                false
            })
        };

        // Previous-step boxes that fell outside the current bounds also
        // poison their (current-grid) neighborhood if they held agents.
        let mut changed = changed;
        if same_lattice {
            let prev_cells = prev.dims[0] * prev.dims[1] * prev.dims[2];
            for pc in 0..prev_cells {
                if prev.cell_offsets[pc + 1] == prev.cell_offsets[pc] {
                    continue;
                }
                let pw = world_of_linear_in(prev.base, prev.dims, pc);
                if self.linear_of_world(pw).is_none() {
                    for dz in -1..=1i64 {
                        for dy in -1..=1i64 {
                            for dx in -1..=1i64 {
                                let w = [pw[0] + dx, pw[1] + dy, pw[2] + dz];
                                if let Some(c) = self.linear_of_world(w) {
                                    changed[c] = true;
                                }
                            }
                        }
                    }
                }
            }
        }

        let dims = self.dims;
        self.stationary = exec::fill_indexed(ncells, parallel, |c| {
            let [ix, iy, iz] = linear_to_coords(c, dims);
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let x = ix as i64 + dx;
                        let y = iy as i64 + dy;
                        let z = iz as i64 + dz;
                        if x < 0
                            || y < 0
                            || z < 0
                            || x >= dims[0] as i64
                            || y >= dims[1] as i64
                            || z >= dims[2] as i64
                        {
                            continue;
                        }
                        let nc = ((z as usize * dims[1] + y as usize) * dims[0]) + x as usize;
                        if changed[nc] {
                            return false;
                        }
                    }
                }
            }
            true
        });
    }

    #[inline]
    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn population(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    fn cell_range(&self, c: usize) -> (usize, usize) {
        (self.cell_offsets[c] as usize, self.cell_offsets[c + 1] as usize)
    }

    fn cell_ids(&self, c: usize) -> &[AgentId] {
        let (s, e) = self.cell_range(c);
        &self.entry_ids[s..e]
    }

    /// Box coordinates of a position, clamped into the grid.
    pub fn cell_of_position(&self, p: Vec3) -> [usize; 3] {
        let f = |v: f64, o: f64, d: usize| -> usize {
            (((v - o) / self.edge).floor() as i64).clamp(0, d as i64 - 1) as usize
        };
        [
            f(p.x, self.origin.x, self.dims[0]),
            f(p.y, self.origin.y, self.dims[1]),
            f(p.z, self.origin.z, self.dims[2]),
        ]
    }

    /// Box coordinates holding an agent (by its slot index at build time).
    pub fn cell_of_agent(&self, slot: usize) -> [usize; 3] {
        linear_to_coords(self.cell_of_agent[slot] as usize, self.dims)
    }

    #[inline]
    fn linear(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn world_of_linear(&self, c: usize) -> [i64; 3] {
        world_of_linear_in(self.base, self.dims, c)
    }

    fn linear_of_world(&self, w: [i64; 3]) -> Option<usize> {
        let x = w[0] - self.base[0];
        let y = w[1] - self.base[1];
        let z = w[2] - self.base[2];
        if x < 0
            || y < 0
            || z < 0
            || x >= self.dims[0] as i64
            || y >= self.dims[1] as i64
            || z >= self.dims[2] as i64
        {
            None
        } else {
            Some(((z as usize * self.dims[1]) + y as usize) * self.dims[0] + x as usize)
        }
    }

    /// Visits the agent slots in the box at `cell` and its 26 surrounding
    /// boxes, in deterministic order.
    pub fn for_each_in_neighborhood(&self, cell: [usize; 3], mut f: impl FnMut(u32)) {
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let x = cell[0] as i64 + dx;
                    let y = cell[1] as i64 + dy;
                    let z = cell[2] as i64 + dz;
                    if x < 0
                        || y < 0
                        || z < 0
                        || x >= self.dims[0] as i64
                        || y >= self.dims[1] as i64
                        || z >= self.dims[2] as i64
                    {
                        continue;
                    }
                    let c = self.linear([x as usize, y as usize, z as usize]);
                    let (s, e) = self.cell_range(c);
                    for k in s..e {
                        f(self.entries[k]);
                    }
                }
            }
        }
    }

    /// True iff no agent in the box or its 26 surrounding boxes moved more
    /// than the configured epsilon or was created/removed since the previous
    /// step. Always false when the previous grid was not retained.
    pub fn is_region_stationary(&self, cell: [usize; 3]) -> bool {
        if self.stationary.is_empty() {
            return false;
        }
        self.stationary[self.linear(cell)]
    }

    /// Per-agent variant of [`is_region_stationary`].
    pub fn is_agent_stationary(&self, slot: usize) -> bool {
        if self.stationary.is_empty() {
            return false;
        }
        self.stationary[self.cell_of_agent[slot] as usize]
    }

    pub fn has_stationary_flags(&self) -> bool {
        !self.stationary.is_empty()
    }

    /// Occupancy histogram: count of boxes per occupancy level.
    pub fn occupancy_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut hist = std::collections::BTreeMap::new();
        for c in 0..self.cell_count() {
            let (s, e) = self.cell_range(c);
            *hist.entry(e - s).or_insert(0) += 1;
        }
        hist
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            edge: self.edge,
            base: self.base,
            dims: self.dims,
            cell_offsets: self.cell_offsets.clone(),
            cell_ids: self.entry_ids.clone(),
        }
    }
}

fn linear_to_coords(c: usize, dims: [usize; 3]) -> [usize; 3] {
    let ix = c % dims[0];
    let iy = (c / dims[0]) % dims[1];
    let iz = c / (dims[0] * dims[1]);
    [ix, iy, iz]
}

fn world_of_linear_in(base: [i64; 3], dims: [usize; 3], c: usize) -> [i64; 3] {
    let [ix, iy, iz] = linear_to_coords(c, dims);
    [base[0] + ix as i64, base[1] + iy as i64, base[2] + iz as i64]
}

fn prev_cell_ids<'a>(prev: &'a GridSummary, world: [i64; 3]) -> &'a [AgentId] {
    let x = world[0] - prev.base[0];
    let y = world[1] - prev.base[1];
    let z = world[2] - prev.base[2];
    if x < 0
        || y < 0
        || z < 0
        || x >= prev.dims[0] as i64
        || y >= prev.dims[1] as i64
        || z >= prev.dims[2] as i64
    {
        return &[];
    }
    let c = ((z as usize * prev.dims[1]) + y as usize) * prev.dims[0] + x as usize;
    let (s, e) = (prev.cell_offsets[c] as usize, prev.cell_offsets[c + 1] as usize);
    &prev.cell_ids[s..e]
}
