//! Extracellular substance concentrations on a regular lattice.
//!
//! Explicit Euler stepping of c' = c + Δt·(D·∇²c − µ·c) with the 7-point
//! stencil, a double buffer (reads during a step always see the front
//! buffer), trilinear point sampling, and interpolated central-difference
//! gradients.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::EngineError;
use crate::math::Vec3;
use crate::schedule::Operation;

/// Explicit-Euler stability bound for the 3-D 7-point stencil.
pub const MAX_DIFFUSION_NUMBER: f64 = 1.0 / 6.0;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Boundary {
    /// Zero-flux walls: mass is conserved when decay is zero.
    Closed,
    /// Zero-value walls: substance leaks out.
    Absorbing,
}

pub struct DiffusionGrid {
    name: String,
    origin: Vec3,
    spacing: f64,
    dims: [usize; 3],
    front: Vec<f64>,
    back: Vec<f64>,
    diffusion: f64,
    decay: f64,
    boundary: Boundary,
    oob_warnings: AtomicU64,
}

impl DiffusionGrid {
    pub fn new(
        name: impl Into<String>,
        origin: Vec3,
        dims: [usize; 3],
        spacing: f64,
        diffusion: f64,
        decay: f64,
        boundary: Boundary,
    ) -> Result<Self, EngineError> {
        let name = name.into();
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(EngineError::InvalidParameter(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(EngineError::InvalidParameter("lattice dims must be non-zero".into()));
        }
        if diffusion < 0.0 || decay < 0.0 {
            return Err(EngineError::InvalidParameter(
                "diffusion coefficient and decay rate must be non-negative".into(),
            ));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(DiffusionGrid {
            name,
            origin,
            spacing,
            dims,
            front: vec![0.0; n],
            back: vec![0.0; n],
            diffusion,
            decay,
            boundary,
            oob_warnings: AtomicU64::new(0),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn diffusion_coefficient(&self) -> f64 {
        self.diffusion
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Largest timestep satisfying D·Δt/h² ≤ 1/6.
    pub fn max_stable_dt(&self) -> f64 {
        if self.diffusion > 0.0 {
            MAX_DIFFUSION_NUMBER * self.spacing * self.spacing / self.diffusion
        } else {
            f64::INFINITY
        }
    }

    pub fn validate_dt(&self, dt: f64) -> Result<(), EngineError> {
        let number = self.diffusion * dt / (self.spacing * self.spacing);
        if number > MAX_DIFFUSION_NUMBER + 1e-15 {
            return Err(EngineError::DiffusionUnstable {
                substance: self.name.clone(),
                value: number,
                max: MAX_DIFFUSION_NUMBER,
            });
        }
        if self.decay * dt > 1.0 {
            return Err(EngineError::InvalidParameter(format!(
                "decay per step µ·dt = {} exceeds 1 for `{}`",
                self.decay * dt,
                self.name
            )));
        }
        Ok(())
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn node(&self, idx: [usize; 3]) -> f64 {
        self.front[self.index(idx[0], idx[1], idx[2])]
    }

    pub fn set_node(&mut self, idx: [usize; 3], value: f64) {
        let i = self.index(idx[0], idx[1], idx[2]);
        self.front[i] = value.max(0.0);
    }

    pub fn node_position(&self, idx: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(
                idx[0] as f64 * self.spacing,
                idx[1] as f64 * self.spacing,
                idx[2] as f64 * self.spacing,
            )
    }

    pub fn data(&self) -> &[f64] {
        &self.front
    }

    pub fn set_uniform(&mut self, value: f64) {
        let v = value.max(0.0);
        self.front.iter_mut().for_each(|c| *c = v);
    }

    /// Gaussian profile along one axis (0 = x, 1 = y, 2 = z), uniform across
    /// the other two: c = amplitude·exp(−(coord − mean)²/(2σ²)).
    pub fn init_gaussian_axis(
        &mut self,
        axis: usize,
        mean: f64,
        sigma: f64,
        amplitude: f64,
    ) -> Result<(), EngineError> {
        if !(sigma > 0.0) {
            return Err(EngineError::InvalidParameter(format!(
                "gaussian sigma must be positive, got {sigma}"
            )));
        }
        if axis > 2 {
            return Err(EngineError::InvalidParameter(format!("axis must be 0..=2, got {axis}")));
        }
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let coord = self.node_position([i, j, k]).to_array()[axis];
                    let d = coord - mean;
                    let value = amplitude * (-d * d / (2.0 * sigma * sigma)).exp();
                    let idx = self.index(i, j, k);
                    self.front[idx] = value;
                }
            }
        }
        Ok(())
    }

    /// Adds `amount` to the node nearest to `position` (agent secretion).
    pub fn deposit_nearest(&mut self, position: Vec3, amount: f64) {
        let to_idx = |v: f64, o: f64, n: usize| -> usize {
            (((v - o) / self.spacing).round() as i64).clamp(0, n as i64 - 1) as usize
        };
        let i = to_idx(position.x, self.origin.x, self.dims[0]);
        let j = to_idx(position.y, self.origin.y, self.dims[1]);
        let k = to_idx(position.z, self.origin.z, self.dims[2]);
        let idx = self.index(i, j, k);
        self.front[idx] = (self.front[idx] + amount).max(0.0);
    }

    /// Total lattice mass Σ c·h³.
    pub fn total_mass(&self) -> f64 {
        let cell = self.spacing * self.spacing * self.spacing;
        self.front.iter().sum::<f64>() * cell
    }

    /// One explicit-Euler step. Negative results are clamped to zero.
    pub fn step(&mut self, dt: f64, parallel: bool) {
        let [nx, ny, nz] = self.dims;
        let alpha = self.diffusion * dt / (self.spacing * self.spacing);
        let decay = self.decay * dt;
        let front = &self.front;
        let boundary = self.boundary;

        let slab = nx * ny;
        let update_slab = |k: usize, out: &mut [f64]| {
            for j in 0..ny {
                for i in 0..nx {
                    let c = front[(k * ny + j) * nx + i];
                    let fetch = |ii: i64, jj: i64, kk: i64| -> f64 {
                        if ii < 0
                            || jj < 0
                            || kk < 0
                            || ii >= nx as i64
                            || jj >= ny as i64
                            || kk >= nz as i64
                        {
                            match boundary {
                                Boundary::Closed => c,
                                Boundary::Absorbing => 0.0,
                            }
                        } else {
                            front[(kk as usize * ny + jj as usize) * nx + ii as usize]
                        }
                    };
                    let (i64i, i64j, i64k) = (i as i64, j as i64, k as i64);
                    let lap = fetch(i64i - 1, i64j, i64k)
                        + fetch(i64i + 1, i64j, i64k)
                        + fetch(i64i, i64j - 1, i64k)
                        + fetch(i64i, i64j + 1, i64k)
                        + fetch(i64i, i64j, i64k - 1)
                        + fetch(i64i, i64j, i64k + 1)
                        - 6.0 * c;
                    out[j * nx + i] = (c + alpha * lap - decay * c).max(0.0);
                }
            }
        };

        #[cfg(feature = "parallel")]
        if parallel && nz > 1 {
            use rayon::prelude::*;
            self.back
                .par_chunks_mut(slab)
                .enumerate()
                .for_each(|(k, out)| update_slab(k, out));
            std::mem::swap(&mut self.front, &mut self.back);
            return;
        }
        let _ = parallel;
        for (k, out) in self.back.chunks_mut(slab).enumerate() {
            update_slab(k, out);
        }
        std::mem::swap(&mut self.front, &mut self.back);
    }

    fn clamp_local(&self, position: Vec3) -> (Vec3, bool) {
        let hi = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        );
        let local = (position - self.origin) / self.spacing;
        let clamped = local.max_components(Vec3::ZERO).min_components(hi);
        (clamped, clamped != local)
    }

    /// Trilinear interpolation of the 8 surrounding nodes. Out-of-bounds
    /// positions sample the clamped boundary value and bump a warning
    /// counter.
    pub fn concentration_at(&self, position: Vec3) -> f64 {
        let (local, clamped) = self.clamp_local(position);
        if clamped {
            self.oob_warnings.fetch_add(1, Ordering::Relaxed);
        }
        self.trilinear(local, |i, j, k| self.front[self.index(i, j, k)])
    }

    /// Central-difference gradient on the lattice (one-sided at boundary
    /// layers), trilinearly interpolated.
    pub fn gradient_at(&self, position: Vec3) -> Vec3 {
        let (local, clamped) = self.clamp_local(position);
        if clamped {
            self.oob_warnings.fetch_add(1, Ordering::Relaxed);
        }
        Vec3::new(
            self.trilinear(local, |i, j, k| self.node_gradient_axis(i, j, k, 0)),
            self.trilinear(local, |i, j, k| self.node_gradient_axis(i, j, k, 1)),
            self.trilinear(local, |i, j, k| self.node_gradient_axis(i, j, k, 2)),
        )
    }

    fn node_gradient_axis(&self, i: usize, j: usize, k: usize, axis: usize) -> f64 {
        let n = self.dims[axis];
        if n == 1 {
            return 0.0;
        }
        let pos = [i, j, k];
        let fetch = |v: usize| -> f64 {
            let mut q = pos;
            q[axis] = v;
            self.front[self.index(q[0], q[1], q[2])]
        };
        let x = pos[axis];
        if x == 0 {
            (fetch(1) - fetch(0)) / self.spacing
        } else if x == n - 1 {
            (fetch(n - 1) - fetch(n - 2)) / self.spacing
        } else {
            (fetch(x + 1) - fetch(x - 1)) / (2.0 * self.spacing)
        }
    }

    fn trilinear(&self, local: Vec3, value: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let cell = |v: f64, n: usize| -> (usize, f64) {
            if n == 1 {
                return (0, 0.0);
            }
            let i = (v.floor() as usize).min(n - 2);
            (i, v - i as f64)
        };
        let (i0, fx) = cell(local.x, self.dims[0]);
        let (j0, fy) = cell(local.y, self.dims[1]);
        let (k0, fz) = cell(local.z, self.dims[2]);
        let i1 = (i0 + 1).min(self.dims[0] - 1);
        let j1 = (j0 + 1).min(self.dims[1] - 1);
        let k1 = (k0 + 1).min(self.dims[2] - 1);

        let c000 = value(i0, j0, k0);
        let c100 = value(i1, j0, k0);
        let c010 = value(i0, j1, k0);
        let c110 = value(i1, j1, k0);
        let c001 = value(i0, j0, k1);
        let c101 = value(i1, j0, k1);
        let c011 = value(i0, j1, k1);
        let c111 = value(i1, j1, k1);

        let c00 = c000 + (c100 - c000) * fx;
        let c10 = c010 + (c110 - c010) * fx;
        let c01 = c001 + (c101 - c001) * fx;
        let c11 = c011 + (c111 - c011) * fx;
        let c0 = c00 + (c10 - c00) * fy;
        let c1 = c01 + (c11 - c01) * fy;
        c0 + (c1 - c0) * fz
    }

    pub fn oob_warning_count(&self) -> u64 {
        self.oob_warnings.load(Ordering::Relaxed)
    }

    /// CSV dump of node coordinates and values (x,y,z,value per line).
    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "x,y,z,value")?;
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    let p = self.node_position([i, j, k]);
                    writeln!(out, "{},{},{},{}", p.x, p.y, p.z, self.front[self.index(i, j, k)])?;
                }
            }
        }
        Ok(())
    }
}

/// Named field registry with deterministic iteration order.
pub struct Fields {
    map: BTreeMap<String, DiffusionGrid>,
}

impl Fields {
    pub fn new() -> Self {
        Fields { map: BTreeMap::new() }
    }

    pub fn insert(&mut self, grid: DiffusionGrid) -> Result<(), EngineError> {
        if self.map.contains_key(grid.name()) {
            return Err(EngineError::DuplicateField(grid.name().to_string()));
        }
        self.map.insert(grid.name().to_string(), grid);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DiffusionGrid> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DiffusionGrid> {
        self.map.get_mut(name)
    }

    pub fn expect(&self, name: &str) -> Result<&DiffusionGrid, EngineError> {
        self.get(name).ok_or_else(|| EngineError::UnknownField(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &DiffusionGrid> {
        self.map.values()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl Default for Fields {
    fn default() -> Self {
        Self::new()
    }
}

/// Standalone operation stepping one named field.
pub fn diffusion_op<P: crate::agent::Payload>(
    field: impl Into<String>,
    frequency: u64,
) -> Operation<P> {
    let name = field.into();
    Operation::standalone(format!("diffusion:{name}"), frequency, move |ctx: &mut crate::schedule::StandaloneCtx<'_, P>| {
        let parallel = ctx.params.parallel;
        let dt = ctx.params.dt;
        let grid = ctx
            .fields
            .get_mut(&name)
            .ok_or_else(|| EngineError::UnknownField(name.clone()))?;
        grid.step(dt, parallel);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(dims: [usize; 3], d: f64, mu: f64, b: Boundary) -> DiffusionGrid {
        DiffusionGrid::new("s", Vec3::ZERO, dims, 1.0, d, mu, b).unwrap()
    }

    #[test]
    fn stability_rejection_names_the_bound() {
        let g = grid([8, 8, 8], 1.0, 0.0, Boundary::Closed);
        let err = g.validate_dt(1.0).unwrap_err();
        match err {
            EngineError::DiffusionUnstable { value, max, .. } => {
                assert!((value - 1.0).abs() < 1e-12);
                assert!((max - 1.0 / 6.0).abs() < 1e-15);
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(g.validate_dt(1.0 / 6.0).is_ok());
        assert!((g.max_stable_dt() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_field_is_a_fixed_point_when_closed() {
        let mut g = grid([6, 5, 4], 1.0, 0.0, Boundary::Closed);
        g.set_uniform(3.5);
        for _ in 0..10 {
            g.step(0.1, false);
        }
        for &c in g.data() {
            assert!((c - 3.5).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_decay_is_exact() {
        let mut g = grid([5, 5, 5], 0.0, 0.1, Boundary::Closed);
        g.set_uniform(2.0);
        let n = 40;
        for _ in 0..n {
            g.step(1.0, false);
        }
        let expected = 2.0 * (1.0f64 - 0.1).powi(n);
        for &c in g.data() {
            assert!(((c - expected) / expected).abs() < 1e-12, "{c} vs {expected}");
        }
    }

    #[test]
    fn gaussian_init_matches_closed_form() {
        let mut g = grid([3, 3, 41], 0.0, 0.0, Boundary::Closed);
        g.init_gaussian_axis(2, 20.0, 5.0, 2.0).unwrap();
        assert!((g.node([1, 1, 20]) - 2.0).abs() < 1e-12);
        let one_sigma = g.node([0, 2, 25]);
        assert!((one_sigma - 2.0 * (-0.5f64).exp()).abs() < 1e-12);
        assert_eq!(g.node([0, 0, 15]), g.node([2, 1, 25]));
    }

    #[test]
    fn trilinear_reproduces_linear_fields_exactly() {
        let mut g = grid([9, 9, 9], 0.0, 0.0, Boundary::Closed);
        // c = 2x + 3y - z + 10 (clamped to >= 0 within bounds used).
        for k in 0..9 {
            for j in 0..9 {
                for i in 0..9 {
                    let p = g.node_position([i, j, k]);
                    g.set_node([i, j, k], 2.0 * p.x + 3.0 * p.y - p.z + 10.0);
                }
            }
        }
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64) * 8.0
        };
        for _ in 0..200 {
            let p = Vec3::new(next(), next(), next());
            let expected = 2.0 * p.x + 3.0 * p.y - p.z + 10.0;
            assert!((g.concentration_at(p) - expected).abs() < 1e-12);
            let grad = g.gradient_at(p);
            assert!((grad - Vec3::new(2.0, 3.0, -1.0)).norm() < 1e-12);
        }
        assert_eq!(g.oob_warning_count(), 0);
        // Node and midpoint checks.
        assert!((g.concentration_at(g.node_position([4, 4, 4])) - g.node([4, 4, 4])).abs() < 1e-15);
    }

    #[test]
    fn out_of_bounds_sampling_clamps_and_warns() {
        let mut g = grid([4, 4, 4], 0.0, 0.0, Boundary::Closed);
        g.set_uniform(1.0);
        let v = g.concentration_at(Vec3::new(-5.0, 0.0, 0.0));
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(g.oob_warning_count(), 1);
    }

    #[test]
    fn uniform_gradient_is_zero() {
        let mut g = grid([5, 5, 5], 0.0, 0.0, Boundary::Closed);
        g.set_uniform(7.0);
        assert_eq!(g.gradient_at(Vec3::new(2.0, 2.0, 2.0)), Vec3::ZERO);
    }

    #[test]
    fn closed_boundary_conserves_mass() {
        let mut g = grid([12, 10, 8], 1.0, 0.0, Boundary::Closed);
        g.set_node([5, 5, 4], 100.0);
        g.set_node([2, 1, 1], 40.0);
        let m0 = g.total_mass();
        for _ in 0..500 {
            g.step(1.0 / 6.0, false);
        }
        let drift = ((g.total_mass() - m0) / m0).abs();
        assert!(drift < 1e-12, "mass drift {drift}");
    }

    #[test]
    fn absorbing_boundary_leaks_mass() {
        let mut g = grid([8, 8, 8], 1.0, 0.0, Boundary::Absorbing);
        g.set_node([4, 4, 4], 100.0);
        let m0 = g.total_mass();
        for _ in 0..200 {
            g.step(1.0 / 6.0, false);
        }
        assert!(g.total_mass() < m0 * 0.5);
    }

    #[test]
    fn maximum_principle_holds_without_decay() {
        let mut g = grid([10, 10, 10], 0.5, 0.0, Boundary::Closed);
        g.set_node([3, 3, 3], 9.0);
        g.set_node([7, 7, 7], 4.0);
        let mut prev_max = 9.0;
        for _ in 0..100 {
            g.step(0.2, false);
            let max = g.data().iter().cloned().fold(0.0f64, f64::max);
            assert!(max <= prev_max + 1e-12);
            prev_max = max;
        }
    }

    #[test]
    fn stepping_is_linear() {
        let mut a = grid([7, 7, 7], 0.8, 0.02, Boundary::Closed);
        let mut b = grid([7, 7, 7], 0.8, 0.02, Boundary::Closed);
        let mut sum = grid([7, 7, 7], 0.8, 0.02, Boundary::Closed);
        for k in 0..7 {
            for j in 0..7 {
                for i in 0..7 {
                    let va = ((i * 31 + j * 17 + k * 7) % 13) as f64;
                    let vb = ((i * 5 + j * 11 + k * 3) % 9) as f64;
                    a.set_node([i, j, k], va);
                    b.set_node([i, j, k], vb);
                    sum.set_node([i, j, k], va + vb);
                }
            }
        }
        for _ in 0..50 {
            a.step(0.15, false);
            b.step(0.15, false);
            sum.step(0.15, false);
        }
        for idx in 0..a.data().len() {
            assert!((a.data()[idx] + b.data()[idx] - sum.data()[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_sequential_steps_agree_bitwise() {
        let build = || {
            let mut g = grid([16, 16, 16], 1.0, 0.01, Boundary::Closed);
            for k in 0..16 {
                for j in 0..16 {
                    for i in 0..16 {
                        g.set_node([i, j, k], ((i * j + k * 3) % 17) as f64);
                    }
                }
            }
            g
        };
        let mut s = build();
        let mut p = build();
        for _ in 0..20 {
            s.step(0.1, false);
            p.step(0.1, true);
        }
        assert_eq!(s.data(), p.data());
    }
}
