//! Pairwise contact forces and overdamped position integration.
//!
//! Linear spring repulsion with short-range linear adhesion; displacements
//! are first-order (Δp = F/η·Δt) with a per-step cap. Every agent recomputes
//! the forces for its own pairs from the step-start snapshot, so the loop is
//! write-free across agents and Newton's third law holds by construction.

use crate::agent::{AgentId, Payload, Shape};
use crate::error::EngineError;
use crate::event::tie_break_axis;
use crate::math::{segment_closest_t, Vec3};
use crate::schedule::Operation;
use crate::snapshot::Snapshot;

#[derive(Clone, Copy, Debug)]
pub struct MechanicsParams {
    /// Repulsion stiffness, force per µm of overlap.
    pub repulsion_k: f64,
    /// Adhesion stiffness, force per µm of (negative) overlap.
    pub adhesion_k: f64,
    /// Gap beyond which adhesion vanishes, µm.
    pub adhesion_range: f64,
    /// Drag coefficient, force·step/µm.
    pub viscosity: f64,
    /// Displacement cap per step, µm.
    pub max_displacement: f64,
}

impl Default for MechanicsParams {
    fn default() -> Self {
        MechanicsParams {
            repulsion_k: 10.0,
            adhesion_k: 4.0,
            adhesion_range: 0.2,
            viscosity: 1.0,
            max_displacement: 3.0,
        }
    }
}

impl MechanicsParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.repulsion_k > 0.0 && self.viscosity > 0.0 && self.max_displacement > 0.0) {
            return Err(EngineError::InvalidParameter(
                "mechanics requires repulsion_k > 0, viscosity > 0, max_displacement > 0"
                    .to_string(),
            ));
        }
        if self.adhesion_k < 0.0 || self.adhesion_range < 0.0 {
            return Err(EngineError::InvalidParameter(
                "adhesion coefficients must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ContactForce {
    /// Force on the first body.
    pub force: Vec3,
    /// Overlap δ = (r_a + r_b) − distance; negative when separated.
    pub overlap: f64,
}

impl ContactForce {
    pub const NONE: ContactForce = ContactForce { force: Vec3::ZERO, overlap: 0.0 };
}

/// Contact force on sphere `a` from sphere `b`. δ > 0 gives k·δ repulsion
/// along the line of centers, −range < δ ≤ 0 gives linear adhesion, anything
/// farther is force-free. Coincident centers fall back to a deterministic
/// axis derived from the lower id.
pub fn sphere_sphere_force(
    pa: Vec3,
    da: f64,
    ida: AgentId,
    pb: Vec3,
    db: f64,
    idb: AgentId,
    params: &MechanicsParams,
) -> ContactForce {
    let delta = pa - pb;
    let dist = delta.norm();
    let overlap = (da + db) * 0.5 - dist;
    if overlap <= -params.adhesion_range {
        return ContactForce { force: Vec3::ZERO, overlap };
    }
    let dir = if dist > 0.0 {
        delta / dist
    } else {
        let axis = tie_break_axis(ida.min(idb));
        if ida < idb {
            axis
        } else {
            -axis
        }
    };
    let k = if overlap > 0.0 { params.repulsion_k } else { params.adhesion_k };
    ContactForce { force: dir * (k * overlap), overlap }
}

/// Contact force on a sphere from a cylinder, via the closest point on the
/// cylinder's axis segment. Returns the force on the sphere and the closest
/// point parameter t ∈ [0, 1]. A zero-length segment degenerates to the
/// sphere–sphere law.
pub fn sphere_segment_force(
    sphere_pos: Vec3,
    sphere_diameter: f64,
    sphere_id: AgentId,
    seg_a: Vec3,
    seg_b: Vec3,
    seg_diameter: f64,
    seg_id: AgentId,
    params: &MechanicsParams,
) -> (ContactForce, f64) {
    let t = segment_closest_t(seg_a, seg_b, sphere_pos);
    let closest = seg_a + (seg_b - seg_a) * t;
    let f = sphere_sphere_force(
        sphere_pos,
        sphere_diameter,
        sphere_id,
        closest,
        seg_diameter,
        seg_id,
        params,
    );
    (f, t)
}

/// Force on snapshot agent `i` from snapshot agent `j`. Cylinder–cylinder
/// pairs are force-free (neurite chains transmit forces through their
/// springs instead).
pub fn pair_force(snapshot: &Snapshot<impl Payload>, i: usize, j: usize, params: &MechanicsParams) -> Vec3 {
    match (snapshot.shape(i), snapshot.shape(j)) {
        (Shape::Sphere, Shape::Sphere) => sphere_sphere_force(
            snapshot.position(i),
            snapshot.diameter(i),
            snapshot.id(i),
            snapshot.position(j),
            snapshot.diameter(j),
            snapshot.id(j),
            params,
        )
        .force,
        (Shape::Sphere, Shape::Cylinder { proximal, distal }) => {
            sphere_segment_force(
                snapshot.position(i),
                snapshot.diameter(i),
                snapshot.id(i),
                *proximal,
                *distal,
                snapshot.diameter(j),
                snapshot.id(j),
                params,
            )
            .0
            .force
        }
        (Shape::Cylinder { proximal, distal }, Shape::Sphere) => {
            // Reaction to the sphere-side force, computed from identical
            // inputs so the pair cancels exactly.
            -sphere_segment_force(
                snapshot.position(j),
                snapshot.diameter(j),
                snapshot.id(j),
                *proximal,
                *distal,
                snapshot.diameter(i),
                snapshot.id(i),
                params,
            )
            .0
            .force
        }
        (Shape::Cylinder { .. }, Shape::Cylinder { .. }) => Vec3::ZERO,
    }
}

/// The engine's "calculate mechanical forces" agent operation for spheres.
/// Sums pair forces over neighbors within one box edge, converts to an
/// overdamped displacement, clamps it, and applies it. Agents in stationary
/// regions are skipped when the optimization is enabled; cylinders are the
/// neurite module's responsibility.
pub fn mechanics_op<P: Payload>() -> Operation<P> {
    Operation::agent("mechanical_forces", 1, |ctx: &mut crate::schedule::AgentCtx<'_, P>| {
        if !ctx.agent.shape.is_sphere() {
            return Ok(());
        }
        if ctx.params.stationary_skip && ctx.snapshot.is_stationary(ctx.index) {
            return Ok(());
        }
        let params = ctx.params.mechanics;
        let radius = ctx.snapshot.grid().edge();
        let mut force = Vec3::ZERO;
        ctx.snapshot.for_each_neighbor(ctx.index, radius, |j| {
            force += pair_force(ctx.snapshot, ctx.index, j, &params);
        })?;
        if !force.is_finite() {
            // Rescan to name the offending pair.
            let mut culprit = None;
            ctx.snapshot.for_each_neighbor(ctx.index, radius, |j| {
                if culprit.is_none() && !pair_force(ctx.snapshot, ctx.index, j, &params).is_finite()
                {
                    culprit = Some(ctx.snapshot.id(j));
                }
            })?;
            return Err(EngineError::NonFiniteForce(
                ctx.agent.id(),
                culprit.unwrap_or(ctx.agent.id()),
            ));
        }
        let displacement =
            (force * (ctx.params.dt / params.viscosity)).clamp_norm(params.max_displacement);
        ctx.agent.position += displacement;
        Ok(())
    })
}
