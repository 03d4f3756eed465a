//! Agents: discrete simulation entities with geometry, behaviors and a
//! scenario-defined payload.

use std::sync::Arc;

use crate::behavior::Behavior;
use crate::error::EngineError;
use crate::math::{sphere_volume, Vec3};

/// Marker bound for scenario payload types carried by agents.
pub trait Payload: Clone + Send + Sync + 'static {}
impl<T: Clone + Send + Sync + 'static> Payload for T {}

/// Stable agent handle. Unique among live agents and never reused within a run.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AgentId(u64);

impl AgentId {
    pub(crate) const UNASSIGNED: AgentId = AgentId(u64::MAX);

    #[inline]
    pub fn raw(self) -> u64 {
        self.0
    }

    /// Reconstructs an id from its raw value (for deserialization and tests).
    #[inline]
    pub fn from_raw(raw: u64) -> AgentId {
        AgentId(raw)
    }

    #[inline]
    pub(crate) fn is_assigned(self) -> bool {
        self.0 != u64::MAX
    }
}

#[derive(Clone, Debug)]
pub enum Shape {
    Sphere,
    /// Cylinder given by its axis segment; `diameter` on the agent is the
    /// cylinder thickness. The agent position is kept at the midpoint.
    Cylinder { proximal: Vec3, distal: Vec3 },
}

impl Shape {
    pub fn is_sphere(&self) -> bool {
        matches!(self, Shape::Sphere)
    }
}

pub struct Agent<P> {
    id: AgentId,
    pub shape: Shape,
    /// Center of mass, µm.
    pub position: Vec3,
    /// Sphere diameter, or cylinder thickness, µm. Always > 0.
    pub diameter: f64,
    behaviors: Vec<Arc<dyn Behavior<P>>>,
    pub payload: P,
}

impl<P> Agent<P> {
    pub fn sphere(position: Vec3, diameter: f64, payload: P) -> Self {
        Agent {
            id: AgentId::UNASSIGNED,
            shape: Shape::Sphere,
            position,
            diameter,
            behaviors: Vec::new(),
            payload,
        }
    }

    pub fn cylinder(proximal: Vec3, distal: Vec3, diameter: f64, payload: P) -> Self {
        Agent {
            id: AgentId::UNASSIGNED,
            shape: Shape::Cylinder { proximal, distal },
            position: proximal.midpoint(distal),
            diameter,
            behaviors: Vec::new(),
            payload,
        }
    }

    #[inline]
    pub fn id(&self) -> AgentId {
        self.id
    }

    pub(crate) fn set_id(&mut self, id: AgentId) {
        self.id = id;
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.diameter * 0.5
    }

    /// Volume in µm³ (sphere or cylinder by shape).
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Sphere => sphere_volume(self.diameter),
            Shape::Cylinder { proximal, distal } => {
                let r = self.radius();
                std::f64::consts::PI * r * r * proximal.distance(*distal)
            }
        }
    }

    /// Diameter of the bounding sphere used for grid box sizing. Cylinders
    /// use their full length so the 27-box search stays sufficient.
    pub fn bounding_diameter(&self) -> f64 {
        match &self.shape {
            Shape::Sphere => self.diameter,
            Shape::Cylinder { proximal, distal } => proximal.distance(*distal).max(self.diameter),
        }
    }

    pub fn add_behavior(&mut self, behavior: Arc<dyn Behavior<P>>) {
        self.behaviors.push(behavior);
    }

    pub fn behaviors(&self) -> &[Arc<dyn Behavior<P>>] {
        &self.behaviors
    }

    pub(crate) fn behaviors_mut(&mut self) -> &mut Vec<Arc<dyn Behavior<P>>> {
        &mut self.behaviors
    }

    /// Cylinder endpoints; `None` for spheres.
    pub fn endpoints(&self) -> Option<(Vec3, Vec3)> {
        match &self.shape {
            Shape::Sphere => None,
            Shape::Cylinder { proximal, distal } => Some((*proximal, *distal)),
        }
    }

    /// Sets cylinder endpoints and keeps the position at the midpoint.
    pub fn set_endpoints(&mut self, proximal: Vec3, distal: Vec3) {
        self.shape = Shape::Cylinder { proximal, distal };
        self.position = proximal.midpoint(distal);
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.diameter > 0.0) || !self.diameter.is_finite() {
            return Err(EngineError::InvalidGeometry(format!(
                "diameter must be positive and finite, got {}",
                self.diameter
            )));
        }
        if !self.position.is_finite() {
            return Err(EngineError::InvalidGeometry(format!(
                "position must be finite, got {:?}",
                self.position
            )));
        }
        if let Shape::Cylinder { proximal, distal } = &self.shape {
            if !proximal.is_finite() || !distal.is_finite() {
                return Err(EngineError::InvalidGeometry(
                    "cylinder endpoints must be finite".to_string(),
                ));
            }
        }
        Ok(())
    }
}

impl<P: Clone> Clone for Agent<P> {
    fn clone(&self) -> Self {
        Agent {
            id: self.id,
            shape: self.shape.clone(),
            position: self.position,
            diameter: self.diameter,
            behaviors: self.behaviors.clone(),
            payload: self.payload.clone(),
        }
    }
}
