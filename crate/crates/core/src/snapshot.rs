//! Step-start snapshot of the live population plus its spatial index.
//!
//! Agent operations read neighbor state from here while mutating their own
//! agent, which keeps parallel execution free of cross-agent aliasing and
//! pins every within-step read to the state at the start of the step.

use crate::agent::{Agent, AgentId, Payload, Shape};
use crate::error::EngineError;
use crate::exec;
use crate::grid::{GridInput, GridSummary, UniformGrid};
use crate::math::Vec3;
use crate::store::AgentStore;

pub struct Snapshot<P> {
    ids: Vec<AgentId>,
    positions: Vec<Vec3>,
    diameters: Vec<f64>,
    shapes: Vec<Shape>,
    payloads: Vec<P>,
    grid: UniformGrid,
}

impl<P: Payload> Snapshot<P> {
    pub(crate) fn build(
        store: &AgentStore<P>,
        min_box_edge: f64,
        parallel: bool,
        tracking: Option<(&GridSummary, &[Vec3], f64)>,
    ) -> Snapshot<P> {
        let agents = store.agents();
        let ids: Vec<AgentId> = exec::map_collect(agents, parallel, |_, a| a.id());
        let positions: Vec<Vec3> = exec::map_collect(agents, parallel, |_, a| a.position);
        let diameters: Vec<f64> = exec::map_collect(agents, parallel, |_, a| a.diameter);
        let shapes: Vec<Shape> = exec::map_collect(agents, parallel, |_, a| a.shape.clone());
        let payloads: Vec<P> = exec::map_collect(agents, parallel, |_, a| a.payload.clone());
        let bounding: Vec<f64> = exec::map_collect(agents, parallel, |_, a| a.bounding_diameter());

        let input = GridInput { positions: &positions, bounding_diameters: &bounding, ids: &ids };
        let grid = match tracking {
            Some((prev, prev_pos, eps)) => {
                UniformGrid::build_tracked(&input, min_box_edge, parallel, prev, prev_pos, eps)
            }
            None => UniformGrid::build(&input, min_box_edge, parallel),
        };

        Snapshot { ids, positions, diameters, shapes, payloads, grid }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    pub fn id(&self, index: usize) -> AgentId {
        self.ids[index]
    }

    #[inline]
    pub fn position(&self, index: usize) -> Vec3 {
        self.positions[index]
    }

    #[inline]
    pub fn diameter(&self, index: usize) -> f64 {
        self.diameters[index]
    }

    #[inline]
    pub fn shape(&self, index: usize) -> &Shape {
        &self.shapes[index]
    }

    #[inline]
    pub fn payload(&self, index: usize) -> &P {
        &self.payloads[index]
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// Slot index of a live agent id at step start, by linear scan-free
    /// binary search (ids are in ascending slot order).
    pub fn index_of(&self, id: AgentId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    fn check_radius(&self, radius: f64) -> Result<(), EngineError> {
        if !(radius > 0.0) {
            return Err(EngineError::InvalidParameter(format!(
                "neighbor radius must be positive, got {radius}"
            )));
        }
        if radius > self.grid.edge() {
            return Err(EngineError::RadiusExceedsBox { radius, edge: self.grid.edge() });
        }
        Ok(())
    }

    /// Visits every agent (excluding `center` itself) whose center-to-center
    /// distance from `center` is at most `radius`, exactly once each.
    pub fn for_each_neighbor(
        &self,
        center: usize,
        radius: f64,
        mut visit: impl FnMut(usize),
    ) -> Result<(), EngineError> {
        self.check_radius(radius)?;
        let p = self.positions[center];
        let r_sq = radius * radius;
        let cell = self.grid.cell_of_agent(center);
        self.grid.for_each_in_neighborhood(cell, |slot| {
            let j = slot as usize;
            if j != center && (self.positions[j] - p).norm_sq() <= r_sq {
                visit(j);
            }
        });
        Ok(())
    }

    /// First neighbor satisfying `pred`, if any (short-circuits).
    pub fn find_neighbor(
        &self,
        center: usize,
        radius: f64,
        mut pred: impl FnMut(usize) -> bool,
    ) -> Result<Option<usize>, EngineError> {
        let mut found = None;
        self.for_each_neighbor(center, radius, |j| {
            if found.is_none() && pred(j) {
                found = Some(j);
            }
        })?;
        Ok(found)
    }

    pub fn neighbors(&self, center: usize, radius: f64) -> Result<Vec<usize>, EngineError> {
        let mut out = Vec::new();
        self.for_each_neighbor(center, radius, |j| out.push(j))?;
        Ok(out)
    }

    /// Neighbor query around an arbitrary position (the position itself need
    /// not belong to an agent); visits agents within `radius`.
    pub fn for_each_near(
        &self,
        position: Vec3,
        radius: f64,
        mut visit: impl FnMut(usize),
    ) -> Result<(), EngineError> {
        self.check_radius(radius)?;
        let r_sq = radius * radius;
        let cell = self.grid.cell_of_position(position);
        self.grid.for_each_in_neighborhood(cell, |slot| {
            let j = slot as usize;
            if (self.positions[j] - position).norm_sq() <= r_sq {
                visit(j);
            }
        });
        Ok(())
    }

    /// True when the agent sits in a stationary region (no motion or
    /// structural change in its 27-box neighborhood since the last step).
    pub fn is_stationary(&self, index: usize) -> bool {
        self.grid.is_agent_stationary(index)
    }
}
