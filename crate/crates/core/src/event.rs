//! Agent-creation events. Events are enqueued during a step and applied at
//! the step barrier; applying an event mutates nothing but the parent agent
//! and the agent(s) it creates.

use crate::agent::{Agent, AgentId};
use crate::behavior::EventKind;
use crate::error::EngineError;
use crate::math::{sphere_diameter, sphere_volume, Vec3};
use crate::rng;

/// Hands out the ids the event's new agents will carry. Ids are consumed in
/// creation order and validated by the engine on insertion.
pub struct IdAlloc<'a> {
    next: &'a mut u64,
}

impl<'a> IdAlloc<'a> {
    pub(crate) fn new(next: &'a mut u64) -> Self {
        IdAlloc { next }
    }

    pub fn allocate(&mut self) -> AgentId {
        let id = AgentId::from_raw(*self.next);
        *self.next += 1;
        id
    }
}

pub trait CreationEvent<P>: Send {
    fn kind(&self) -> EventKind;

    /// The only pre-existing agent the event may mutate.
    fn parent(&self) -> AgentId;

    /// Whether the new agents inherit the parent's behaviors through the
    /// copy/remove flags. Spawn-style events attach their own behaviors.
    fn inherit_behaviors(&self) -> bool {
        true
    }

    /// Applies the event: mutates the parent as needed and returns the new
    /// agents, each carrying an id from `ids` in allocation order.
    fn apply(
        &self,
        parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError>;
}

/// Splits the parent sphere's volume: the daughter receives `volume_ratio`
/// of it and is displaced along `axis` so the two spheres touch. Total
/// volume is conserved exactly.
pub struct CellDivisionEvent {
    parent: AgentId,
    volume_ratio: f64,
    axis: Vec3,
}

impl CellDivisionEvent {
    pub fn new(parent: AgentId, volume_ratio: f64, axis: Vec3) -> Result<Self, EngineError> {
        if !(volume_ratio > 0.0 && volume_ratio < 1.0) {
            return Err(EngineError::InvalidEvent(format!(
                "division volume ratio must lie in (0, 1), got {volume_ratio}"
            )));
        }
        if axis.normalized().is_none() {
            return Err(EngineError::InvalidEvent("division axis must be non-zero".to_string()));
        }
        Ok(CellDivisionEvent { parent, volume_ratio, axis })
    }
}

impl<P: Clone + Send> CreationEvent<P> for CellDivisionEvent {
    fn kind(&self) -> EventKind {
        EventKind::CellDivision
    }

    fn parent(&self) -> AgentId {
        self.parent
    }

    fn apply(
        &self,
        parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError> {
        if !parent.shape.is_sphere() {
            return Err(EngineError::InvalidEvent(
                "cell division applies to spherical agents".to_string(),
            ));
        }
        let axis = self.axis.normalized().expect("validated at construction");
        let total = sphere_volume(parent.diameter);
        let daughter_volume = total * self.volume_ratio;
        let parent_volume = total - daughter_volume;
        parent.diameter = sphere_diameter(parent_volume);

        let daughter_diameter = sphere_diameter(daughter_volume);
        let offset = parent.radius() + daughter_diameter * 0.5;
        let mut daughter =
            Agent::sphere(parent.position + axis * offset, daughter_diameter, parent.payload.clone());
        daughter.set_id(ids.allocate());
        Ok(vec![daughter])
    }
}

/// Deterministic unit axis for degenerate geometry, derived from an id.
pub fn tie_break_axis(id: AgentId) -> Vec3 {
    let mut s = rand::SeedableRng::seed_from_u64(rng::mix(id.raw() ^ 0x7469_6272_6561_6b21));
    rng::unit_vector::<rand::rngs::SmallRng>(&mut s)
}

/// Creates one unrelated agent at the barrier (scenario-defined spawning).
pub struct SpawnAgentEvent<P> {
    parent: AgentId,
    template: Agent<P>,
}

impl<P> SpawnAgentEvent<P> {
    pub fn new(parent: AgentId, template: Agent<P>) -> Self {
        SpawnAgentEvent { parent, template }
    }
}

impl<P: Clone + Send + Sync + 'static> CreationEvent<P> for SpawnAgentEvent<P> {
    fn kind(&self) -> EventKind {
        EventKind::Spawn
    }

    fn parent(&self) -> AgentId {
        self.parent
    }

    fn inherit_behaviors(&self) -> bool {
        false
    }

    fn apply(
        &self,
        _parent: &mut Agent<P>,
        ids: &mut IdAlloc<'_>,
    ) -> Result<Vec<Agent<P>>, EngineError> {
        let mut agent = self.template.clone();
        agent.set_id(ids.allocate());
        Ok(vec![agent])
    }
}

/// Per-step buffers for structural changes, merged deterministically at the
/// barrier (events stable-sorted by parent id; removals sorted and deduped).
pub struct StepBuffers<P> {
    pub(crate) events: Vec<Box<dyn CreationEvent<P>>>,
    pub(crate) removals: Vec<AgentId>,
    pub(crate) failure: Option<Failure>,
}

pub(crate) struct Failure {
    pub agent_index: usize,
    pub agent: AgentId,
    pub error: EngineError,
}

impl<P> Default for StepBuffers<P> {
    fn default() -> Self {
        StepBuffers { events: Vec::new(), removals: Vec::new(), failure: None }
    }
}

impl<P> StepBuffers<P> {
    pub(crate) fn merge(mut self, mut other: StepBuffers<P>) -> StepBuffers<P> {
        self.events.append(&mut other.events);
        self.removals.append(&mut other.removals);
        self.failure = match (self.failure.take(), other.failure.take()) {
            (Some(a), Some(b)) => Some(if a.agent_index <= b.agent_index { a } else { b }),
            (a, b) => a.or(b),
        };
        self
    }
}

/// Write side handed to behaviors and operations for enqueueing structural
/// changes.
pub struct EventSink<'a, P> {
    pub(crate) events: &'a mut Vec<Box<dyn CreationEvent<P>>>,
    pub(crate) removals: &'a mut Vec<AgentId>,
}

impl<'a, P> EventSink<'a, P> {
    pub fn emit<E: CreationEvent<P> + 'static>(&mut self, event: E) {
        self.events.push(Box::new(event));
    }

    pub fn emit_boxed(&mut self, event: Box<dyn CreationEvent<P>>) {
        self.events.push(event);
    }

    /// Requests removal at the barrier. Removing an already-dead agent is a
    /// warning, not an error.
    pub fn request_removal(&mut self, id: AgentId) {
        self.removals.push(id);
    }
}
