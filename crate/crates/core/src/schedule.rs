//! Scheduler operations: agent operations run once per live agent per
//! scheduled step, standalone operations exactly once per scheduled step.

use std::sync::Arc;
use std::time::Duration;

use rand::rngs::SmallRng;

use crate::agent::{Agent, Payload};
use crate::diffusion::Fields;
use crate::error::EngineError;
use crate::event::EventSink;
use crate::sim::SimParams;
use crate::snapshot::Snapshot;
use crate::store::AgentStore;

/// Context handed to an agent-operation body for one agent. The body may
/// mutate its own agent, read anything from the step-start snapshot and the
/// fields, draw from its private random stream, and enqueue events.
pub struct AgentCtx<'a, P> {
    pub agent: &'a mut Agent<P>,
    /// Snapshot index of this agent (stable within the step).
    pub index: usize,
    pub snapshot: &'a Snapshot<P>,
    pub fields: &'a Fields,
    pub params: &'a SimParams,
    pub step: u64,
    pub rng: &'a mut SmallRng,
    pub events: EventSink<'a, P>,
}

impl<'a, P> AgentCtx<'a, P> {
    #[inline]
    pub fn dt(&self) -> f64 {
        self.params.dt
    }
}

/// Context for standalone operations, which run serially between parallel
/// phases and may touch the whole simulation state.
pub struct StandaloneCtx<'a, P: Payload> {
    pub store: &'a mut AgentStore<P>,
    pub fields: &'a mut Fields,
    pub snapshot: &'a Snapshot<P>,
    pub params: &'a SimParams,
    pub step: u64,
    pub rng: &'a mut SmallRng,
    pub events: EventSink<'a, P>,
}

impl<'a, P: Payload> StandaloneCtx<'a, P> {
    #[inline]
    pub fn dt(&self) -> f64 {
        self.params.dt
    }
}

pub type AgentOpFn<P> = dyn Fn(&mut AgentCtx<'_, P>) -> Result<(), EngineError> + Send + Sync;
pub type StandaloneOpFn<P> =
    dyn FnMut(&mut StandaloneCtx<'_, P>) -> Result<(), EngineError> + Send;

pub enum OpKind<P: Payload> {
    Agent(Arc<AgentOpFn<P>>),
    Standalone(Box<StandaloneOpFn<P>>),
}

pub struct Operation<P: Payload> {
    pub name: String,
    /// Execute on every step whose index is a multiple of this.
    pub frequency: u64,
    pub(crate) kind: OpKind<P>,
    pub(crate) wall: Duration,
}

impl<P: Payload> Operation<P> {
    pub fn agent<F>(name: impl Into<String>, frequency: u64, f: F) -> Self
    where
        F: Fn(&mut AgentCtx<'_, P>) -> Result<(), EngineError> + Send + Sync + 'static,
    {
        Operation {
            name: name.into(),
            frequency: frequency.max(1),
            kind: OpKind::Agent(Arc::new(f)),
            wall: Duration::ZERO,
        }
    }

    pub fn standalone<F>(name: impl Into<String>, frequency: u64, f: F) -> Self
    where
        F: FnMut(&mut StandaloneCtx<'_, P>) -> Result<(), EngineError> + Send + 'static,
    {
        Operation {
            name: name.into(),
            frequency: frequency.max(1),
            kind: OpKind::Standalone(Box::new(f)),
            wall: Duration::ZERO,
        }
    }

    pub fn wall_time(&self) -> Duration {
        self.wall
    }
}

/// The built-in "execute all behaviors" agent operation.
pub fn behaviors_op<P: Payload>() -> Operation<P> {
    Operation::agent("behaviors", 1, |ctx: &mut AgentCtx<'_, P>| {
        // The list is cloned so behaviors can borrow the agent through ctx;
        // behaviors attached mid-step run from the next step on.
        let list = ctx.agent.behaviors().to_vec();
        for behavior in &list {
            behavior.run(ctx)?;
        }
        Ok(())
    })
}
