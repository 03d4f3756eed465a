//! General-purpose parallel agent-based simulation engine.
//!
//! Agents carry geometry, an ordered behavior list and a scenario payload;
//! the scheduler advances the population through two-phase steps (parallel
//! agent operations over a step-start snapshot, serial standalone operations,
//! structural changes applied at the barrier). The environment is served by
//! a uniform spatial grid and lattice diffusion fields. Runs are
//! bit-reproducible for a fixed seed regardless of worker count.

pub mod agent;
pub mod behavior;
pub mod diffusion;
pub mod error;
mod exec;
pub mod event;
pub mod grid;
pub mod math;
pub mod mechanics;
pub mod neuro;
pub mod rng;
pub mod schedule;
pub mod sim;
pub mod snapshot;
pub mod store;

pub use agent::{Agent, AgentId, Payload, Shape};
pub use behavior::{Behavior, EventFlags, EventKind};
pub use diffusion::{diffusion_op, Boundary, DiffusionGrid, Fields};
pub use error::EngineError;
pub use event::{CellDivisionEvent, CreationEvent, EventSink, IdAlloc, SpawnAgentEvent};
pub use grid::{GridInput, UniformGrid};
pub use math::Vec3;
pub use mechanics::{mechanics_op, ContactForce, MechanicsParams};
pub use rng::RandomStream;
pub use schedule::{behaviors_op, AgentCtx, Operation, StandaloneCtx};
pub use sim::{SimParams, Simulation, SimulationReport};
pub use snapshot::Snapshot;
