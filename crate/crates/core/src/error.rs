use thiserror::Error;

use crate::agent::AgentId;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid agent geometry: {0}")]
    InvalidGeometry(String),

    #[error("agent {0:?} is not alive")]
    DeadAgent(AgentId),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("neighbor radius {radius} exceeds grid box edge {edge}; rebuild the grid with min_box_edge >= {radius}")]
    RadiusExceedsBox { radius: f64, edge: f64 },

    #[error("diffusion stability violated for `{substance}`: D*dt/h^2 = {value:.6} exceeds the admissible maximum {max:.6}")]
    DiffusionUnstable { substance: String, value: f64, max: f64 },

    #[error("duplicate diffusion field `{0}`")]
    DuplicateField(String),

    #[error("unknown diffusion field `{0}`")]
    UnknownField(String),

    #[error("non-finite force between agents {0:?} and {1:?}")]
    NonFiniteForce(AgentId, AgentId),

    #[error("model error: {0}")]
    Model(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation `{op}` failed at step {step}{}: {source}", agent.map(|a| format!(" (agent {})", a.raw())).unwrap_or_default())]
    Op {
        op: String,
        step: u64,
        agent: Option<AgentId>,
        #[source]
        source: Box<EngineError>,
    },
}

impl EngineError {
    pub(crate) fn in_op(self, op: &str, step: u64, agent: Option<AgentId>) -> EngineError {
        EngineError::Op { op: op.to_string(), step, agent, source: Box::new(self) }
    }
}
