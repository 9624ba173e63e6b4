use alloc::string::String;

use crate::scene::AgentId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("goal unreachable for agent {0:?}")]
    UnreachableGoal(Option<AgentId>),
    #[error("action {action} is not available to agent {agent}")]
    IllegalAction { agent: AgentId, action: &'static str },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("model did not converge: {0}")]
    NonConvergence(String),
    #[error("information matrix is singular")]
    RankDeficient,
    #[error("observations contain a single outcome class")]
    NoContrast,
}
