//! Twin-critic soft actor-critic with decayed replay, scheduled resets and
//! critic expansion.

mod config;
mod sac;
mod train;

pub use config::{AgentConfig, ExpansionMode, ReplayConfig};
pub use sac::{GrowthEvent, GrowthEventKind, LossRecord, SacAgent, UpdateOutcome};
pub use train::{
    evaluate, EvalStats, EventRow, MetricsRow, RunArtifacts, TrainConfig, Trainer,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::envs::EnvError;
use crate::growth::GrowthError;
use crate::nn::NnError;
use crate::replay::ReplayError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AgentError {
    /// Loss or gradient blow-ups, which end a run cleanly instead of failing it.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            AgentError::NonFinite(_) | AgentError::Nn(NnError::NonFiniteGradient(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, AgentError>;

/// Child random streams derived from one root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Env = 0,
    Init = 1,
    Explore = 2,
    Replay = 3,
    Eval = 4,
    Diagnostics = 5,
    UpdateNoise = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
