//! Small dense-network stack with hand-written reverse-mode gradients.
//!
//! Every layer's forward pass returns an explicit cache; the matching
//! backward pass consumes it, accumulates parameter gradients in place and
//! returns the gradient with respect to the layer input. Rows are batch
//! items throughout.

mod actor;
mod checkpoint;
mod critic;
mod dormant;
mod init;
mod layers;
mod optim;

use ndarray::Array2;
use thiserror::Error;

pub use actor::{
    log_one_minus_tanh_sq, ActorCache, ActorConfig, ActorOutput, GaussianActor, SquashedSample,
    LOG_STD_MAX, LOG_STD_MIN,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, Section};
pub use critic::{BlockCache, CriticCache, CriticConfig, ResidualBlock, ResidualCritic};
pub use dormant::{dormant_ratio, DEFAULT_DORMANT_THRESHOLD};
pub use init::orthogonal_init;
pub use layers::{elu, elu_grad_from_output, Dense, LayerNorm, LayerNormCache, LAYER_NORM_EPS};
pub use optim::{Adam, AdamConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache was produced by parameter generation {cached}, network is at {current}")]
    StaleCache { cached: u64, current: u64 },
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(usize),
    #[error("network already at maximum depth {0}")]
    MaxDepth(usize),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A trainable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns an ordered list of parameters.
pub trait Module {
    fn params(&self) -> Vec<&Param>;

    fn params_mut(&mut self) -> Vec<&mut Param>;

    /// Counter bumped whenever parameter values change, used to detect stale caches.
    fn generation(&self) -> u64;

    fn bump_generation(&mut self);

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter values in order, for checkpoints and comparisons.
    fn param_values(&self) -> Vec<Array2<f64>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    fn load_param_values(&mut self, values: &[Array2<f64>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(NnError::Shape(format!(
                "{} tensors supplied for {} parameters",
                values.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.dim() != v.dim() {
                return Err(NnError::Shape(format!(
                    "tensor {:?} does not fit parameter {:?}",
                    v.dim(),
                    p.value.dim()
                )));
            }
            p.value.assign(v);
        }
        drop(params);
        self.bump_generation();
        Ok(())
    }

    /// Polyak averaging: `self <- (1 - tau) * self + tau * source`.
    fn soft_update_from(&mut self, source: &Self, tau: f64)
    where
        Self: Sized,
    {
        for (t, s) in self.params_mut().into_iter().zip(source.params()) {
            t.value.zip_mut_with(&s.value, |a, &b| *a += tau * (b - *a));
        }
        self.bump_generation();
    }
}

pub(crate) fn check_cols(x: &Array2<f64>, expected: usize, what: &str) -> Result<()> {
    if x.ncols() != expected {
        return Err(NnError::Shape(format!(
            "{what} expects {expected} input features, got {}",
            x.ncols()
        )));
    }
    Ok(())
}
