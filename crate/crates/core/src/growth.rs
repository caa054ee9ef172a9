//! Critic expansion schedule, learning-rate decay on expansion, and the
//! reset list.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{NnError, ResidualCritic};

#[derive(Debug, Error)]
pub enum GrowthError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn strictly_increasing(values: &[u64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

/// Network-iteration counts (since the last reset) at which blocks are appended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionSchedule {
    pub expansion_iters: Vec<u64>,
    pub blocks_per_expansion: usize,
    pub initial_depth: usize,
    pub max_depth: usize,
}

impl Default for ExpansionSchedule {
    fn default() -> Self {
        Self {
            expansion_iters: vec![50_000, 200_000],
            blocks_per_expansion: 1,
            initial_depth: 2,
            max_depth: 4,
        }
    }
}

impl ExpansionSchedule {
    pub fn validate(&self) -> Result<(), GrowthError> {
        if !strictly_increasing(&self.expansion_iters) {
            return Err(GrowthError::InvalidSchedule(
                "expansion iterations must be strictly increasing".into(),
            ));
        }
        if self.blocks_per_expansion == 0 {
            return Err(GrowthError::InvalidSchedule(
                "blocks_per_expansion must be positive".into(),
            ));
        }
        let reachable =
            self.initial_depth + self.expansion_iters.len() * self.blocks_per_expansion;
        if reachable > self.max_depth {
            return Err(GrowthError::InvalidSchedule(format!(
                "initial depth {} plus {} expansions of {} blocks exceeds max depth {}",
                self.initial_depth,
                self.expansion_iters.len(),
                self.blocks_per_expansion,
                self.max_depth
            )));
        }
        Ok(())
    }

    /// Divides every entry by `scale`, rounding to the nearest iteration.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            expansion_iters: scale_counts(&self.expansion_iters, scale),
            ..self.clone()
        }
    }
}

pub(crate) fn scale_counts(values: &[u64], scale: f64) -> Vec<u64> {
    values
        .iter()
        .map(|&v| ((v as f64 / scale).round() as u64).max(1))
        .collect()
}

/// Tracks which schedule entries have fired in the current reset epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionController {
    schedule: ExpansionSchedule,
    consumed: usize,
}

impl ExpansionController {
    pub fn new(schedule: ExpansionSchedule) -> Result<Self, GrowthError> {
        schedule.validate()?;
        Ok(Self {
            schedule,
            consumed: 0,
        })
    }

    pub fn schedule(&self) -> &ExpansionSchedule {
        &self.schedule
    }

    /// True when the next unconsumed entry is due and depth allows growth.
    /// A true answer consumes that entry.
    pub fn should_expand(&mut self, iterations_since_reset: u64, current_depth: usize) -> bool {
        if current_depth >= self.schedule.max_depth {
            return false;
        }
        match self.schedule.expansion_iters.get(self.consumed) {
            Some(&due) if due <= iterations_since_reset => {
                self.consumed += 1;
                true
            }
            _ => false,
        }
    }

    /// Like [`should_expand`](Self::should_expand) but consumes nothing.
    pub fn pending(&self, iterations_since_reset: u64, current_depth: usize) -> bool {
        current_depth < self.schedule.max_depth
            && self
                .schedule
                .expansion_iters
                .get(self.consumed)
                .is_some_and(|&due| due <= iterations_since_reset)
    }

    /// Starts a new reset epoch.
    pub fn rearm(&mut self) {
        self.consumed = 0;
    }
}

/// Appends one freshly initialized block to the end of the residual chain.
/// Existing parameters are untouched.
pub fn expand(critic: &mut ResidualCritic, rng: &mut dyn RngCore) -> Result<(), GrowthError> {
    critic.append_block(rng)?;
    Ok(())
}

/// Which dense layers count toward the learning-rate decay ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenseCountConvention {
    /// Input head plus two per residual block.
    #[default]
    HeadAndBlocks,
    /// Two per residual block.
    BlocksOnly,
}

pub fn dense_layer_count(depth: usize, convention: DenseCountConvention) -> usize {
    match convention {
        DenseCountConvention::HeadAndBlocks => 1 + 2 * depth,
        DenseCountConvention::BlocksOnly => 2 * depth,
    }
}

/// `init_lr * init_dense_layers / current_dense_layers`.
pub fn decayed_lr(init_lr: f64, init_dense_layers: usize, current_dense_layers: usize) -> f64 {
    debug_assert!(init_dense_layers >= 1 && current_dense_layers >= 1);
    init_lr * init_dense_layers as f64 / current_dense_layers as f64
}

/// Environment-step counts at which the agent is fully reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResetList(pub Vec<u64>);

impl Default for ResetList {
    fn default() -> Self {
        Self(vec![15_000, 50_000, 100_000, 200_000, 400_000, 600_000, 800_000])
    }
}

impl ResetList {
    pub fn validate(&self) -> Result<(), GrowthError> {
        if strictly_increasing(&self.0) {
            Ok(())
        } else {
            Err(GrowthError::InvalidSchedule(
                "reset steps must be strictly increasing".into(),
            ))
        }
    }

    pub fn contains(&self, step: u64) -> bool {
        self.0.binary_search(&step).is_ok()
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self(scale_counts(&self.0, scale))
    }
}
