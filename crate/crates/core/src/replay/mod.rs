//! Experience storage and the three interchangeable sampling policies.
//!
//! A [`ReplayBuffer`] owns the transition data in a FIFO ring and delegates
//! the choice of which insert indexes to replay to an [`IndexSampler`]. The
//! samplers only ever see the live window of insert indexes, so they can be
//! driven directly (as the theorem harness does) without any payload.

mod decay;
mod priority;
mod snapshot;
mod storage;
mod uniform;

use ndarray::{Array1, Array2};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decay::{cutoff_age, DecayLaw, DecayedSampler};
pub use priority::{PerConfig, PrioritySampler, SumTree};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};
pub use storage::{RingStorage, Schema, Transition};
pub use uniform::UniformSampler;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("schema mismatch: {field} has length {actual}, buffer expects {expected}")]
    Schema {
        field: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("insert index {0} is not live in the buffer")]
    NotLive(u64),
    #[error("cannot sample from an empty buffer")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite td error {0}")]
    NonFiniteTdError(f64),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ReplayError>;

/// Which sampling policy a buffer uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Uniform,
    Decay,
    Per,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::Decay => "decay",
            SamplerKind::Per => "per",
        })
    }
}

/// The FIFO window of live insert indexes shared by every sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiveWindow {
    capacity: usize,
    pushed: u64,
}

impl LiveWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of items ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn len(&self) -> usize {
        self.pushed.min(self.capacity as u64) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.pushed == 0
    }

    /// Insert index of the newest item (the current time `t`).
    pub fn newest(&self) -> Option<u64> {
        self.pushed.checked_sub(1)
    }

    pub fn oldest(&self) -> Option<u64> {
        self.newest().map(|n| n + 1 - self.len() as u64)
    }

    pub fn contains(&self, insert_index: u64) -> bool {
        match (self.oldest(), self.newest()) {
            (Some(lo), Some(hi)) => (lo..=hi).contains(&insert_index),
            _ => false,
        }
    }

    pub fn age(&self, insert_index: u64) -> Result<u64> {
        if !self.contains(insert_index) {
            return Err(ReplayError::NotLive(insert_index));
        }
        Ok(self.pushed - 1 - insert_index)
    }

    /// Advance by one push; returns the new item's insert index.
    pub fn advance(&mut self) -> u64 {
        self.pushed += 1;
        self.pushed - 1
    }

    pub fn live_indices(&self) -> std::ops::Range<u64> {
        match self.oldest() {
            Some(lo) => lo..self.pushed,
            None => 0..0,
        }
    }
}

/// Draws insert indexes from a live window.
///
/// Batches are drawn with replacement: every index in a batch is an
/// independent draw from [`IndexSampler::probability`].
pub trait IndexSampler: Send {
    fn kind(&self) -> SamplerKind;

    fn window(&self) -> &LiveWindow;

    /// Registers one new item as the newest; evicts the oldest at capacity.
    fn advance(&mut self) -> u64;

    /// Exact probability that a single draw returns `insert_index`.
    fn probability(&self, insert_index: u64) -> Result<f64>;

    fn sample(&mut self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<u64>>;

    /// Importance-sampling correction for the given batch, if the policy has one.
    fn importance_weights(&self, _indices: &[u64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    fn update_priorities(&mut self, _indices: &[u64], _td_errors: &[f64]) -> Result<()> {
        Ok(())
    }

    /// Training progress in `[0, 1]`, used for annealed schedules.
    fn set_progress(&mut self, _fraction: f64) {}

    fn len(&self) -> usize {
        self.window().len()
    }

    fn is_empty(&self) -> bool {
        self.window().is_empty()
    }
}

/// A minibatch gathered from storage, one row per draw.
#[derive(Clone, Debug)]
pub struct Batch {
    pub indices: Vec<u64>,
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
    pub weights: Option<Array1<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Transition storage paired with a sampling policy.
pub struct ReplayBuffer {
    storage: RingStorage,
    sampler: Box<dyn IndexSampler>,
}

impl ReplayBuffer {
    pub fn new(schema: Schema, sampler: Box<dyn IndexSampler>) -> Self {
        let storage = RingStorage::new(schema, sampler.window().capacity());
        Self { storage, sampler }
    }

    pub fn uniform(schema: Schema, capacity: usize) -> Self {
        Self::new(schema, Box::new(UniformSampler::new(capacity)))
    }

    pub fn decayed(schema: Schema, capacity: usize, law: DecayLaw) -> Self {
        Self::new(schema, Box::new(DecayedSampler::new(capacity, law)))
    }

    pub fn prioritized(schema: Schema, capacity: usize, config: PerConfig) -> Result<Self> {
        Ok(Self::new(
            schema,
            Box::new(PrioritySampler::new(capacity, config)?),
        ))
    }

    pub fn schema(&self) -> Schema {
        self.storage.schema()
    }

    pub fn sampler(&self) -> &dyn IndexSampler {
        self.sampler.as_ref()
    }

    pub fn sampler_mut(&mut self) -> &mut dyn IndexSampler {
        self.sampler.as_mut()
    }

    pub fn len(&self) -> usize {
        self.sampler.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampler.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.sampler.window().capacity()
    }

    pub fn live_indices(&self) -> std::ops::Range<u64> {
        self.sampler.window().live_indices()
    }

    pub fn push(
        &mut self,
        state: &[f64],
        action: &[f64],
        reward: f64,
        next_state: &[f64],
        done: bool,
    ) -> Result<u64> {
        self.storage
            .check(state, action, next_state)?;
        let index = self.sampler.advance();
        self.storage
            .write(index, state, action, reward, next_state, done);
        Ok(index)
    }

    pub fn get(&self, insert_index: u64) -> Result<Transition> {
        if !self.sampler.window().contains(insert_index) {
            return Err(ReplayError::NotLive(insert_index));
        }
        Ok(self.storage.read(insert_index))
    }

    pub fn sample_probability(&self, insert_index: u64) -> Result<f64> {
        self.sampler.probability(insert_index)
    }

    pub fn sample_batch(&mut self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Batch> {
        let indices = self.sampler.sample(batch_size, rng)?;
        let weights = self.sampler.importance_weights(&indices)?;
        Ok(self.gather(indices, weights))
    }

    /// Materializes the given live indexes as a batch, in order.
    pub fn gather(&self, indices: Vec<u64>, weights: Option<Vec<f64>>) -> Batch {
        let Schema {
            state_dim,
            action_dim,
        } = self.storage.schema();
        let n = indices.len();
        let mut states = Array2::zeros((n, state_dim));
        let mut actions = Array2::zeros((n, action_dim));
        let mut next_states = Array2::zeros((n, state_dim));
        let mut rewards = Array1::zeros(n);
        let mut dones = Array1::zeros(n);
        for (row, &idx) in indices.iter().enumerate() {
            let view = self.storage.view(idx);
            states
                .row_mut(row)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(view.state);
            actions
                .row_mut(row)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(view.action);
            next_states
                .row_mut(row)
                .as_slice_mut()
                .expect("row-major")
                .copy_from_slice(view.next_state);
            rewards[row] = view.reward;
            dones[row] = if view.done { 1.0 } else { 0.0 };
        }
        Batch {
            indices,
            states,
            actions,
            rewards,
            next_states,
            dones,
            weights: weights.map(Array1::from),
        }
    }

    pub fn update_priorities(&mut self, indices: &[u64], td_errors: &[f64]) -> Result<()> {
        self.sampler.update_priorities(indices, td_errors)
    }

    pub fn set_progress(&mut self, fraction: f64) {
        self.sampler.set_progress(fraction)
    }

    /// Rebuilds a uniform buffer holding exactly the snapshot's transitions
    /// under their original insert indexes.
    pub fn from_snapshot(snapshot: &Snapshot) -> Result<Self> {
        let first = snapshot.transitions.first().ok_or(ReplayError::Empty)?.insert_index;
        let n = snapshot.transitions.len();
        let mut buf = Self::new(
            snapshot.schema,
            Box::new(UniformSampler::resuming_at(n, first)),
        );
        for t in &snapshot.transitions {
            let idx = buf.push(&t.state, &t.action, t.reward, &t.next_state, t.done)?;
            if idx != t.insert_index {
                return Err(ReplayError::Snapshot(format!(
                    "insert indexes are not contiguous: expected {idx}, found {}",
                    t.insert_index
                )));
            }
        }
        Ok(buf)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            schema: self.schema(),
            transitions: self.live_indices().map(|i| self.storage.read(i)).collect(),
        }
    }
}
