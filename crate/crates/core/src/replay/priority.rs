//! Proportional prioritized replay over a sum tree.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{IndexSampler, LiveWindow, ReplayError, Result, SamplerKind};

/// Complete binary tree of prefix sums over a power-of-two number of leaves.
///
/// Parents are recomputed from their children on every update rather than
/// adjusted by deltas, so stored sums never drift from a fresh recompute.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, slot: usize) -> f64 {
        self.nodes[self.leaves + slot]
    }

    pub fn set(&mut self, slot: usize, value: f64) {
        let mut node = self.leaves + slot;
        self.nodes[node] = value;
        while node > 1 {
            node /= 2;
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass` (in `[0, total)`).
    pub fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.nodes[2 * node];
            if mass < left {
                node *= 2;
            } else {
                mass -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }

    /// Largest relative deviation of any stored parent from the sum of its children.
    pub fn max_relative_drift(&self) -> f64 {
        (1..self.leaves)
            .map(|n| {
                let fresh = self.nodes[2 * n] + self.nodes[2 * n + 1];
                let diff = (self.nodes[n] - fresh).abs();
                if fresh == 0.0 {
                    diff
                } else {
                    diff / fresh
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Prioritized-replay constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub priority_floor: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta_start: 0.4,
            beta_end: 1.0,
            priority_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrioritySampler {
    window: LiveWindow,
    config: PerConfig,
    tree: SumTree,
    max_priority: f64,
    progress: f64,
}

impl PrioritySampler {
    pub fn new(capacity: usize, config: PerConfig) -> Result<Self> {
        if !(config.alpha >= 0.0 && config.priority_floor > 0.0) {
            return Err(ReplayError::InvalidParameter(format!(
                "alpha must be >= 0 and the priority floor positive, got {config:?}"
            )));
        }
        Ok(Self {
            window: LiveWindow::new(capacity),
            config,
            tree: SumTree::new(capacity),
            max_priority: 1.0,
            progress: 0.0,
        })
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    pub fn config(&self) -> &PerConfig {
        &self.config
    }

    /// Annealed importance exponent at the current progress.
    pub fn beta(&self) -> f64 {
        let PerConfig {
            beta_start,
            beta_end,
            ..
        } = self.config;
        beta_start + (beta_end - beta_start) * self.progress
    }

    pub fn priority(&self, insert_index: u64) -> Result<f64> {
        self.window.age(insert_index)?;
        Ok(self.tree.get(self.slot(insert_index)))
    }

    fn slot(&self, insert_index: u64) -> usize {
        (insert_index % self.window.capacity() as u64) as usize
    }

    fn index_of_slot(&self, slot: usize) -> Option<u64> {
        let oldest = self.window.oldest()?;
        let cap = self.window.capacity() as u64;
        let idx = oldest + (slot as u64 + cap - oldest % cap) % cap;
        self.window.contains(idx).then_some(idx)
    }
}

impl IndexSampler for PrioritySampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Per
    }

    fn window(&self) -> &LiveWindow {
        &self.window
    }

    fn advance(&mut self) -> u64 {
        let index = self.window.advance();
        let slot = self.slot(index);
        self.tree.set(slot, self.max_priority);
        index
    }

    fn probability(&self, insert_index: u64) -> Result<f64> {
        Ok(self.priority(insert_index)? / self.tree.total())
    }

    fn sample(&mut self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        if self.window.is_empty() {
            return Err(ReplayError::Empty);
        }
        let total = self.tree.total();
        let mut out = Vec::with_capacity(batch_size);
        while out.len() < batch_size {
            let slot = self.tree.find(rng.random::<f64>() * total);
            // Rounding at the top of the range can land on an empty leaf.
            if let Some(idx) = self.index_of_slot(slot) {
                if self.tree.get(slot) > 0.0 {
                    out.push(idx);
                }
            }
        }
        Ok(out)
    }

    fn importance_weights(&self, indices: &[u64]) -> Result<Option<Vec<f64>>> {
        let n = self.window.len() as f64;
        let beta = self.beta();
        let raw = indices
            .iter()
            .map(|&i| Ok((n * self.probability(i)?).powf(-beta)))
            .collect::<Result<Vec<f64>>>()?;
        let max = raw.iter().cloned().fold(0.0, f64::max);
        Ok(Some(raw.into_iter().map(|w| w / max).collect()))
    }

    fn update_priorities(&mut self, indices: &[u64], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(ReplayError::InvalidParameter(format!(
                "{} indices but {} td errors",
                indices.len(),
                td_errors.len()
            )));
        }
        if let Some(&bad) = td_errors.iter().find(|d| !d.is_finite()) {
            return Err(ReplayError::NonFiniteTdError(bad));
        }
        for &idx in indices {
            self.window.age(idx)?;
        }
        for (&idx, &delta) in indices.iter().zip(td_errors) {
            let p = (delta.abs() + self.config.priority_floor).powf(self.config.alpha);
            self.max_priority = self.max_priority.max(p);
            let slot = self.slot(idx);
            self.tree.set(slot, p);
        }
        Ok(())
    }

    fn set_progress(&mut self, fraction: f64) {
        self.progress = fraction.clamp(0.0, 1.0);
    }
}
