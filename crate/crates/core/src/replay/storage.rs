use serde::{Deserialize, Serialize};

use super::{ReplayError, Result};

/// Per-buffer vector dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub state_dim: usize,
    pub action_dim: usize,
}

/// One environment step as stored in the buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Global insertion count; never reused.
    pub insert_index: u64,
}

pub(crate) struct TransitionView<'a> {
    pub state: &'a [f64],
    pub action: &'a [f64],
    pub reward: f64,
    pub next_state: &'a [f64],
    pub done: bool,
}

/// Flat, structure-of-arrays ring. Slot of an item is `insert_index % capacity`.
///
/// Storage grows on demand up to `capacity` so large buffers cost nothing
/// until they are filled.
pub struct RingStorage {
    schema: Schema,
    capacity: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
}

impl RingStorage {
    pub fn new(schema: Schema, capacity: usize) -> Self {
        Self {
            schema,
            capacity,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
        }
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub(crate) fn check(&self, state: &[f64], action: &[f64], next_state: &[f64]) -> Result<()> {
        let expect = |field, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(ReplayError::Schema {
                    field,
                    expected,
                    actual,
                })
            }
        };
        expect("state", self.schema.state_dim, state.len())?;
        expect("action", self.schema.action_dim, action.len())?;
        expect("next_state", self.schema.state_dim, next_state.len())
    }

    /// Writes an item; the caller guarantees indexes arrive in order.
    pub(crate) fn write(
        &mut self,
        insert_index: u64,
        state: &[f64],
        action: &[f64],
        reward: f64,
        next_state: &[f64],
        done: bool,
    ) {
        let slot = (insert_index % self.capacity as u64) as usize;
        let (s, a) = (self.schema.state_dim, self.schema.action_dim);
        if slot == self.rewards.len() {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.next_states.extend_from_slice(next_state);
            self.rewards.push(reward);
            self.dones.push(done);
            return;
        }
        if slot > self.rewards.len() {
            // Restored buffers start mid-ring.
            let n = slot + 1;
            self.states.resize(n * s, 0.0);
            self.actions.resize(n * a, 0.0);
            self.next_states.resize(n * s, 0.0);
            self.rewards.resize(n, 0.0);
            self.dones.resize(n, false);
        }
        self.states[slot * s..(slot + 1) * s].copy_from_slice(state);
        self.actions[slot * a..(slot + 1) * a].copy_from_slice(action);
        self.next_states[slot * s..(slot + 1) * s].copy_from_slice(next_state);
        self.rewards[slot] = reward;
        self.dones[slot] = done;
    }

    pub(crate) fn view(&self, insert_index: u64) -> TransitionView<'_> {
        let slot = (insert_index % self.capacity as u64) as usize;
        let (s, a) = (self.schema.state_dim, self.schema.action_dim);
        TransitionView {
            state: &self.states[slot * s..(slot + 1) * s],
            action: &self.actions[slot * a..(slot + 1) * a],
            reward: self.rewards[slot],
            next_state: &self.next_states[slot * s..(slot + 1) * s],
            done: self.dones[slot],
        }
    }

    pub(crate) fn read(&self, insert_index: u64) -> Transition {
        let v = self.view(insert_index);
        Transition {
            state: v.state.to_vec(),
            action: v.action.to_vec(),
            reward: v.reward,
            next_state: v.next_state.to_vec(),
            done: v.done,
            insert_index,
        }
    }
}
