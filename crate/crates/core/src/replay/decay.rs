//! ER-decay sampling: weight `max(tau, (1 - eps)^age)` with a hard floor.
//!
//! Because the weight depends only on age, the live window splits at the
//! cutoff age into a geometric head (ages below the cutoff) and a flat tail
//! where every item carries exactly `tau`. A draw first picks a region by
//! mass, then either an inverse-CDF truncated-geometric age in the head or a
//! uniform age in the tail, so each draw is O(1).

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{IndexSampler, LiveWindow, ReplayError, Result, SamplerKind};

/// Smallest age `a` with `(1 - epsilon)^a <= tau`, or `None` when `tau == 0`.
///
/// The power is evaluated as `exp(a * ln(1 - epsilon))`, the same expression
/// [`DecayLaw::weight`] uses, so the boundary is consistent with the weights.
pub fn cutoff_age(epsilon: f64, tau: f64) -> Result<Option<u64>> {
    validate(epsilon, tau)?;
    if tau == 0.0 {
        return Ok(None);
    }
    if tau >= 1.0 {
        return Ok(Some(0));
    }
    let log_keep = (-epsilon).ln_1p();
    let pow = |a: u64| (a as f64 * log_keep).exp();
    let mut age = (tau.ln() / log_keep).ceil().max(0.0) as u64;
    while pow(age) > tau {
        age += 1;
    }
    while age > 0 && pow(age - 1) <= tau {
        age -= 1;
    }
    Ok(Some(age))
}

fn validate(epsilon: f64, tau: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ReplayError::InvalidParameter(format!(
            "decay rate must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(ReplayError::InvalidParameter(format!(
            "minimum weight must lie in [0, 1], got {tau}"
        )));
    }
    Ok(())
}

/// Per-step decay rate and weight floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecayParams", into = "DecayParams")]
pub struct DecayLaw {
    epsilon: f64,
    tau: f64,
    log_keep: f64,
    cutoff: Option<u64>,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct DecayParams {
    epsilon: f64,
    tau: f64,
}

impl TryFrom<DecayParams> for DecayLaw {
    type Error = ReplayError;

    fn try_from(p: DecayParams) -> Result<Self> {
        DecayLaw::new(p.epsilon, p.tau)
    }
}

impl From<DecayLaw> for DecayParams {
    fn from(law: DecayLaw) -> Self {
        DecayParams {
            epsilon: law.epsilon,
            tau: law.tau,
        }
    }
}

impl DecayLaw {
    pub fn new(epsilon: f64, tau: f64) -> Result<Self> {
        let cutoff = cutoff_age(epsilon, tau)?;
        Ok(Self {
            epsilon,
            tau,
            log_keep: (-epsilon).ln_1p(),
            cutoff,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `None` means the floor is never reached (`tau == 0`).
    pub fn cutoff_age(&self) -> Option<u64> {
        self.cutoff
    }

    /// `(1 - epsilon)^age` without the floor.
    pub fn decay_factor(&self, age: u64) -> f64 {
        (age as f64 * self.log_keep).exp()
    }

    pub fn weight(&self, age: u64) -> f64 {
        match self.cutoff {
            Some(c) if age >= c => self.tau,
            _ => self.decay_factor(age).max(self.tau),
        }
    }

    /// Number of live items in the geometric head when `live` items are stored.
    pub fn head_len(&self, live: u64) -> u64 {
        self.cutoff.map_or(live, |c| c.min(live))
    }

    /// Closed-form `sum_{a < h} (1 - epsilon)^a = (1 - (1 - epsilon)^h) / epsilon`.
    pub fn head_mass(&self, head_len: u64) -> f64 {
        -(head_len as f64 * self.log_keep).exp_m1() / self.epsilon
    }

    /// Inverse-CDF draw of an age in `0..head_len` with mass proportional
    /// to `(1 - epsilon)^age`, given a uniform variate `u` in `[0, 1)`.
    pub fn truncated_geometric_age(&self, head_len: u64, u: f64) -> u64 {
        debug_assert!(head_len > 0);
        let span = -(head_len as f64 * self.log_keep).exp_m1();
        let age = ((-u * span).ln_1p() / self.log_keep).floor();
        if age.is_finite() && age >= 0.0 {
            (age as u64).min(head_len - 1)
        } else {
            head_len - 1
        }
    }
}

/// Two-region ER-decay sampler over a FIFO window.
#[derive(Clone, Debug)]
pub struct DecayedSampler {
    window: LiveWindow,
    law: DecayLaw,
    head_len: u64,
    tail_len: u64,
    head_mass: f64,
}

impl DecayedSampler {
    pub fn new(capacity: usize, law: DecayLaw) -> Self {
        Self {
            window: LiveWindow::new(capacity),
            law,
            head_len: 0,
            tail_len: 0,
            head_mass: 0.0,
        }
    }

    pub fn law(&self) -> &DecayLaw {
        &self.law
    }

    /// Current time `t`: the insert index of the newest item.
    pub fn now(&self) -> Option<u64> {
        self.window.newest()
    }

    /// `(head_mass, tail_mass)` from the region bookkeeping.
    pub fn region_masses(&self) -> (f64, f64) {
        (self.head_mass, self.tail_len as f64 * self.law.tau())
    }

    pub fn total_mass(&self) -> f64 {
        let (head, tail) = self.region_masses();
        head + tail
    }

    /// Region sizes `(head_len, tail_len)`.
    pub fn region_sizes(&self) -> (u64, u64) {
        (self.head_len, self.tail_len)
    }

    /// Sum of weights by scanning every live age. Reference only.
    pub fn linear_scan_mass(&self) -> f64 {
        (0..self.window.len() as u64)
            .map(|age| self.law.weight(age))
            .sum()
    }

    /// Reference sampler: cumulative weights over a linear scan of the live
    /// window, then a binary search per draw. O(n) setup per call.
    pub fn sample_batch_oracle(
        &self,
        batch_size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<u64>> {
        let oldest = self.window.oldest().ok_or(ReplayError::Empty)?;
        let newest = self.window.newest().ok_or(ReplayError::Empty)?;
        let mut cumulative = Vec::with_capacity(self.window.len());
        let mut acc = 0.0;
        for idx in oldest..=newest {
            acc += self.law.weight(newest - idx);
            cumulative.push(acc);
        }
        Ok((0..batch_size)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let pos = cumulative.partition_point(|&c| c <= u);
                oldest + pos.min(cumulative.len() - 1) as u64
            })
            .collect())
    }

    fn rebuild_regions(&mut self) {
        let live = self.window.len() as u64;
        self.head_len = self.law.head_len(live);
        self.tail_len = live - self.head_len;
        self.head_mass = self.law.head_mass(self.head_len);
    }

    fn draw(&self, rng: &mut dyn RngCore, newest: u64) -> u64 {
        let (head_mass, tail_mass) = self.region_masses();
        let in_head = self.tail_len == 0
            || (self.head_len > 0 && rng.random::<f64>() * (head_mass + tail_mass) < head_mass);
        let age = if in_head {
            self.law
                .truncated_geometric_age(self.head_len, rng.random::<f64>())
        } else {
            self.head_len + rng.random_range(0..self.tail_len)
        };
        newest - age
    }
}

impl IndexSampler for DecayedSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Decay
    }

    fn window(&self) -> &LiveWindow {
        &self.window
    }

    fn advance(&mut self) -> u64 {
        let index = self.window.advance();
        self.rebuild_regions();
        index
    }

    fn probability(&self, insert_index: u64) -> Result<f64> {
        let age = self.window.age(insert_index)?;
        Ok(self.law.weight(age) / self.total_mass())
    }

    fn sample(&mut self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        let newest = self.window.newest().ok_or(ReplayError::Empty)?;
        Ok((0..batch_size).map(|_| self.draw(rng, newest)).collect())
    }
}
