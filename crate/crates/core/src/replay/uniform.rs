use rand::{Rng, RngCore};

use super::{IndexSampler, LiveWindow, ReplayError, Result, SamplerKind};

/// Every live item equally likely.
#[derive(Clone, Debug)]
pub struct UniformSampler {
    window: LiveWindow,
}

impl UniformSampler {
    pub fn new(capacity: usize) -> Self {
        Self {
            window: LiveWindow::new(capacity),
        }
    }

    /// A sampler whose next push receives insert index `next_index`.
    pub(crate) fn resuming_at(capacity: usize, next_index: u64) -> Self {
        let mut window = LiveWindow::new(capacity);
        window.pushed = next_index;
        Self { window }
    }
}

impl IndexSampler for UniformSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Uniform
    }

    fn window(&self) -> &LiveWindow {
        &self.window
    }

    fn advance(&mut self) -> u64 {
        self.window.advance()
    }

    fn probability(&self, insert_index: u64) -> Result<f64> {
        self.window.age(insert_index)?;
        Ok(1.0 / self.window.len() as f64)
    }

    fn sample(&mut self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<u64>> {
        let lo = self.window.oldest().ok_or(ReplayError::Empty)?;
        let n = self.window.len() as u64;
        Ok((0..batch_size).map(|_| lo + rng.random_range(0..n)).collect())
    }
}
