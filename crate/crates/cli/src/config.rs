//! The TOML configuration file. Every section is optional; missing keys take
//! their defaults and unknown keys are rejected.

use std::path::Path;

use anyhow::{Context, Result};
use fog_core::agent::{ExpansionMode, TrainConfig};
use fog_core::replay::{DecayLaw, SamplerKind};
use fog_core::theory::VerifyConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub verify: VerifySection,
    pub simulate: SimulateSection,
    pub ablate: AblateSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub uniform_horizons: Vec<u64>,
    pub decay_rates: Vec<f64>,
    pub decay_indices: Vec<u64>,
    pub decay_steps: u64,
    pub beta: u64,
    pub seeds: u32,
    pub root_seed: u64,
}

impl Default for VerifySection {
    fn default() -> Self {
        let d = VerifyConfig::default();
        Self {
            uniform_horizons: d.uniform_horizons,
            decay_rates: d.decay_rates,
            decay_indices: d.decay_indices,
            decay_steps: d.decay_steps,
            beta: d.beta,
            seeds: d.seeds,
            root_seed: d.root_seed,
        }
    }
}

impl VerifySection {
    pub fn to_core(&self, corrupt_sampler: bool) -> VerifyConfig {
        VerifyConfig {
            uniform_horizons: self.uniform_horizons.clone(),
            decay_rates: self.decay_rates.clone(),
            decay_indices: self.decay_indices.clone(),
            decay_steps: self.decay_steps,
            beta: self.beta,
            seeds: self.seeds,
            root_seed: self.root_seed,
            corrupt_sampler,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub steps: u64,
    pub beta: u64,
    pub decay: DecayLaw,
    pub seeds: u32,
    pub root_seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            steps: 100_000,
            beta: 8,
            decay: DecayLaw::new(1e-4, 0.01).expect("valid decay law"),
            seeds: 3,
            root_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSection {
    pub envs: Vec<String>,
    pub samplers: Vec<SamplerKind>,
    pub modes: Vec<ExpansionMode>,
    pub seeds: Vec<u64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        Self {
            envs: vec!["pendulum".into()],
            samplers: vec![SamplerKind::Decay],
            modes: ExpansionMode::ALL.to_vec(),
            seeds: vec![0, 1, 2],
        }
    }
}
