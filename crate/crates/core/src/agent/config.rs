use serde::{Deserialize, Serialize};

use super::{AgentError, Result};
use crate::growth::{DenseCountConvention, ExpansionSchedule, ResetList};
use crate::replay::{DecayLaw, PerConfig, SamplerKind};

/// How the critic's depth evolves over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionMode {
    /// Grow on the schedule from the schedule's initial depth.
    #[default]
    On,
    /// Stay at the schedule's initial depth.
    Off,
    /// Two extra blocks from the start, never grown.
    #[serde(rename = "fixed-2")]
    Fixed2,
    /// Four extra blocks from the start, never grown.
    #[serde(rename = "fixed-4")]
    Fixed4,
}

impl ExpansionMode {
    pub const ALL: [ExpansionMode; 4] = [Self::On, Self::Off, Self::Fixed2, Self::Fixed4];

    pub fn name(self) -> &'static str {
        match self {
            Self::On => "on",
            Self::Off => "off",
            Self::Fixed2 => "fixed-2",
            Self::Fixed4 => "fixed-4",
        }
    }
}

impl std::str::FromStr for ExpansionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown expansion mode {s:?}; expected on, off, fixed-2 or fixed-4"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub sampler: SamplerKind,
    pub capacity: usize,
    pub decay: DecayLaw,
    pub per: PerConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerKind::Decay,
            capacity: 1_000_000,
            decay: DecayLaw::new(1e-5, 0.1).expect("valid default decay law"),
            per: PerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    /// Gradient updates per environment step.
    pub replay_ratio: usize,
    /// Soft target-update coefficient.
    pub target_tau: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub alpha_lr: f64,
    pub critic_weight_decay: f64,
    pub initial_alpha: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub critic_hidden: usize,
    pub actor_hidden: usize,
    pub actor_layer_norm: bool,
    /// Uniform-random-action steps before learning starts.
    pub warmup_steps: u64,
    pub expansion: ExpansionMode,
    pub schedule: ExpansionSchedule,
    pub dense_count: DenseCountConvention,
    pub resets: ResetList,
    pub reset_actor: bool,
    /// Divides every reset step and expansion iteration.
    pub scale: f64,
    pub replay: ReplayConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 256,
            replay_ratio: 10,
            target_tau: 0.005,
            critic_lr: 3e-4,
            actor_lr: 3e-4,
            alpha_lr: 3e-4,
            critic_weight_decay: 0.01,
            initial_alpha: 1.0,
            target_entropy: None,
            critic_hidden: 512,
            actor_hidden: 256,
            actor_layer_norm: false,
            warmup_steps: 1_000,
            expansion: ExpansionMode::On,
            schedule: ExpansionSchedule::default(),
            dense_count: DenseCountConvention::default(),
            resets: ResetList::default(),
            reset_actor: true,
            scale: 1.0,
            replay: ReplayConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(AgentError::Config(msg.to_string()));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.replay_ratio == 0 {
            return bad("replay_ratio must be at least 1");
        }
        if !(self.target_tau > 0.0 && self.target_tau <= 1.0) {
            return bad("target_tau must lie in (0, 1]");
        }
        for (name, lr) in [
            ("critic_lr", self.critic_lr),
            ("actor_lr", self.actor_lr),
            ("alpha_lr", self.alpha_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(AgentError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.initial_alpha > 0.0 && self.initial_alpha.is_finite()) {
            return bad("initial_alpha must be positive");
        }
        if self.critic_hidden == 0 || self.actor_hidden == 0 {
            return bad("hidden sizes must be positive");
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad("scale must be positive");
        }
        if self.replay.capacity == 0 {
            return bad("replay capacity must be positive");
        }
        self.resolved_schedule().validate()?;
        self.resets.validate()?;
        Ok(())
    }

    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }

    /// The expansion schedule after applying the mode and scale.
    pub fn resolved_schedule(&self) -> ExpansionSchedule {
        let mut s = self.schedule.scaled(self.scale);
        match self.expansion {
            ExpansionMode::On => {}
            ExpansionMode::Off => s.expansion_iters.clear(),
            ExpansionMode::Fixed2 | ExpansionMode::Fixed4 => {
                s.expansion_iters.clear();
                s.initial_depth += if self.expansion == ExpansionMode::Fixed2 { 2 } else { 4 };
                s.max_depth = s.max_depth.max(s.initial_depth);
            }
        }
        s
    }

    pub fn resolved_resets(&self) -> ResetList {
        self.resets.scaled(self.scale)
    }
}
