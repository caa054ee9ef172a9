use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{stream_rng, AgentConfig, AgentError, Result, Stream};
use crate::growth::{decayed_lr, dense_layer_count, ExpansionController};
use crate::nn::{
    dormant_ratio, ActorConfig, Adam, AdamConfig, Checkpoint, CriticConfig, GaussianActor,
    Module, NnError, Param, ResidualCritic, Section,
};
use crate::replay::Batch;

/// Scalars from one gradient update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub update: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub q1_mean: f64,
    pub q2_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub record: LossRecord,
    /// Per-row TD error magnitude, averaged over both critics.
    pub td_errors: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthEventKind {
    Reset,
    Expand,
}

impl GrowthEventKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Reset => "reset",
            Self::Expand => "expand",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthEvent {
    pub kind: GrowthEventKind,
    pub depth_before: usize,
    pub depth_after: usize,
    pub critic_lr: f64,
}

struct Networks {
    actor: GaussianActor,
    critics: [ResidualCritic; 2],
}

pub struct SacAgent {
    config: AgentConfig,
    state_dim: usize,
    action_dim: usize,
    target_entropy: f64,
    pub actor: GaussianActor,
    pub critics: [ResidualCritic; 2],
    pub targets: [ResidualCritic; 2],
    pub log_alpha: Param,
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    alpha_opt: Adam,
    controller: ExpansionController,
    critic_lr: f64,
    init_dense: usize,
    iterations_since_reset: u64,
    updates: u64,
    init_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

fn join(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("matching row counts")
}

fn normal_noise(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut *rng))
}

fn log_alpha_param(alpha: f64) -> Param {
    Param::new(Array2::from_elem((1, 1), alpha.ln()))
}

fn divergence(err: NnError) -> AgentError {
    match err {
        NnError::NonFiniteGradient(_) => AgentError::NonFinite("gradient"),
        other => AgentError::Nn(other),
    }
}

/// `r + gamma (1 - done) (min_k Q'_k(s', a') - alpha log pi(a'|s'))` with
/// `a'` drawn from the current policy.
fn bootstrap_targets(
    actor: &GaussianActor,
    targets: &[ResidualCritic; 2],
    alpha: f64,
    gamma: f64,
    batch: &Batch,
    rng: &mut dyn RngCore,
) -> Result<Array1<f64>> {
    let out = actor.forward(&batch.next_states)?;
    let noise = normal_noise(out.rows(), out.mean.ncols(), rng);
    let next = GaussianActor::squash(&out, noise);
    let x = join(&batch.next_states, &next.actions);
    let q1 = targets[0].forward(&x)?;
    let q2 = targets[1].forward(&x)?;
    let mut y = Array1::zeros(batch.len());
    for i in 0..batch.len() {
        let soft = q1[i].min(q2[i]) - alpha * next.log_prob[i];
        y[i] = batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * soft;
    }
    Ok(y)
}

impl SacAgent {
    pub fn new(config: AgentConfig, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let schedule = config.resolved_schedule();
        let controller = ExpansionController::new(schedule.clone())?;
        let mut init_rng = stream_rng(seed, Stream::Init);
        let nets = Self::build(&config, state_dim, action_dim, &mut init_rng)?;
        let init_dense = dense_layer_count(schedule.initial_depth, config.dense_count);
        Ok(Self {
            target_entropy: config.target_entropy_for(action_dim),
            state_dim,
            action_dim,
            targets: nets.critics.clone(),
            actor: nets.actor,
            critics: nets.critics,
            log_alpha: log_alpha_param(config.initial_alpha),
            actor_opt: Adam::new(AdamConfig::adam(config.actor_lr)),
            critic_opts: [0, 1].map(|_| {
                Adam::new(AdamConfig::adamw(config.critic_lr, config.critic_weight_decay))
            }),
            alpha_opt: Adam::new(AdamConfig::adam(config.alpha_lr)),
            controller,
            critic_lr: config.critic_lr,
            init_dense,
            iterations_since_reset: 0,
            updates: 0,
            init_rng,
            noise_rng: stream_rng(seed, Stream::UpdateNoise),
            config,
        })
    }

    fn build(
        config: &AgentConfig,
        state_dim: usize,
        action_dim: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Networks> {
        let schedule = config.resolved_schedule();
        let actor = GaussianActor::new(
            ActorConfig {
                layer_norm: config.actor_layer_norm,
                ..ActorConfig::new(state_dim, action_dim, config.actor_hidden)
            },
            rng,
        );
        let critic_config = CriticConfig {
            initial_depth: schedule.initial_depth,
            max_depth: schedule.max_depth,
            ..CriticConfig::new(state_dim + action_dim, config.critic_hidden)
        };
        let c1 = ResidualCritic::with_depth(critic_config, schedule.initial_depth, rng)?;
        let c2 = ResidualCritic::with_depth(critic_config, schedule.initial_depth, rng)?;
        Ok(Networks {
            actor,
            critics: [c1, c2],
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value[(0, 0)].exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn depth(&self) -> usize {
        self.critics[0].depth()
    }

    pub fn critic_lr(&self) -> f64 {
        self.critic_lr
    }

    /// Learning rates the two critic optimizers will apply on their next step.
    pub fn critic_optimizer_lrs(&self) -> [f64; 2] {
        [self.critic_opts[0].lr(), self.critic_opts[1].lr()]
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn iterations_since_reset(&self) -> u64 {
        self.iterations_since_reset
    }

    /// `tanh(mean)` when `deterministic`, otherwise a squashed Gaussian draw.
    pub fn act(&self, state: &[f64], deterministic: bool, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::NonFinite("state"));
        }
        if state.len() != self.state_dim {
            return Err(NnError::Shape(format!(
                "state has {} components, agent expects {}",
                state.len(),
                self.state_dim
            ))
            .into());
        }
        let x = Array2::from_shape_vec((1, self.state_dim), state.to_vec()).expect("one row");
        let out = self.actor.forward(&x)?;
        let actions = if deterministic {
            out.deterministic_actions()
        } else {
            let noise = normal_noise(1, self.action_dim, rng);
            GaussianActor::squash(&out, noise).actions
        };
        Ok(actions.row(0).to_vec())
    }

    /// Critic targets for `batch` under the current target networks.
    pub fn targets_for(&self, batch: &Batch, rng: &mut dyn RngCore) -> Result<Array1<f64>> {
        bootstrap_targets(&self.actor, &self.targets, self.alpha(), self.config.gamma, batch, rng)
    }

    /// `Q1(s, a) - y` for every row, with targets frozen as they are now.
    pub fn td_errors(&self, batch: &Batch, rng: &mut dyn RngCore) -> Result<Array1<f64>> {
        let y = self.targets_for(batch, rng)?;
        let q = self.critics[0].forward(&join(&batch.states, &batch.actions))?;
        Ok(q - y)
    }

    /// One soft actor-critic step on `batch`: both critics, the actor, the
    /// temperature, then the target networks. Nothing is modified when a
    /// critic loss is non-finite.
    pub fn update(&mut self, batch: &Batch) -> Result<UpdateOutcome> {
        let rows = batch.len();
        if rows == 0 {
            return Err(AgentError::Config("empty batch".into()));
        }
        let inv = 1.0 / rows as f64;
        let gamma = self.config.gamma;
        let alpha = self.alpha();

        let y = bootstrap_targets(&self.actor, &self.targets, alpha, gamma, batch, &mut self.noise_rng)?;
        let sa = join(&batch.states, &batch.actions);
        let weights = batch
            .weights
            .clone()
            .unwrap_or_else(|| Array1::ones(rows));
        let (q1, cache1) = self.critics[0].forward_cached(&sa)?;
        let (q2, cache2) = self.critics[1].forward_cached(&sa)?;
        let d1 = &q1 - &y;
        let d2 = &q2 - &y;
        let loss1 = (&weights * &d1 * &d1).sum() * inv;
        let loss2 = (&weights * &d2 * &d2).sum() * inv;
        if !(loss1.is_finite() && loss2.is_finite()) {
            return Err(AgentError::NonFinite("critic loss"));
        }
        let td_errors: Vec<f64> = d1
            .iter()
            .zip(&d2)
            .map(|(a, b)| 0.5 * (a.abs() + b.abs()))
            .collect();
        for (k, (diff, cache)) in [(&d1, &cache1), (&d2, &cache2)].into_iter().enumerate() {
            let dq = &weights * diff * (2.0 * inv);
            self.critics[k].zero_grad();
            self.critics[k].backward(cache, &dq, true)?;
            self.critic_opts[k]
                .step(&mut self.critics[k])
                .map_err(divergence)?;
        }

        let out = self.actor.forward(&batch.states)?;
        let noise = normal_noise(rows, self.action_dim, &mut self.noise_rng);
        let sample = GaussianActor::squash(&out, noise);
        let sa_pi = join(&batch.states, &sample.actions);
        let (p1, pc1) = self.critics[0].forward_cached(&sa_pi)?;
        let (p2, pc2) = self.critics[1].forward_cached(&sa_pi)?;
        let first_is_min: Vec<bool> = p1.iter().zip(&p2).map(|(a, b)| a <= b).collect();
        let mut actor_loss = 0.0;
        for i in 0..rows {
            actor_loss += alpha * sample.log_prob[i] - p1[i].min(p2[i]);
        }
        actor_loss *= inv;
        if !actor_loss.is_finite() {
            return Err(AgentError::NonFinite("actor loss"));
        }
        let dq1 = Array1::from_iter(first_is_min.iter().map(|&m| if m { -inv } else { 0.0 }));
        let dq2 = Array1::from_iter(first_is_min.iter().map(|&m| if m { 0.0 } else { -inv }));
        let dx = self.critics[0].backward(&pc1, &dq1, false)? + self.critics[1].backward(&pc2, &dq2, false)?;
        let d_actions = dx.slice(s![.., self.state_dim..]).to_owned();
        let d_log_prob = Array1::from_elem(rows, alpha * inv);
        let (d_mean, d_log_std) = GaussianActor::squash_grads(&sample, &d_actions, &d_log_prob);
        self.actor.zero_grad();
        self.actor.backward(&out.cache, &d_mean, &d_log_std)?;
        self.actor_opt.step(&mut self.actor).map_err(divergence)?;

        let mean_log_prob = sample.log_prob.mean().expect("nonempty batch");
        self.log_alpha.grad[(0, 0)] = -(mean_log_prob + self.target_entropy);
        self.alpha_opt
            .step_params(&mut [&mut self.log_alpha])
            .map_err(divergence)?;

        let tau = self.config.target_tau;
        for k in 0..2 {
            self.targets[k].soft_update_from(&self.critics[k], tau);
        }
        self.updates += 1;
        self.iterations_since_reset += 1;
        Ok(UpdateOutcome {
            record: LossRecord {
                update: self.updates,
                critic_loss: 0.5 * (loss1 + loss2),
                actor_loss,
                alpha: self.alpha(),
                entropy: -mean_log_prob,
                q1_mean: q1.mean().expect("nonempty batch"),
                q2_mean: q2.mean().expect("nonempty batch"),
            },
            td_errors,
        })
    }

    /// Whether the schedule calls for a block now.
    pub fn expansion_due(&self) -> bool {
        self.controller
            .pending(self.iterations_since_reset, self.depth())
    }

    /// Consumes a due schedule entry: appends blocks to both critics, copies
    /// them into the targets, reinitializes critic optimizers and lowers the
    /// critic learning rate in proportion to the dense-layer count.
    pub fn expand_if_due(&mut self) -> Result<Option<GrowthEvent>> {
        let depth_before = self.depth();
        if !self
            .controller
            .should_expand(self.iterations_since_reset, depth_before)
        {
            return Ok(None);
        }
        let schedule = self.controller.schedule();
        let blocks = schedule
            .blocks_per_expansion
            .min(schedule.max_depth - depth_before);
        for _ in 0..blocks {
            for k in 0..2 {
                self.critics[k].append_block(&mut self.init_rng)?;
                let block = self.critics[k].blocks.last().expect("just appended").clone();
                self.targets[k].push_block(block);
            }
        }
        let depth_after = self.depth();
        self.critic_lr = decayed_lr(
            self.config.critic_lr,
            self.init_dense,
            dense_layer_count(depth_after, self.config.dense_count),
        );
        for opt in &mut self.critic_opts {
            opt.reset();
            opt.set_lr(self.critic_lr);
        }
        Ok(Some(GrowthEvent {
            kind: GrowthEventKind::Expand,
            depth_before,
            depth_after,
            critic_lr: self.critic_lr,
        }))
    }

    /// Reinitializes critics (and the actor and temperature when
    /// `reset_actor` is set) with fresh draws from the init stream, clears
    /// optimizer state and restarts the expansion schedule.
    pub fn reset(&mut self) -> Result<GrowthEvent> {
        let depth_before = self.depth();
        let nets = Self::build(&self.config, self.state_dim, self.action_dim, &mut self.init_rng)?;
        self.targets = nets.critics.clone();
        self.critics = nets.critics;
        self.critic_lr = self.config.critic_lr;
        self.critic_opts = [0, 1].map(|_| {
            Adam::new(AdamConfig::adamw(
                self.config.critic_lr,
                self.config.critic_weight_decay,
            ))
        });
        if self.config.reset_actor {
            self.actor = nets.actor;
            self.actor_opt = Adam::new(AdamConfig::adam(self.config.actor_lr));
            self.log_alpha = log_alpha_param(self.config.initial_alpha);
            self.alpha_opt = Adam::new(AdamConfig::adam(self.config.alpha_lr));
        }
        self.controller.rearm();
        self.iterations_since_reset = 0;
        Ok(GrowthEvent {
            kind: GrowthEventKind::Reset,
            depth_before,
            depth_after: self.depth(),
            critic_lr: self.critic_lr,
        })
    }

    /// Dormant ratio of the first critic's hidden layers on a probe batch.
    pub fn critic_dormant_ratio(&self, probe: &Batch, threshold: f64) -> Result<f64> {
        let acts = self.critics[0].hidden_activations(&join(&probe.states, &probe.actions))?;
        Ok(dormant_ratio(&acts, threshold))
    }

    pub fn to_checkpoint(&self, seed: u64, step: u64) -> Checkpoint {
        let mut sections = vec![Section {
            name: "actor".into(),
            tensors: self.actor.param_values(),
        }];
        for k in 0..2 {
            sections.push(Section {
                name: format!("critic{k}"),
                tensors: self.critics[k].param_values(),
            });
            sections.push(Section {
                name: format!("target{k}"),
                tensors: self.targets[k].param_values(),
            });
        }
        sections.push(Section {
            name: "log_alpha".into(),
            tensors: vec![self.log_alpha.value.clone()],
        });
        Checkpoint {
            seed,
            step,
            depth: self.depth() as u32,
            sections,
        }
    }

    /// Rebuilds network state from a checkpoint written by
    /// [`to_checkpoint`](Self::to_checkpoint). Optimizer state starts fresh.
    pub fn from_checkpoint(
        config: AgentConfig,
        state_dim: usize,
        action_dim: usize,
        ckpt: &Checkpoint,
    ) -> Result<Self> {
        let mut agent = Self::new(config, state_dim, action_dim, ckpt.seed)?;
        let depth = ckpt.depth as usize;
        let section = |name: &str| {
            ckpt.section(name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing section {name}")))
        };
        while agent.depth() < depth {
            for k in 0..2 {
                agent.critics[k].append_block(&mut agent.init_rng)?;
                agent.targets[k].append_block(&mut agent.init_rng)?;
            }
        }
        agent.actor.load_param_values(&section("actor")?.tensors)?;
        for k in 0..2 {
            agent.critics[k].load_param_values(&section(&format!("critic{k}"))?.tensors)?;
            agent.targets[k].load_param_values(&section(&format!("target{k}"))?.tensors)?;
        }
        let la = &section("log_alpha")?.tensors;
        agent.log_alpha = Param::new(
            la.first()
                .cloned()
                .ok_or_else(|| NnError::Checkpoint("empty log_alpha".into()))?,
        );
        Ok(agent)
    }
}
