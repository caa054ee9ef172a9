use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    stream_rng, AgentConfig, AgentError, GrowthEvent, LossRecord, Result, SacAgent, Stream,
};
use crate::diagnostics::{
    critic_buffer_loss, write_rows, DormantRow, HeatmapAccumulator, SampleCounter,
};
use crate::envs::{make_env, Environment};
use crate::growth::ResetList;
use crate::nn::{write_checkpoint, Checkpoint, DEFAULT_DORMANT_THRESHOLD};
use crate::replay::{write_snapshot, Batch, ReplayBuffer, SamplerKind, Schema, Snapshot};

/// Everything one training run needs besides the agent hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env: String,
    pub env_steps: u64,
    pub seed: u64,
    /// Env steps between metrics rows; each row carries an evaluation.
    pub log_interval: u64,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    /// Env steps between dormant-ratio probes; 0 disables periodic probes.
    pub dormant_interval: u64,
    pub dormant_probe: usize,
    pub dormant_threshold: f64,
    /// Env steps between heatmap checkpoints; 0 disables the heatmap.
    pub heatmap_interval: u64,
    pub heatmap_bucket: u64,
    pub heatmap_max_per_bucket: usize,
    pub agent: AgentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "pendulum".into(),
            env_steps: 100_000,
            seed: 0,
            log_interval: 1_000,
            eval_episodes: 5,
            final_eval_episodes: 10,
            dormant_interval: 5_000,
            dormant_probe: 256,
            dormant_threshold: DEFAULT_DORMANT_THRESHOLD,
            heatmap_interval: 0,
            heatmap_bucket: 5_000,
            heatmap_max_per_bucket: 50_000,
            agent: AgentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        make_env(&self.env)?;
        if self.log_interval == 0 {
            return Err(AgentError::Config("log_interval must be positive".into()));
        }
        if self.heatmap_interval > 0 && self.heatmap_bucket == 0 {
            return Err(AgentError::Config("heatmap_bucket must be positive".into()));
        }
        if self.dormant_probe == 0 {
            return Err(AgentError::Config("dormant_probe must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation of deterministic-policy returns.
pub fn evaluate(
    agent: &SacAgent,
    env: &mut dyn Environment,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<EvalStats> {
    if episodes == 0 {
        return Err(AgentError::Config("episodes must be at least 1".into()));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng.next_u64());
        let mut total = 0.0;
        loop {
            let action = agent.act(&obs, true, rng)?;
            let step = env.step(&action)?;
            total += step.reward;
            obs = step.obs;
            if step.terminated || step.truncated {
                break;
            }
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalStats {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub updates: u64,
    pub episode_return: Option<f64>,
    pub eval_mean: Option<f64>,
    pub eval_std: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub entropy: Option<f64>,
    pub q_mean: Option<f64>,
    pub dormant_ratio: Option<f64>,
    pub depth: usize,
    pub critic_lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub step: u64,
    pub event: String,
    pub depth_before: usize,
    pub depth_after: usize,
    pub lr: f64,
}

/// Outputs of a finished or aborted run.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config: TrainConfig,
    pub metrics: Vec<MetricsRow>,
    pub events: Vec<EventRow>,
    pub dormant: Vec<DormantRow>,
    pub heatmap: Option<HeatmapAccumulator>,
    pub sample_counts: SampleCounter,
    pub final_eval: Option<EvalStats>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
    pub env_steps: u64,
    pub updates: u64,
    pub checkpoint: Checkpoint,
    pub replay: Snapshot,
}

impl RunArtifacts {
    /// Writes `metrics.csv`, `events.csv`, `dormant.csv`,
    /// `sample_counts.csv`, `heatmap.csv` (when enabled), `checkpoint.bin`
    /// and `replay.bin` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(File::create(dir.join("metrics.csv"))?, &self.metrics)?;
        write_rows(File::create(dir.join("events.csv"))?, &self.events)?;
        write_rows(File::create(dir.join("dormant.csv"))?, &self.dormant)?;
        self.sample_counts
            .write_csv(BufWriter::new(File::create(dir.join("sample_counts.csv"))?))?;
        if let Some(h) = &self.heatmap {
            h.save(&dir.join("heatmap.csv"))?;
        }
        write_checkpoint(
            &mut BufWriter::new(File::create(dir.join("checkpoint.bin"))?),
            &self.checkpoint,
        )?;
        write_snapshot(
            &mut BufWriter::new(File::create(dir.join("replay.bin"))?),
            &self.replay,
        )?;
        Ok(())
    }
}

#[derive(Default)]
struct LossMeans {
    n: usize,
    critic: f64,
    actor: f64,
    alpha: f64,
    entropy: f64,
    q: f64,
}

impl LossMeans {
    fn add(&mut self, r: &LossRecord) {
        self.n += 1;
        self.critic += r.critic_loss;
        self.actor += r.actor_loss;
        self.alpha += r.alpha;
        self.entropy += r.entropy;
        self.q += 0.5 * (r.q1_mean + r.q2_mean);
    }

    fn take(&mut self) -> [Option<f64>; 5] {
        let out = if self.n == 0 {
            [None; 5]
        } else {
            let n = self.n as f64;
            [self.critic, self.actor, self.alpha, self.entropy, self.q].map(|v| Some(v / n))
        };
        *self = Self::default();
        out
    }
}

/// Step-wise training loop: each [`step`](Self::step) takes one env step and
/// runs the replay-ratio many updates that follow it.
pub struct Trainer {
    config: TrainConfig,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    agent: SacAgent,
    buffer: ReplayBuffer,
    resets: ResetList,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    diag_rng: ChaCha8Rng,
    obs: Vec<f64>,
    episode_return: f64,
    recent_returns: Vec<f64>,
    losses: LossMeans,
    last_dormant: Option<f64>,
    step: u64,
    metrics: Vec<MetricsRow>,
    events: Vec<EventRow>,
    dormant: Vec<DormantRow>,
    heatmap: Option<HeatmapAccumulator>,
    counts: SampleCounter,
    aborted: Option<String>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let mut env = make_env(&config.env)?;
        let eval_env = make_env(&config.env)?;
        let schema = Schema {
            state_dim: env.obs_dim(),
            action_dim: env.action_dim(),
        };
        let rc = &config.agent.replay;
        let buffer = match rc.sampler {
            SamplerKind::Uniform => ReplayBuffer::uniform(schema, rc.capacity),
            SamplerKind::Decay => ReplayBuffer::decayed(schema, rc.capacity, rc.decay),
            SamplerKind::Per => ReplayBuffer::prioritized(schema, rc.capacity, rc.per)?,
        };
        let agent = SacAgent::new(config.agent.clone(), schema.state_dim, schema.action_dim, seed)?;
        let mut env_rng = stream_rng(seed, Stream::Env);
        let obs = env.reset(env_rng.next_u64());
        Ok(Self {
            resets: config.agent.resolved_resets(),
            heatmap: (config.heatmap_interval > 0)
                .then(|| HeatmapAccumulator::new(config.heatmap_bucket)),
            env,
            eval_env,
            agent,
            buffer,
            env_rng,
            explore_rng: stream_rng(seed, Stream::Explore),
            replay_rng: stream_rng(seed, Stream::Replay),
            eval_rng: stream_rng(seed, Stream::Eval),
            diag_rng: stream_rng(seed, Stream::Diagnostics),
            obs,
            episode_return: 0.0,
            recent_returns: Vec::new(),
            losses: LossMeans::default(),
            last_dormant: None,
            step: 0,
            metrics: Vec::new(),
            events: Vec::new(),
            dormant: Vec::new(),
            counts: SampleCounter::new(),
            aborted: None,
            config,
        })
    }

    pub fn agent(&self) -> &SacAgent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn env_steps(&self) -> u64 {
        self.step
    }

    pub fn events(&self) -> &[EventRow] {
        &self.events
    }

    pub fn dormant_trace(&self) -> &[DormantRow] {
        &self.dormant
    }

    pub fn sample_counts(&self) -> &SampleCounter {
        &self.counts
    }

    pub fn aborted(&self) -> Option<&str> {
        self.aborted.as_deref()
    }

    pub fn is_finished(&self) -> bool {
        self.aborted.is_some() || self.step >= self.config.env_steps
    }

    /// Advances one env step. Returns false once the run is over, either by
    /// reaching `env_steps` or by a divergence abort.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        match self.step_inner() {
            Ok(()) => Ok(!self.is_finished()),
            Err(e) if e.is_divergence() => {
                self.aborted = Some(e.to_string());
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }

    fn step_inner(&mut self) -> Result<()> {
        if self.resets.contains(self.step) {
            let event = self.agent.reset()?;
            self.log_event(event);
            if !self.buffer.is_empty() {
                let probe = self.probe_batch();
                self.measure_dormant(&probe, "reset")?;
            }
        }

        let warm = self.step < self.config.agent.warmup_steps;
        let action: Vec<f64> = if warm {
            (0..self.env.action_dim())
                .map(|_| self.explore_rng.random_range(-1.0..1.0))
                .collect()
        } else {
            self.agent.act(&self.obs, false, &mut self.explore_rng)?
        };
        let result = self.env.step(&action)?;
        self.buffer
            .push(&self.obs, &action, result.reward, &result.obs, result.terminated)?;
        self.episode_return += result.reward;
        if result.terminated || result.truncated {
            self.recent_returns.push(self.episode_return);
            self.episode_return = 0.0;
            self.obs = self.env.reset(self.env_rng.next_u64());
        } else {
            self.obs = result.obs;
        }
        self.step += 1;

        let batch_size = self.config.agent.batch_size;
        if self.step > self.config.agent.warmup_steps && self.buffer.len() >= batch_size {
            let progress = self.step as f64 / self.config.env_steps.max(1) as f64;
            self.buffer.set_progress(progress);
            for _ in 0..self.config.agent.replay_ratio {
                self.update_once(batch_size)?;
            }
        }

        if self.config.dormant_interval > 0 && self.step.is_multiple_of(self.config.dormant_interval) {
            let probe = self.probe_batch();
            self.measure_dormant(&probe, "")?;
        }
        if let Some(every) = (self.config.heatmap_interval > 0).then_some(self.config.heatmap_interval) {
            if self.step.is_multiple_of(every) {
                self.record_heatmap()?;
            }
        }
        if self.step.is_multiple_of(self.config.log_interval) || self.step == self.config.env_steps {
            self.log_metrics()?;
        }
        Ok(())
    }

    fn update_once(&mut self, batch_size: usize) -> Result<()> {
        let batch = self.buffer.sample_batch(batch_size, &mut self.replay_rng)?;
        let outcome = self.agent.update(&batch)?;
        self.counts.record(&batch.indices);
        if batch.weights.is_some() {
            self.buffer
                .update_priorities(&batch.indices, &outcome.td_errors)?;
        }
        self.losses.add(&outcome.record);
        if self.agent.expansion_due() {
            let probe = self.probe_batch();
            self.measure_dormant(&probe, "expand_before")?;
            if let Some(event) = self.agent.expand_if_due()? {
                self.log_event(event);
            }
            self.measure_dormant(&probe, "expand_after")?;
        }
        Ok(())
    }

    fn log_event(&mut self, e: GrowthEvent) {
        self.events.push(EventRow {
            step: self.step,
            event: e.kind.name().to_string(),
            depth_before: e.depth_before,
            depth_after: e.depth_after,
            lr: e.critic_lr,
        });
    }

    /// Uniform draw of live transitions, independent of the training sampler.
    fn probe_batch(&mut self) -> Batch {
        let live = self.buffer.live_indices();
        let n = self.config.dormant_probe.min(live.end.saturating_sub(live.start) as usize);
        let indices = (0..n)
            .map(|_| self.diag_rng.random_range(live.clone()))
            .collect();
        self.buffer.gather(indices, None)
    }

    fn measure_dormant(&mut self, probe: &Batch, event: &str) -> Result<()> {
        if probe.is_empty() {
            return Ok(());
        }
        let ratio = self
            .agent
            .critic_dormant_ratio(probe, self.config.dormant_threshold)?;
        self.last_dormant = Some(ratio);
        self.dormant.push(DormantRow {
            step: self.step,
            ratio,
            event: event.to_string(),
        });
        Ok(())
    }

    fn record_heatmap(&mut self) -> Result<()> {
        let Some(heatmap) = self.heatmap.as_mut() else {
            return Ok(());
        };
        let agent = &self.agent;
        let rng = &mut self.diag_rng;
        let losses = critic_buffer_loss(
            &self.buffer,
            heatmap.bucket_size(),
            self.config.heatmap_max_per_bucket,
            |b: &Batch| agent.td_errors(b, rng),
        )?;
        heatmap.record(self.step, &losses);
        Ok(())
    }

    fn log_metrics(&mut self) -> Result<()> {
        let (eval_mean, eval_std) = if self.config.eval_episodes > 0 {
            let s = evaluate(
                &self.agent,
                self.eval_env.as_mut(),
                self.config.eval_episodes,
                &mut self.eval_rng,
            )?;
            (Some(s.mean), Some(s.std))
        } else {
            (None, None)
        };
        let episode_return = (!self.recent_returns.is_empty()).then(|| {
            self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64
        });
        self.recent_returns.clear();
        let [critic_loss, actor_loss, alpha, entropy, q_mean] = self.losses.take();
        self.metrics.push(MetricsRow {
            step: self.step,
            updates: self.agent.updates(),
            episode_return,
            eval_mean,
            eval_std,
            critic_loss,
            actor_loss,
            alpha,
            entropy,
            q_mean,
            dormant_ratio: self.last_dormant,
            depth: self.agent.depth(),
            critic_lr: self.agent.critic_lr(),
        });
        Ok(())
    }

    /// Runs any remaining steps, then the final evaluation.
    pub fn run(mut self) -> Result<RunArtifacts> {
        while self.step()? {}
        self.finish()
    }

    /// Stops here and packages what the run produced so far.
    pub fn finish(mut self) -> Result<RunArtifacts> {
        let final_eval = if self.aborted.is_none() && self.config.final_eval_episodes > 0 {
            Some(evaluate(
                &self.agent,
                self.eval_env.as_mut(),
                self.config.final_eval_episodes,
                &mut self.eval_rng,
            )?)
        } else {
            None
        };
        self.counts.observe_pushed(self.buffer.live_indices().end);
        Ok(RunArtifacts {
            checkpoint: self.agent.to_checkpoint(self.config.seed, self.step),
            replay: self.buffer.snapshot(),
            env_steps: self.step,
            updates: self.agent.updates(),
            metrics: self.metrics,
            events: self.events,
            dormant: self.dormant,
            heatmap: self.heatmap,
            sample_counts: self.counts,
            final_eval,
            aborted: self.aborted,
            config: self.config,
        })
    }
}
