use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fog_core::agent::{ExpansionMode, SacAgent, Trainer};
use fog_core::diagnostics::{critic_buffer_loss, write_rows, HeatmapAccumulator};
use fog_core::envs::make_env;
use fog_core::nn::read_checkpoint;
use fog_core::replay::{read_snapshot, DecayLaw, ReplayBuffer, SamplerKind};
use fog_core::theory::{
    expected_samples_uniform, monte_carlo_counts, verify_theorems, CountSampler, TheoremRow,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::FileConfig;
use crate::Command;

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(e) | CliError::Run(e) => write!(f, "{e:#}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Run(_) => ExitCode::from(1),
        }
    }
}

trait Classify<T> {
    fn usage(self) -> Result<T, CliError>;
    fn run(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Usage(e.into()))
    }

    fn run(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Run(e.into()))
    }
}

pub fn dispatch(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::VerifyTheorems {
            config,
            seeds,
            beta,
            root_seed,
            out,
            corrupt_sampler,
        } => {
            let mut file = FileConfig::load(config.config.as_deref()).usage()?;
            let v = &mut file.verify;
            if let Some(s) = seeds {
                v.seeds = s;
            }
            if let Some(b) = beta {
                v.beta = b;
            }
            if let Some(r) = root_seed {
                v.root_seed = r;
            }
            verify(&file, corrupt_sampler, out.as_deref())
        }
        Command::SimulateSampling {
            config,
            steps,
            beta,
            epsilon,
            tau,
            seeds,
            out,
        } => {
            let mut file = FileConfig::load(config.config.as_deref()).usage()?;
            let s = &mut file.simulate;
            if let Some(v) = steps {
                s.steps = v;
            }
            if let Some(v) = beta {
                s.beta = v;
            }
            if epsilon.is_some() || tau.is_some() {
                s.decay = DecayLaw::new(
                    epsilon.unwrap_or(s.decay.epsilon()),
                    tau.unwrap_or(s.decay.tau()),
                )
                .usage()?;
            }
            if let Some(v) = seeds {
                s.seeds = v;
            }
            simulate(&file, out.as_deref())
        }
        Command::Train {
            config,
            seed,
            env,
            steps,
            out,
        } => {
            let mut file = FileConfig::load(config.config.as_deref()).usage()?;
            if let Some(s) = seed {
                file.train.seed = s;
            }
            if let Some(e) = env {
                file.train.env = e;
            }
            if let Some(s) = steps {
                file.train.env_steps = s;
            }
            file.train.validate().usage()?;
            let summary = train_one(&file, &out)?;
            println!("{}", summary.line());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate {
            config,
            seeds,
            envs,
            samplers,
            modes,
            steps,
            out,
        } => {
            let mut file = FileConfig::load(config.config.as_deref()).usage()?;
            let a = &mut file.ablate;
            if let Some(n) = seeds {
                a.seeds = (0..n).collect();
            }
            if let Some(e) = envs {
                a.envs = e;
            }
            if let Some(s) = samplers {
                a.samplers = s.iter().map(|k| parse_sampler(k)).collect::<Result<_, _>>()?;
            }
            if let Some(m) = modes {
                a.modes = m
                    .iter()
                    .map(|k| k.parse::<ExpansionMode>().map_err(anyhow::Error::msg))
                    .collect::<Result<_, _>>()
                    .usage()?;
            }
            if let Some(s) = steps {
                file.train.env_steps = s;
            }
            ablate(&file, &out)
        }
        Command::Heatmap { run, bucket, out } => heatmap(&run, bucket, out.as_deref()),
    }
}

fn parse_sampler(name: &str) -> Result<SamplerKind, CliError> {
    match name {
        "uniform" => Ok(SamplerKind::Uniform),
        "decay" => Ok(SamplerKind::Decay),
        "per" => Ok(SamplerKind::Per),
        other => Err(CliError::Usage(anyhow::anyhow!(
            "unknown sampler {other:?}; expected uniform, decay or per"
        ))),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).run()?)),
        None => Box::new(io::stdout().lock()),
    })
}

#[derive(Serialize)]
struct TheoremCsvRow<'a> {
    theorem: &'a str,
    params: &'a str,
    analytic: f64,
    lower: f64,
    upper: f64,
    empirical_mean: Option<f64>,
    stderr: Option<f64>,
    pass: bool,
}

fn verify(file: &FileConfig, corrupt: bool, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let cfg = file.verify.to_core(corrupt);
    let rows: Vec<TheoremRow> = verify_theorems(&cfg).usage()?;
    let csv_rows: Vec<TheoremCsvRow> = rows
        .iter()
        .map(|r| TheoremCsvRow {
            theorem: &r.theorem,
            params: &r.params,
            analytic: r.analytic,
            lower: r.lower,
            upper: r.upper,
            empirical_mean: r.empirical_mean,
            stderr: r.stderr,
            pass: r.pass,
        })
        .collect();
    write_rows(output(out)?, &csv_rows).run()?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    eprintln!("{} checks, {} failed", rows.len(), failed);
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Serialize)]
struct SamplingRow {
    insert_index: u64,
    uniform_mean: f64,
    uniform_stderr: f64,
    uniform_analytic: f64,
    decayed_mean: f64,
    decayed_stderr: f64,
}

fn simulate(file: &FileConfig, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let s = &file.simulate;
    let capacity = s.steps.max(1) as usize;
    let uniform = monte_carlo_counts(CountSampler::Uniform, s.steps, s.beta, capacity, s.seeds, s.root_seed)
        .usage()?;
    let decayed = monte_carlo_counts(
        CountSampler::Decayed(s.decay),
        s.steps,
        s.beta,
        capacity,
        s.seeds,
        s.root_seed,
    )
    .usage()?;
    let rows = uniform
        .iter()
        .zip(&decayed)
        .enumerate()
        .map(|(k, (u, d))| {
            Ok(SamplingRow {
                insert_index: k as u64,
                uniform_mean: u.mean,
                uniform_stderr: u.stderr,
                uniform_analytic: expected_samples_uniform(k as u64 + 1, s.steps, s.beta as f64)?,
                decayed_mean: d.mean,
                decayed_stderr: d.stderr,
            })
        })
        .collect::<Result<Vec<_>, fog_core::theory::TheoryError>>()
        .run()?;
    write_rows(output(out)?, &rows).run()?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Debug, Serialize)]
struct RunSummary {
    env: String,
    sampler: String,
    mode: String,
    seed: u64,
    env_steps: u64,
    updates: u64,
    final_return_mean: Option<f64>,
    final_return_std: Option<f64>,
    aborted: bool,
    resets: usize,
    expansions: usize,
    final_depth: u32,
}

impl RunSummary {
    fn line(&self) -> String {
        let ret = match (self.final_return_mean, self.final_return_std) {
            (Some(m), Some(s)) => format!("{m:.2} +/- {s:.2}"),
            _ => "n/a".into(),
        };
        format!(
            "{} {} {} seed {}: return {}, {} updates, depth {}{}",
            self.env,
            self.sampler,
            self.mode,
            self.seed,
            ret,
            self.updates,
            self.final_depth,
            if self.aborted { ", aborted" } else { "" }
        )
    }
}

fn sampler_name(kind: SamplerKind) -> String {
    kind.to_string()
}

fn train_one(file: &FileConfig, out: &Path) -> Result<RunSummary, CliError> {
    let trainer = Trainer::new(file.train.clone()).usage()?;
    let art = trainer.run().run()?;
    art.write_to(out).run()?;
    std::fs::write(out.join("config.toml"), file.to_toml().run()?).run()?;
    let cfg = &file.train;
    Ok(RunSummary {
        env: cfg.env.clone(),
        sampler: sampler_name(cfg.agent.replay.sampler),
        mode: cfg.agent.expansion.name().to_string(),
        seed: cfg.seed,
        env_steps: art.env_steps,
        updates: art.updates,
        final_return_mean: art.final_eval.map(|e| e.mean),
        final_return_std: art.final_eval.map(|e| e.std),
        aborted: art.aborted.is_some(),
        resets: art.events.iter().filter(|e| e.event == "reset").count(),
        expansions: art.events.iter().filter(|e| e.event == "expand").count(),
        final_depth: art.checkpoint.depth,
    })
}

fn ablate(file: &FileConfig, out: &Path) -> Result<ExitCode, CliError> {
    let a = &file.ablate;
    if a.envs.is_empty() || a.samplers.is_empty() || a.modes.is_empty() || a.seeds.is_empty() {
        return Err(CliError::Usage(anyhow::anyhow!(
            "ablation needs at least one env, sampler, mode and seed"
        )));
    }
    for env in &a.envs {
        make_env(env).usage()?;
    }
    std::fs::create_dir_all(out).run()?;
    let mut summaries = Vec::new();
    for env in &a.envs {
        for &sampler in &a.samplers {
            for &mode in &a.modes {
                for &seed in &a.seeds {
                    let mut run = file.clone();
                    run.train.env = env.clone();
                    run.train.seed = seed;
                    run.train.agent.replay.sampler = sampler;
                    run.train.agent.expansion = mode;
                    run.train.validate().usage()?;
                    let dir: PathBuf = out
                        .join(env)
                        .join(sampler_name(sampler))
                        .join(mode.name())
                        .join(format!("seed_{seed}"));
                    let summary = train_one(&run, &dir)?;
                    eprintln!("{}", summary.line());
                    summaries.push(summary);
                }
            }
        }
    }
    write_rows(File::create(out.join("summary.csv")).run()?, &summaries).run()?;
    write_comparison(&summaries, &a.samplers, &out.join("comparison.csv"))?;
    Ok(ExitCode::SUCCESS)
}

/// One row per (env, mode, seed) with a final-return column per sampler.
fn write_comparison(
    summaries: &[RunSummary],
    samplers: &[SamplerKind],
    path: &Path,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).run()?;
    let mut header = vec!["env".to_string(), "mode".into(), "seed".into()];
    header.extend(samplers.iter().map(|s| format!("return_{}", sampler_name(*s))));
    w.write_record(&header).run()?;
    let mut keys: Vec<(String, String, u64)> = summaries
        .iter()
        .map(|s| (s.env.clone(), s.mode.clone(), s.seed))
        .collect();
    keys.dedup();
    keys.sort();
    keys.dedup();
    for (env, mode, seed) in keys {
        let mut record = vec![env.clone(), mode.clone(), seed.to_string()];
        for sampler in samplers {
            let name = sampler_name(*sampler);
            let cell = summaries
                .iter()
                .find(|s| s.env == env && s.mode == mode && s.seed == seed && s.sampler == name)
                .and_then(|s| s.final_return_mean)
                .map(|v| v.to_string())
                .unwrap_or_default();
            record.push(cell);
        }
        w.write_record(&record).run()?;
    }
    w.flush().run()?;
    Ok(())
}

fn heatmap(run: &Path, bucket: Option<u64>, out: Option<&Path>) -> Result<ExitCode, CliError> {
    let file = FileConfig::load(Some(&run.join("config.toml"))).usage()?;
    let ckpt = read_checkpoint(&mut io::BufReader::new(
        File::open(run.join("checkpoint.bin")).usage()?,
    ))
    .run()?;
    let snapshot = read_snapshot(&mut io::BufReader::new(
        File::open(run.join("replay.bin")).usage()?,
    ))
    .run()?;
    let buffer = ReplayBuffer::from_snapshot(&snapshot).run()?;
    let schema = buffer.schema();
    let agent = SacAgent::from_checkpoint(
        file.train.agent.clone(),
        schema.state_dim,
        schema.action_dim,
        &ckpt,
    )
    .run()?;
    let bucket = bucket.unwrap_or(file.train.heatmap_bucket);
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.seed);
    let losses = critic_buffer_loss(
        &buffer,
        bucket,
        file.train.heatmap_max_per_bucket,
        |b| agent.td_errors(b, &mut rng),
    )
    .usage()?;
    let mut acc = HeatmapAccumulator::new(bucket);
    acc.record(ckpt.step, &losses);
    acc.write_csv(output(out)?).run()?;
    Ok(ExitCode::SUCCESS)
}
