//! Analytic sampling-count expectations and their Monte Carlo checks.
//!
//! Sampling model: one transition is pushed per step and `beta` indexes are
//! then drawn i.i.d. from the sampler, with no eviction (`N <= capacity`).
//! Under a uniform sampler the `t`-th transition (1-based) is expected to be
//! drawn `beta * (H_N - H_{t-1})` times; under pure ER decay every
//! transition's expectation stays below `beta / epsilon`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::replay::{
    DecayLaw, DecayedSampler, IndexSampler, LiveWindow, ReplayError, SamplerKind, UniformSampler,
};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

pub type Result<T> = std::result::Result<T, TheoryError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(TheoryError::InvalidArgument(msg.into()))
}

/// `H_n = sum_{k=1}^n 1/k`, summed smallest term first.
pub fn harmonic(n: u64) -> Result<f64> {
    if n < 1 {
        return invalid("harmonic number needs n >= 1");
    }
    Ok((1..=n).rev().map(|k| 1.0 / k as f64).sum())
}

/// `beta * (H_N - H_{t-1})` for the `t`-th of `n` transitions (1-based).
pub fn expected_samples_uniform(t: u64, n: u64, beta: f64) -> Result<f64> {
    if t < 1 || t > n {
        return invalid(format!("need 1 <= t <= N, got t={t}, N={n}"));
    }
    Ok(beta * (t..=n).rev().map(|i| 1.0 / i as f64).sum::<f64>())
}

/// Open interval bounding `E[n_t] / beta` under uniform replay.
///
/// For `t > 1`: `(ln(N/(t-1)) + 1/N - 1, ln(N/(t-1)) + 1 - 1/(t-1))`.
/// For `t = 1`: `(ln N + 1/N, ln N + 1)`.
pub fn thm1_bounds(t: u64, n: u64) -> Result<(f64, f64)> {
    if t < 1 || t > n {
        return invalid(format!("need 1 <= t <= N, got t={t}, N={n}"));
    }
    let nf = n as f64;
    if t == 1 {
        return Ok((nf.ln() + 1.0 / nf, nf.ln() + 1.0));
    }
    let prev = (t - 1) as f64;
    let log_ratio = (nf / prev).ln();
    Ok((log_ratio + 1.0 / nf - 1.0, log_ratio + 1.0 - 1.0 / prev))
}

/// Upper bound `beta / epsilon` on any transition's expected sample count
/// under pure ER decay.
pub fn thm2_bound(epsilon: f64, beta: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return invalid(format!("decay rate must lie in (0, 1], got {epsilon}"));
    }
    Ok(beta / epsilon)
}

/// Partial sum of the decayed-expectation series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayedSeries {
    pub value: f64,
    pub terms: u64,
    /// Bound on the omitted remainder, in the same units as `value`.
    pub tail_bound: f64,
    /// Remainder certified below `1e-6` of the value.
    pub certified: bool,
}

/// `beta * sum_{t>=0} (1-eps)^t / (1 + (1-eps) + ... + (1-eps)^(i+t-1))`,
/// the expected number of draws of the `i`-th transition (1-based) under
/// pure ER decay, truncated after at most `horizon` terms.
///
/// Summation stops early once a geometric bound on the remainder falls
/// below `1e-12` of the running sum.
pub fn expected_samples_decayed(
    i: u64,
    epsilon: f64,
    beta: f64,
    horizon: u64,
) -> Result<DecayedSeries> {
    if i < 1 {
        return invalid("transition index is 1-based");
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("decay rate must lie in (0, 1), got {epsilon}"));
    }
    let log_keep = (-epsilon).ln_1p();
    // Remainder after `t` terms is at most (1-eps)^t / (1 - (1-eps)^(i+t)).
    let remainder = |t: u64| {
        (t as f64 * log_keep).exp() / -((i + t) as f64 * log_keep).exp_m1()
    };
    let mut sum = 0.0;
    let mut t = 0;
    while t < horizon {
        let decay = (t as f64 * log_keep).exp();
        let mass = -((i + t) as f64 * log_keep).exp_m1() / epsilon;
        sum += decay / mass;
        t += 1;
        if remainder(t) <= 1e-12 * sum {
            break;
        }
    }
    let tail = remainder(t);
    Ok(DecayedSeries {
        value: beta * sum,
        terms: t,
        tail_bound: beta * tail,
        certified: tail <= 1e-6 * sum,
    })
}

/// Exact expected draws of transition `i` (1-based) after `n` pushes under
/// pure ER decay: the series truncated at `t = n - i`.
pub fn expected_samples_decayed_finite(i: u64, n: u64, epsilon: f64, beta: f64) -> Result<f64> {
    if i < 1 || i > n {
        return invalid(format!("need 1 <= i <= N, got i={i}, N={n}"));
    }
    Ok(expected_samples_decayed(i, epsilon, beta, n - i + 1)?.value)
}

/// Exact variance of the `t`-th transition's count under uniform replay.
/// Each of the `beta` draws at step `s >= t` hits it with probability `1/s`.
pub fn variance_samples_uniform(t: u64, n: u64, beta: f64) -> Result<f64> {
    if t < 1 || t > n {
        return invalid(format!("need 1 <= t <= N, got t={t}, N={n}"));
    }
    Ok(beta
        * (t..=n)
            .rev()
            .map(|s| {
                let p = 1.0 / s as f64;
                p * (1.0 - p)
            })
            .sum::<f64>())
}

/// Exact variance of transition `i`'s count after `n` pushes under pure ER
/// decay.
pub fn variance_samples_decayed_finite(i: u64, n: u64, epsilon: f64, beta: f64) -> Result<f64> {
    if i < 1 || i > n {
        return invalid(format!("need 1 <= i <= N, got i={i}, N={n}"));
    }
    let law = DecayLaw::new(epsilon, 0.0)?;
    Ok(beta
        * (i..=n)
            .map(|s| {
                let p = law.decay_factor(s - i) / law.head_mass(s);
                p * (1.0 - p)
            })
            .sum::<f64>())
}

/// Mean and standard error of one transition's sample count across seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingCountStats {
    pub mean: f64,
    /// Infinite when only one seed was run.
    pub stderr: f64,
    pub beta: u64,
    pub horizon: u64,
}

/// Sampler under simulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CountSampler {
    Uniform,
    Decayed(DecayLaw),
    /// Negative control: uniform except that half of all draws return the
    /// oldest live item. Used to check that the harness can fail.
    Corrupted,
}

impl CountSampler {
    fn build(&self, capacity: usize) -> Box<dyn IndexSampler> {
        match *self {
            CountSampler::Uniform => Box::new(UniformSampler::new(capacity)),
            CountSampler::Decayed(law) => Box::new(DecayedSampler::new(capacity, law)),
            CountSampler::Corrupted => Box::new(CorruptedSampler {
                inner: UniformSampler::new(capacity),
            }),
        }
    }
}

struct CorruptedSampler {
    inner: UniformSampler,
}

impl IndexSampler for CorruptedSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Uniform
    }

    fn window(&self) -> &LiveWindow {
        self.inner.window()
    }

    fn advance(&mut self) -> u64 {
        self.inner.advance()
    }

    fn probability(&self, insert_index: u64) -> crate::replay::Result<f64> {
        self.inner.probability(insert_index)
    }

    fn sample(&mut self, batch_size: usize, rng: &mut dyn RngCore) -> crate::replay::Result<Vec<u64>> {
        let oldest = self.window().oldest().ok_or(ReplayError::Empty)?;
        let mut out = self.inner.sample(batch_size, rng)?;
        for idx in &mut out {
            if rng.random::<bool>() {
                *idx = oldest;
            }
        }
        Ok(out)
    }
}

/// Per-transition draw counts of one simulated run.
pub fn simulate_counts(
    sampler: CountSampler,
    n: u64,
    beta: u64,
    capacity: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<u64>> {
    let mut s = sampler.build(capacity);
    let mut counts = vec![0u64; n as usize];
    for _ in 0..n {
        s.advance();
        if beta == 0 {
            continue;
        }
        for idx in s.sample(beta as usize, rng)? {
            counts[idx as usize] += 1;
        }
    }
    Ok(counts)
}

/// Runs `seeds` independent simulations and summarizes each transition's
/// count. Seed `k` uses ChaCha8 stream `k` of `root_seed`.
pub fn monte_carlo_counts(
    sampler: CountSampler,
    n: u64,
    beta: u64,
    capacity: usize,
    seeds: u32,
    root_seed: u64,
) -> Result<Vec<SamplingCountStats>> {
    if n < 1 || seeds < 1 {
        return invalid("need at least one step and one seed");
    }
    if n > capacity as u64 {
        return invalid(format!(
            "horizon {n} exceeds capacity {capacity}; the sampling model assumes no eviction"
        ));
    }
    let mut sum = vec![0.0f64; n as usize];
    let mut sum_sq = vec![0.0f64; n as usize];
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
        rng.set_stream(seed as u64);
        let counts = simulate_counts(sampler, n, beta, capacity, &mut rng)?;
        for (k, &c) in counts.iter().enumerate() {
            let c = c as f64;
            sum[k] += c;
            sum_sq[k] += c * c;
        }
    }
    let m = seeds as f64;
    Ok(sum
        .iter()
        .zip(&sum_sq)
        .map(|(&s, &sq)| {
            let mean = s / m;
            let stderr = if seeds > 1 {
                let var = ((sq - m * mean * mean) / (m - 1.0)).max(0.0);
                (var / m).sqrt()
            } else {
                f64::INFINITY
            };
            SamplingCountStats {
                mean,
                stderr,
                beta,
                horizon: n,
            }
        })
        .collect())
}

/// One line of the theorem verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoremRow {
    pub theorem: String,
    pub params: String,
    pub analytic: f64,
    pub lower: f64,
    pub upper: f64,
    pub empirical_mean: Option<f64>,
    pub stderr: Option<f64>,
    pub pass: bool,
}

/// Grid and simulation settings for [`verify_theorems`].
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub uniform_horizons: Vec<u64>,
    pub decay_rates: Vec<f64>,
    pub decay_indices: Vec<u64>,
    pub decay_steps: u64,
    pub beta: u64,
    pub seeds: u32,
    pub root_seed: u64,
    pub corrupt_sampler: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            uniform_horizons: vec![10, 100, 1000],
            decay_rates: vec![0.5, 0.1, 0.01, 1e-3],
            decay_indices: vec![1, 2, 10],
            decay_steps: 20_000,
            beta: 8,
            seeds: 10,
            root_seed: 0,
            corrupt_sampler: false,
        }
    }
}

/// Empirical standard error combined with the exact one implied by
/// `variance`, so rarely drawn items cannot report a zero error.
fn combined_stderr(empirical: f64, variance: f64, seeds: u32) -> f64 {
    (empirical * empirical + variance / seeds as f64).sqrt()
}

fn within_stderr(mean: f64, analytic: f64, stderr: f64) -> bool {
    (mean - analytic).abs() <= 3.0 * stderr
}

/// Analytic containment checks plus Monte Carlo agreement for both theorems.
pub fn verify_theorems(cfg: &VerifyConfig) -> Result<Vec<TheoremRow>> {
    let mut rows = Vec::new();
    let beta = cfg.beta as f64;
    let uniform = if cfg.corrupt_sampler {
        CountSampler::Corrupted
    } else {
        CountSampler::Uniform
    };

    for &n in &cfg.uniform_horizons {
        for t in 1..=n {
            let exact = expected_samples_uniform(t, n, 1.0)?;
            let (lo, hi) = thm1_bounds(t, n)?;
            rows.push(TheoremRow {
                theorem: "thm1_bounds".into(),
                params: format!("t={t};N={n}"),
                analytic: exact,
                lower: lo,
                upper: hi,
                empirical_mean: None,
                stderr: None,
                pass: lo < exact && exact < hi,
            });
        }
        let stats = monte_carlo_counts(uniform, n, cfg.beta, n as usize, cfg.seeds, cfg.root_seed)?;
        let mut probes = vec![1, 2, n.div_ceil(2), n];
        probes.dedup();
        for t in probes {
            let analytic = expected_samples_uniform(t, n, beta)?;
            let s = stats[(t - 1) as usize];
            let se = combined_stderr(s.stderr, variance_samples_uniform(t, n, beta)?, cfg.seeds);
            let (lo, hi) = thm1_bounds(t, n)?;
            rows.push(TheoremRow {
                theorem: "thm1_monte_carlo".into(),
                params: format!("t={t};N={n};beta={}", cfg.beta),
                analytic,
                lower: beta * lo,
                upper: beta * hi,
                empirical_mean: Some(s.mean),
                stderr: Some(se),
                pass: within_stderr(s.mean, analytic, se),
            });
        }
    }

    for &eps in &cfg.decay_rates {
        let bound = thm2_bound(eps, beta)?;
        for &i in &cfg.decay_indices {
            let series = expected_samples_decayed(i, eps, beta, 100_000_000)?;
            rows.push(TheoremRow {
                theorem: "thm2_series".into(),
                params: format!("i={i};eps={eps};beta={}", cfg.beta),
                analytic: series.value,
                lower: 0.0,
                upper: bound,
                empirical_mean: None,
                stderr: None,
                pass: series.certified && series.value < bound,
            });
        }
        let n = cfg.decay_steps;
        let law = DecayLaw::new(eps, 0.0)?;
        let sampler = if cfg.corrupt_sampler {
            CountSampler::Corrupted
        } else {
            CountSampler::Decayed(law)
        };
        let stats = monte_carlo_counts(sampler, n, cfg.beta, n as usize, cfg.seeds, cfg.root_seed)?;
        let (argmax, peak) = stats
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
            .expect("nonempty");
        rows.push(TheoremRow {
            theorem: "thm2_monte_carlo_max".into(),
            params: format!("eps={eps};N={n};beta={};argmax_i={}", cfg.beta, argmax + 1),
            analytic: bound,
            lower: 0.0,
            upper: bound,
            empirical_mean: Some(peak.mean),
            stderr: Some(peak.stderr),
            pass: stats.iter().all(|s| s.mean < bound),
        });
        let i = 1;
        let analytic = expected_samples_decayed_finite(i, n, eps, beta)?;
        let s = stats[0];
        let se = combined_stderr(
            s.stderr,
            variance_samples_decayed_finite(i, n, eps, beta)?,
            cfg.seeds,
        );
        rows.push(TheoremRow {
            theorem: "thm2_monte_carlo".into(),
            params: format!("i={i};eps={eps};N={n};beta={}", cfg.beta),
            analytic,
            lower: 0.0,
            upper: bound,
            empirical_mean: Some(s.mean),
            stderr: Some(se),
            pass: within_stderr(s.mean, analytic, se) && s.mean < bound,
        });
    }
    Ok(rows)
}
