//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Numeric arguments select criteria.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fog_core::agent::{
    AgentConfig, ExpansionMode, GrowthEventKind, SacAgent, TrainConfig, Trainer,
};
use fog_core::diagnostics::HeatmapAccumulator;
use fog_core::envs::make_env;
use fog_core::growth::{ExpansionSchedule, ResetList};
use fog_core::nn::{
    elu, elu_grad_from_output, ActorConfig, CriticConfig, Dense, GaussianActor, LayerNorm,
    Module, Param, ResidualBlock, ResidualCritic, DEFAULT_DORMANT_THRESHOLD,
};
use fog_core::replay::{
    DecayLaw, DecayedSampler, IndexSampler, ReplayBuffer, SamplerKind, Schema,
};
use fog_core::theory::{
    expected_samples_decayed, expected_samples_uniform, monte_carlo_counts, thm1_bounds,
    thm2_bound, verify_theorems, CountSampler, VerifyConfig,
};
use ndarray::{Array1, Array2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal))
}

// ---------------------------------------------------------------------------
// 1. Uniform replay expectation and its bounds

fn criterion_1() -> Check {
    let cfg = VerifyConfig {
        decay_rates: vec![],
        ..VerifyConfig::default()
    };
    let rows = verify_theorems(&cfg).map_err(|e| e.to_string())?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    ensure(failed.is_empty(), || {
        format!("{} report rows fail, first {:?}", failed.len(), failed[0])
    })?;

    let beta = 8.0;
    let mut bound_checks = 0;
    for n in [10u64, 100, 1000] {
        let nf = n as f64;
        // Forward summation, largest term first.
        let mut tail = vec![0.0; n as usize + 2];
        for i in (1..=n).rev() {
            tail[i as usize] = tail[i as usize + 1] + 1.0 / i as f64;
        }
        for t in 1..=n {
            let oracle = tail[t as usize];
            let lib = expected_samples_uniform(t, n, 1.0).map_err(|e| e.to_string())?;
            ensure((lib - oracle).abs() <= 1e-12 * oracle, || {
                format!("E[n_t]/beta mismatch at t={t} N={n}: {lib} vs {oracle}")
            })?;
            let (lo, hi) = if t == 1 {
                (nf.ln() + 1.0 / nf, nf.ln() + 1.0)
            } else {
                let p = (t - 1) as f64;
                ((nf.ln() + 1.0 / nf) - (p.ln() + 1.0), (nf.ln() + 1.0) - (p.ln() + 1.0 / p))
            };
            let (llo, lhi) = thm1_bounds(t, n).map_err(|e| e.to_string())?;
            ensure((llo - lo).abs() < 1e-12 && (lhi - hi).abs() < 1e-12, || {
                format!("bounds mismatch at t={t} N={n}")
            })?;
            ensure(lo < oracle && oracle < hi, || {
                format!("expectation {oracle} outside ({lo}, {hi}) at t={t} N={n}")
            })?;
            bound_checks += 1;
        }

        // Independent Monte Carlo: 10 seeds, beta draws per push.
        let seeds = 10;
        let mut sums = vec![0.0; n as usize];
        let mut sq = vec![0.0; n as usize];
        for seed in 0..seeds {
            let mut r = rng(1_000 + seed);
            let mut counts = vec![0u64; n as usize];
            for step in 1..=n {
                for _ in 0..beta as u64 {
                    counts[r.random_range(0..step) as usize] += 1;
                }
            }
            for (k, &c) in counts.iter().enumerate() {
                sums[k] += c as f64;
                sq[k] += (c * c) as f64;
            }
        }
        let m = seeds as f64;
        for t in [1, 2, n.div_ceil(2), n] {
            let k = (t - 1) as usize;
            let mean = sums[k] / m;
            let emp = ((sq[k] - m * mean * mean) / (m - 1.0)).max(0.0) / m;
            let model: f64 = (t..=n).map(|s| (1.0 / s as f64) * (1.0 - 1.0 / s as f64)).sum();
            let se = (emp + beta * model / m).sqrt();
            let analytic = beta * tail[t as usize];
            ensure((mean - analytic).abs() <= 3.0 * se, || {
                format!("oracle Monte Carlo t={t} N={n}: {mean:.3} vs {analytic:.3} (se {se:.3})")
            })?;
        }
    }
    let mc_rows = rows.iter().filter(|r| r.theorem == "thm1_monte_carlo").count();
    Ok(format!(
        "{} report rows pass ({mc_rows} Monte Carlo probes); {bound_checks} oracle containments",
        rows.len()
    ))
}

// ---------------------------------------------------------------------------
// 2. Decayed replay expectation bound

/// Series with the denominator grown term by term instead of in closed form.
fn decayed_series_oracle(i: u64, eps: f64, beta: f64) -> f64 {
    let r = 1.0 - eps;
    let mut denom: f64 = 0.0;
    let mut p = 1.0;
    for _ in 0..i {
        denom += p;
        p *= r;
    }
    let mut decay = 1.0;
    let mut total = 0.0;
    loop {
        let term = decay / denom;
        total += term;
        if term < 1e-17 * total {
            break;
        }
        denom += p;
        p *= r;
        decay *= r;
    }
    beta * total
}

fn criterion_2() -> Check {
    let cfg = VerifyConfig {
        uniform_horizons: vec![],
        ..VerifyConfig::default()
    };
    let rows = verify_theorems(&cfg).map_err(|e| e.to_string())?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    ensure(failed.is_empty(), || {
        format!("{} report rows fail, first {:?}", failed.len(), failed[0])
    })?;
    let beta = 8.0;
    let mut worst = 0.0f64;
    for eps in [0.5, 0.1, 0.01, 1e-3] {
        let bound = thm2_bound(eps, beta).map_err(|e| e.to_string())?;
        ensure((bound - beta / eps).abs() <= 1e-12 * bound, || "bound formula".into())?;
        for i in [1u64, 2, 3, 5, 10, 50, 100] {
            let lib = expected_samples_decayed(i, eps, beta, u64::MAX)
                .map_err(|e| e.to_string())?;
            let oracle = decayed_series_oracle(i, eps, beta);
            ensure(lib.certified, || format!("series not certified at i={i} eps={eps}"))?;
            ensure((lib.value - oracle).abs() <= 1e-9 * oracle, || {
                format!("series mismatch i={i} eps={eps}: {} vs {oracle}", lib.value)
            })?;
            ensure(oracle < bound, || format!("i={i} eps={eps}: {oracle} >= {bound}"))?;
            worst = worst.max(oracle / bound);
        }
    }
    let peaks: Vec<String> = rows
        .iter()
        .filter(|r| r.theorem == "thm2_monte_carlo_max")
        .map(|r| format!("{:.1}/{:.0}", r.empirical_mean.unwrap_or(f64::NAN), r.upper))
        .collect();
    Ok(format!(
        "{} report rows pass; largest expectation/bound {worst:.4}; Monte Carlo peak/bound {}",
        rows.len(),
        peaks.join(" ")
    ))
}

// ---------------------------------------------------------------------------
// 3. Two-region sampler against a linear scan

fn scan_probabilities(law_eps: f64, tau: f64, live: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..live)
        .map(|age| (1.0 - law_eps).powi(age as i32).max(tau))
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Wilson–Hilferty upper quantile of chi-square with `df` degrees of freedom.
fn chi2_critical(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

fn criterion_3() -> Check {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut wrapped = 0;
    for _ in 0..100 {
        let eps = 10f64.powf(r.random_range(-4.0..-0.3));
        let tau = if r.random_bool(0.2) { 0.0 } else { 10f64.powf(r.random_range(-4.0..-0.5)) };
        let capacity = r.random_range(1..=1000usize);
        let pushes = r.random_range(1..=3 * capacity as u64);
        let law = DecayLaw::new(eps, tau).map_err(|e| e.to_string())?;
        let mut s = DecayedSampler::new(capacity, law);
        for _ in 0..pushes {
            s.advance();
        }
        if pushes > capacity as u64 {
            wrapped += 1;
        }
        let newest = s.window().newest().expect("nonempty");
        let oracle = scan_probabilities(eps, tau, s.len());
        for (age, &p) in oracle.iter().enumerate() {
            let lib = s.probability(newest - age as u64).map_err(|e| e.to_string())?;
            let err = (lib - p).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || {
                format!("eps={eps} tau={tau} cap={capacity} age={age}: {lib} vs {p}")
            })?;
        }
    }

    // Frequencies at 1e6 draws; low-expectation cells merged into one.
    let mut gof = Vec::new();
    for (k, (eps, tau, capacity, pushes)) in
        [(0.02, 0.05, 300usize, 700u64), (0.005, 0.01, 1000, 1000)].into_iter().enumerate()
    {
        let law = DecayLaw::new(eps, tau).map_err(|e| e.to_string())?;
        let mut s = DecayedSampler::new(capacity, law);
        for _ in 0..pushes {
            s.advance();
        }
        let newest = s.window().newest().expect("nonempty");
        let probs = scan_probabilities(eps, tau, s.len());
        let draws = 1_000_000usize;
        let mut counts = vec![0u64; probs.len()];
        let mut dr = rng(300 + k as u64);
        for _ in 0..draws / 1000 {
            for idx in s.sample(1000, &mut dr).map_err(|e| e.to_string())? {
                counts[(newest - idx) as usize] += 1;
            }
        }
        let (mut stat, mut cells) = (0.0, 0usize);
        let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
        for (&p, &c) in probs.iter().zip(&counts) {
            let e = p * draws as f64;
            if e < 5.0 {
                pool_obs += c as f64;
                pool_exp += e;
            } else {
                stat += (c as f64 - e).powi(2) / e;
                cells += 1;
            }
        }
        if pool_exp > 0.0 {
            stat += (pool_obs - pool_exp).powi(2) / pool_exp;
            cells += 1;
        }
        let df = (cells - 1) as f64;
        let crit = chi2_critical(df, 3.09);
        ensure(stat < crit, || format!("chi-square {stat:.1} >= {crit:.1} (df {df})"))?;
        gof.push(format!("{stat:.0}<{crit:.0}"));
    }
    Ok(format!(
        "100 settings ({wrapped} wrapped), max abs error {worst:.1e}; chi-square {}",
        gof.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// 4. Long-horizon sampling counts under decay

fn criterion_4() -> Check {
    let (eps, tau, n, beta) = (1e-4, 0.01, 100_000u64, 8u64);
    let law = DecayLaw::new(eps, tau).map_err(|e| e.to_string())?;
    let seeds = 64;
    let stats = monte_carlo_counts(CountSampler::Decayed(law), n, beta, n as usize, seeds, 4)
        .map_err(|e| e.to_string())?;

    // Exact expectation: sum over later steps of the item's share of mass.
    let w = |age: u64| (1.0 - eps).powi(age as i32).max(tau);
    let mut mass = vec![0.0; n as usize + 1];
    for s in 1..=n as usize {
        mass[s] = mass[s - 1] + w(s as u64 - 1);
    }
    let expected = |i: u64| -> f64 {
        (i..=n).map(|s| w(s - i) / mass[s as usize]).sum::<f64>() * beta as f64
    };
    for i in [1u64, 100, 5_000, 20_000, 50_000, 90_000] {
        let s = stats[(i - 1) as usize];
        let e = expected(i);
        ensure((s.mean - e).abs() <= 4.0 * s.stderr, || {
            format!("i={i}: Monte Carlo {:.3} vs exact {e:.3} (se {:.3})", s.mean, s.stderr)
        })?;
    }

    let early = 1_000u64;
    for i in 1..=early {
        let uni = expected_samples_uniform(i, n, beta as f64).map_err(|e| e.to_string())?;
        let got = stats[(i - 1) as usize].mean;
        ensure(got < uni, || format!("i={i}: decayed {got:.2} >= uniform {uni:.2}"))?;
    }
    let first = stats[0].mean;
    let uni_first = expected_samples_uniform(1, n, beta as f64).map_err(|e| e.to_string())?;

    let cutoff = law.cutoff_age().expect("positive floor");
    let lo = (1.0 / eps).ceil() as u64;
    let hi = n - cutoff;
    let flat: Vec<f64> = (lo..=hi).map(|i| stats[(i - 1) as usize].mean).collect();
    let mean = flat.iter().sum::<f64>() / flat.len() as f64;
    let var = flat.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (flat.len() - 1) as f64;
    let cv = var.sqrt() / mean;
    ensure(cv < 0.1, || format!("flat-region CV {cv:.4} over [{lo}, {hi}]"))?;
    Ok(format!(
        "item 1: decayed {first:.1} < uniform {uni_first:.1}; first {early} items below uniform; \
         flat region [{lo}, {hi}] CV {cv:.4} ({seeds} seeds)"
    ))
}

// ---------------------------------------------------------------------------
// 5. Finite-difference gradient checks

const FD_STEP: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_FLOOR)
}

trait HasParams: Clone {
    fn ps(&mut self) -> Vec<&mut Param>;
}

impl HasParams for Dense {
    fn ps(&mut self) -> Vec<&mut Param> {
        self.params_mut().into_iter().collect()
    }
}

impl HasParams for LayerNorm {
    fn ps(&mut self) -> Vec<&mut Param> {
        self.params_mut().into_iter().collect()
    }
}

impl HasParams for ResidualBlock {
    fn ps(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self.dense1.params_mut().into_iter().collect();
        v.extend(self.norm1.params_mut());
        v.extend(self.dense2.params_mut());
        v.extend(self.norm2.params_mut());
        v
    }
}

impl HasParams for ResidualCritic {
    fn ps(&mut self) -> Vec<&mut Param> {
        self.params_mut()
    }
}

impl HasParams for GaussianActor {
    fn ps(&mut self) -> Vec<&mut Param> {
        self.params_mut()
    }
}

/// Five-point central difference of `f` at offset zero.
fn central_difference(mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = FD_STEP;
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

/// Max relative error between the gradients stored in `m` and central
/// differences of `loss` over every parameter entry.
fn fd_params<M: HasParams>(m: &mut M, loss: impl Fn(&M) -> f64) -> f64 {
    let analytic: Vec<Array2<f64>> = m.ps().iter().map(|p| p.grad.clone()).collect();
    let mut probe = m.clone();
    let mut worst = 0.0f64;
    for (k, grad) in analytic.iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            let orig = probe.ps()[k].value.as_slice().expect("contiguous")[j];
            let numeric = central_difference(|d| {
                probe.ps()[k].value.as_slice_mut().expect("contiguous")[j] = orig + d;
                loss(&probe)
            });
            probe.ps()[k].value.as_slice_mut().expect("contiguous")[j] = orig;
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

fn fd_input(x: &Array2<f64>, analytic: &Array2<f64>, loss: impl Fn(&Array2<f64>) -> f64) -> f64 {
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.indexed_iter() {
        let orig = probe[idx];
        let numeric = central_difference(|d| {
            probe[idx] = orig + d;
            loss(&probe)
        });
        probe[idx] = orig;
        worst = worst.max(rel_err(a, numeric));
    }
    worst
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    (a * b).sum()
}

fn fd_dense(r: &mut ChaCha8Rng) -> f64 {
    let (rows, i, o) = (r.random_range(1..6), r.random_range(1..7), r.random_range(1..7));
    let mut layer = Dense::new(i, o, r.random_range(0.5..2.0), r);
    layer.ps().iter_mut().for_each(|p| p.value += &(normal(p.value.nrows(), p.value.ncols(), r) * 0.1));
    let x = normal(rows, i, r);
    let up = normal(rows, o, r);
    let dx = layer.backward(&x, &up, true);
    let gp = fd_params(&mut layer, |l| dot(&l.forward(&x).unwrap(), &up));
    let gx = fd_input(&x, &dx, |x| dot(&layer.forward(x).unwrap(), &up));
    gp.max(gx)
}

fn fd_layer_norm(r: &mut ChaCha8Rng) -> f64 {
    let (rows, f) = (r.random_range(1..6), r.random_range(2..9));
    let mut ln = LayerNorm::new(f);
    ln.ps().iter_mut().for_each(|p| p.value += &(normal(1, f, r) * 0.3));
    let x = normal(rows, f, r) * r.random_range(0.5..3.0);
    let up = normal(rows, f, r);
    let (_, cache) = ln.forward(&x).unwrap();
    let dx = ln.backward(&cache, &up, true);
    let gp = fd_params(&mut ln, |l| dot(&l.forward(&x).unwrap().0, &up));
    let gx = fd_input(&x, &dx, |x| dot(&ln.forward(x).unwrap().0, &up));
    gp.max(gx)
}

fn fd_elu(r: &mut ChaCha8Rng) -> f64 {
    let x = normal(r.random_range(1..6), r.random_range(1..8), r) * 2.0;
    let up = normal(x.nrows(), x.ncols(), r);
    let dx = elu_grad_from_output(&elu(&x), &up);
    fd_input(&x, &dx, |x| dot(&elu(x), &up))
}

fn fd_block(r: &mut ChaCha8Rng) -> f64 {
    let (rows, h) = (r.random_range(1..5), r.random_range(2..7));
    let mut block = ResidualBlock::new(h, std::f64::consts::SQRT_2, r);
    for p in block.ps() {
        let (a, b) = p.value.dim();
        p.value += &(normal(a, b, r) * 0.1);
    }
    let x = normal(rows, h, r);
    let up = normal(rows, h, r);
    let (_, cache) = block.forward(&x).unwrap();
    let dx = block.backward(&cache, &up, true);
    let gp = fd_params(&mut block, |b| dot(&b.forward(&x).unwrap().0, &up));
    let gx = fd_input(&x, &dx, |x| dot(&block.forward(x).unwrap().0, &up));
    gp.max(gx)
}

fn fd_critic(r: &mut ChaCha8Rng) -> f64 {
    let (rows, input, h) = (r.random_range(1..5), r.random_range(1..5), r.random_range(2..6));
    let mut cfg = CriticConfig::new(input, h);
    cfg.initial_depth = r.random_range(0..=4);
    cfg.max_depth = 4;
    let mut critic = ResidualCritic::new(cfg, r);
    let x = normal(rows, input, r);
    let up = Array1::from_shape_fn(rows, |_| r.sample::<f64, _>(StandardNormal));
    let (_, cache) = critic.forward_cached(&x).unwrap();
    critic.zero_grad();
    let dx = critic.backward(&cache, &up, true).unwrap();
    let gp = fd_params(&mut critic, |c| c.forward(&x).unwrap().dot(&up));
    let gx = fd_input(&x, &dx, |x| critic.forward(x).unwrap().dot(&up));
    gp.max(gx)
}

fn fd_actor(r: &mut ChaCha8Rng) -> f64 {
    let (rows, sd, ad, h) = (
        r.random_range(1..5),
        r.random_range(1..5),
        r.random_range(1..3),
        r.random_range(2..6),
    );
    let mut cfg = ActorConfig::new(sd, ad, h);
    cfg.layer_norm = r.random_bool(0.5);
    cfg.output_scale = 0.5;
    let mut actor = GaussianActor::new(cfg, r);
    let x = normal(rows, sd, r);
    let noise = normal(rows, ad, r);
    let up_a = normal(rows, ad, r);
    let up_lp = Array1::from_shape_fn(rows, |_| r.sample::<f64, _>(StandardNormal));
    let loss = |a: &GaussianActor| {
        let s = GaussianActor::squash(&a.forward(&x).unwrap(), noise.clone());
        dot(&s.actions, &up_a) + s.log_prob.dot(&up_lp)
    };
    let out = actor.forward(&x).unwrap();
    let sample = GaussianActor::squash(&out, noise.clone());
    let (dm, dls) = GaussianActor::squash_grads(&sample, &up_a, &up_lp);
    actor.zero_grad();
    actor.backward(&out.cache, &dm, &dls).unwrap();
    fd_params(&mut actor, loss)
}

fn criterion_5() -> Check {
    type Case = fn(&mut ChaCha8Rng) -> f64;
    let cases: [(&str, Case); 6] = [
        ("dense", fd_dense),
        ("layer_norm", fd_layer_norm),
        ("elu", fd_elu),
        ("residual_block", fd_block),
        ("critic", fd_critic),
        ("actor", fd_actor),
    ];
    let mut report = Vec::new();
    for (k, (name, case)) in cases.iter().enumerate() {
        let mut r = rng(500 + k as u64);
        let worst = (0..20).map(|_| case(&mut r)).fold(0.0f64, f64::max);
        ensure(worst < 1e-4, || format!("{name}: max relative error {worst:.2e}"))?;
        report.push(format!("{name} {worst:.1e}"));
    }
    Ok(format!("20 instances each, max relative error: {}", report.join(", ")))
}

// ---------------------------------------------------------------------------
// 6. Expansion mechanics

fn bits(m: &ResidualCritic) -> Vec<Vec<u64>> {
    m.params()
        .iter()
        .map(|p| p.value.iter().map(|v| v.to_bits()).collect())
        .collect()
}

fn preserved(before: &[Vec<u64>], after: &[Vec<u64>]) -> bool {
    let n = before.len();
    after.len() > n
        && before[..n - 2] == after[..n - 2]
        && before[n - 2..] == after[after.len() - 2..]
}

fn scripted_agent_config() -> AgentConfig {
    AgentConfig {
        batch_size: 32,
        critic_hidden: 16,
        actor_hidden: 16,
        replay_ratio: 1,
        warmup_steps: 40,
        schedule: ExpansionSchedule {
            expansion_iters: vec![100, 400],
            ..ExpansionSchedule::default()
        },
        resets: ResetList(vec![60, 600, 1200]),
        ..AgentConfig::default()
    }
}

fn criterion_6() -> Check {
    let cfg = scripted_agent_config();
    let init_lr = cfg.critic_lr;

    // Agent-level: fill a buffer from pendulum, then script updates and resets.
    let mut env = make_env("pendulum").map_err(|e| e.to_string())?;
    let schema = Schema {
        state_dim: env.obs_dim(),
        action_dim: env.action_dim(),
    };
    let mut buffer = ReplayBuffer::uniform(schema, 5_000);
    let mut r = rng(6);
    let mut obs = env.reset(0);
    for _ in 0..2_000 {
        let a = vec![r.random_range(-1.0..1.0)];
        let res = env.step(&a).map_err(|e| e.to_string())?;
        buffer
            .push(&obs, &a, res.reward, &res.obs, res.terminated)
            .map_err(|e| e.to_string())?;
        obs = if res.truncated { env.reset(r.next_u64()) } else { res.obs };
    }
    let mut agent = SacAgent::new(cfg.clone(), schema.state_dim, schema.action_dim, 6)
        .map_err(|e| e.to_string())?;
    let probe = buffer.sample_batch(256, &mut r).map_err(|e| e.to_string())?;
    let mut trajectory = vec![agent.depth()];
    let mut events = Vec::new();
    let mut dormant = Vec::new();
    for it in 0..1_300u64 {
        if it == 500 || it == 1_000 {
            let e = agent.reset().map_err(|e| e.to_string())?;
            ensure(agent.critic_lr() == init_lr, || "lr not restored at reset".into())?;
            events.push(e);
        }
        let batch = buffer.sample_batch(cfg.batch_size, &mut r).map_err(|e| e.to_string())?;
        agent.update(&batch).map_err(|e| e.to_string())?;
        if agent.expansion_due() {
            let before: Vec<_> = (0..2)
                .flat_map(|k| [bits(&agent.critics[k]), bits(&agent.targets[k])])
                .collect();
            let d_before = agent.critic_dormant_ratio(&probe, DEFAULT_DORMANT_THRESHOLD).map_err(|e| e.to_string())?;
            let e = agent
                .expand_if_due()
                .map_err(|e| e.to_string())?
                .ok_or("expansion was due but did not happen")?;
            for k in 0..2 {
                ensure(preserved(&before[2 * k], &bits(&agent.critics[k])), || {
                    format!("critic {k} parameters changed at iteration {it}")
                })?;
                ensure(preserved(&before[2 * k + 1], &bits(&agent.targets[k])), || {
                    format!("target {k} parameters changed at iteration {it}")
                })?;
                ensure(
                    agent.critics[k].blocks.last() == agent.targets[k].blocks.last(),
                    || format!("target {k} did not receive the new block"),
                )?;
            }
            let dense = (1 + 2 * e.depth_after) as f64;
            let want = init_lr * 5.0 / dense;
            ensure(e.critic_lr == want && agent.critic_optimizer_lrs() == [want; 2], || {
                format!("lr {} (optimizers {:?}), want {want}", e.critic_lr, agent.critic_optimizer_lrs())
            })?;
            let d_after = agent.critic_dormant_ratio(&probe, DEFAULT_DORMANT_THRESHOLD).map_err(|e| e.to_string())?;
            dormant.push((d_before, d_after));
            events.push(e);
        }
        if *trajectory.last().expect("nonempty") != agent.depth() {
            trajectory.push(agent.depth());
        }
    }
    let mut from_events = vec![events[0].depth_before];
    for e in &events {
        ensure(*from_events.last().expect("nonempty") == e.depth_before, || {
            "event chain is broken".into()
        })?;
        if e.depth_after != e.depth_before {
            from_events.push(e.depth_after);
        }
    }
    ensure(trajectory == from_events, || {
        format!("observed depths {trajectory:?} vs event log {from_events:?}")
    })?;
    ensure(trajectory.starts_with(&[2, 3, 4, 2]), || format!("depths {trajectory:?}"))?;
    ensure(dormant.iter().all(|(b, a)| a <= b), || format!("dormant ratios {dormant:?}"))?;
    let expansions = events.iter().filter(|e| e.kind == GrowthEventKind::Expand).count();

    // Trainer-level: the logged events and dormant trace obey the same rules.
    let tc = TrainConfig {
        env_steps: 1_300,
        seed: 6,
        log_interval: 1_300,
        eval_episodes: 0,
        final_eval_episodes: 0,
        dormant_interval: 0,
        agent: cfg,
        ..TrainConfig::default()
    };
    let art = Trainer::new(tc)
        .and_then(|t| t.run())
        .map_err(|e| e.to_string())?;
    let mut depth = 2;
    let mut seen = vec![depth];
    for e in &art.events {
        ensure(e.depth_before == depth, || format!("trainer log broken at step {}", e.step))?;
        depth = e.depth_after;
        if e.depth_after != e.depth_before {
            seen.push(depth);
        }
        if e.event == "expand" {
            let want = init_lr * 5.0 / (1 + 2 * e.depth_after) as f64;
            ensure(e.lr == want, || format!("trainer lr {} at step {}", e.lr, e.step))?;
        }
    }
    ensure(seen.starts_with(&[2, 3, 4, 2]), || format!("trainer depths {seen:?}"))?;
    let pairs: Vec<_> = art
        .dormant
        .windows(2)
        .filter(|w| w[0].event == "expand_before" && w[1].event == "expand_after")
        .map(|w| (w[0].ratio, w[1].ratio))
        .collect();
    let trainer_expansions = art.events.iter().filter(|e| e.event == "expand").count();
    ensure(pairs.len() == trainer_expansions, || "missing dormant pair".into())?;
    ensure(pairs.iter().all(|(b, a)| a <= b), || format!("trainer dormant {pairs:?}"))?;
    Ok(format!(
        "agent: {expansions} expansions, depths {trajectory:?}, dormant {dormant:.3?}; \
         trainer: depths {seen:?}"
    ))
}

// ---------------------------------------------------------------------------
// 7. End-to-end comparison at desk scale

/// Time compression applied to the reset list.
const DESK_SCALE: f64 = 40.0;
/// Replay ratio the default expansion iterations assume.
const REFERENCE_REPLAY_RATIO: u64 = 10;

/// Desk-scale pendulum protocol shared by both arms. Expansion iterations
/// are rescaled so each expansion lands at the same env step after a reset
/// as at the reference replay ratio, and the horizon stops just before the
/// fourth scaled reset.
fn desk_config(sampler: SamplerKind, mode: ExpansionMode, seed: u64) -> TrainConfig {
    let lr = 1e-3;
    let replay_ratio = 2;
    let schedule = ExpansionSchedule::default();
    let expansion_iters = schedule
        .expansion_iters
        .iter()
        .map(|&it| it * replay_ratio / REFERENCE_REPLAY_RATIO)
        .collect();
    let mut agent = AgentConfig {
        batch_size: 128,
        critic_hidden: 64,
        actor_hidden: 64,
        replay_ratio: replay_ratio as usize,
        warmup_steps: 500,
        critic_lr: lr,
        actor_lr: lr,
        alpha_lr: lr,
        expansion: mode,
        schedule: ExpansionSchedule {
            expansion_iters,
            ..schedule
        },
        scale: DESK_SCALE,
        ..AgentConfig::default()
    };
    agent.replay.sampler = sampler;
    agent.replay.decay = DecayLaw::new(1e-3, 0.1).expect("valid decay law");
    TrainConfig {
        env: "pendulum".into(),
        env_steps: 5_000,
        seed,
        log_interval: 5_000,
        eval_episodes: 0,
        final_eval_episodes: 10,
        dormant_interval: 0,
        agent,
        ..TrainConfig::default()
    }
}

fn criterion_7() -> Check {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let mut finals = Vec::new();
        for (sampler, mode) in [
            (SamplerKind::Decay, ExpansionMode::On),
            (SamplerKind::Uniform, ExpansionMode::Off),
        ] {
            let art = Trainer::new(desk_config(sampler, mode, seed))
                .and_then(|t| t.run())
                .map_err(|e| e.to_string())?;
            if let Some(reason) = &art.aborted {
                if mode == ExpansionMode::On {
                    return Err(format!("FoG seed {seed} aborted: {reason}"));
                }
                lines.push(format!("uniform seed {seed} aborted: {reason}"));
            }
            finals.push(art.final_eval.map_or(f64::NEG_INFINITY, |e| e.mean));
        }
        if finals[0] >= finals[1] {
            wins += 1;
        }
        lines.push(format!("seed {seed}: {:.1} vs {:.1}", finals[0], finals[1]));
    }
    let summary = format!("FoG >= uniform+reset in {wins}/3 pairs ({})", lines.join("; "));
    if wins >= 2 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

// ---------------------------------------------------------------------------
// 8. Critic-loss heatmap over the whole buffer

fn criterion_8() -> Check {
    let agent = AgentConfig {
        batch_size: 32,
        critic_hidden: 16,
        actor_hidden: 16,
        replay_ratio: 1,
        warmup_steps: 1_000,
        scale: 20.0,
        ..AgentConfig::default()
    };
    let cfg = TrainConfig {
        env_steps: 50_000,
        seed: 8,
        log_interval: 50_000,
        eval_episodes: 0,
        final_eval_episodes: 0,
        dormant_interval: 0,
        heatmap_interval: 5_000,
        heatmap_bucket: 5_000,
        agent,
        ..TrainConfig::default()
    };
    let batch = cfg.agent.batch_size;
    let art = Trainer::new(cfg)
        .and_then(|t| t.run())
        .map_err(|e| e.to_string())?;
    ensure(art.aborted.is_none(), || format!("run aborted: {:?}", art.aborted))?;
    let heatmap = art.heatmap.as_ref().ok_or("no heatmap recorded")?;
    ensure(heatmap.steps().len() == 10, || format!("{} heatmap rows", heatmap.steps().len()))?;
    for row in 0..10 {
        for bucket in 0..10 {
            let present = heatmap.get(row, bucket).is_some_and(f64::is_finite);
            ensure(present == (bucket <= row), || {
                format!("cell ({row}, {bucket}) present={present}")
            })?;
        }
    }
    ensure(heatmap.support_is_valid(), || "support check failed".into())?;
    let mut csv = Vec::new();
    heatmap.write_csv(&mut csv).map_err(|e| e.to_string())?;
    let back = HeatmapAccumulator::read_csv(csv.as_slice(), 5_000).map_err(|e| e.to_string())?;
    ensure(back.support_is_valid() && back.steps() == heatmap.steps(), || {
        "CSV round trip changed the heatmap".into()
    })?;
    let total = art.sample_counts.total();
    let want = batch as u64 * art.updates;
    ensure(total == want && art.sample_counts.conserves(batch, art.updates), || {
        format!("sample count {total} != {want}")
    })?;
    Ok(format!(
        "10x10 lower triangle complete; {total} batch appearances = {batch} x {} updates",
        art.updates
    ))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "uniform replay expectation bounds", limit: Duration::from_secs(30), run: criterion_1 },
        Criterion { id: 2, name: "decayed replay expectation bound", limit: Duration::from_secs(60), run: criterion_2 },
        Criterion { id: 3, name: "two-region sampler correctness", limit: Duration::from_secs(60), run: criterion_3 },
        Criterion { id: 4, name: "decayed sampling counts over 100k steps", limit: Duration::from_secs(120), run: criterion_4 },
        Criterion { id: 5, name: "gradient fidelity", limit: Duration::from_secs(30), run: criterion_5 },
        Criterion { id: 6, name: "expansion mechanics", limit: Duration::from_secs(120), run: criterion_6 },
        Criterion { id: 7, name: "pendulum FoG vs uniform with resets", limit: Duration::from_secs(1_200), run: criterion_7 },
        Criterion { id: 8, name: "critic-loss heatmap protocol", limit: Duration::from_secs(600), run: criterion_8 },
    ];
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failures = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) => (elapsed <= c.limit, d),
            Err(d) => (false, d),
        };
        let timing = format!("{:.1}s of {}s", elapsed.as_secs_f64(), c.limit.as_secs());
        if !ok {
            failures += 1;
        }
        println!(
            "{} criterion {} ({}): {detail} [{timing}]",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
