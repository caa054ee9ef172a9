use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::layers::{elu, elu_grad_from_output, Dense, LayerNorm, LayerNormCache};
use super::{check_cols, Module, NnError, Param, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_dim: usize,
    pub layer_norm: bool,
    pub hidden_scale: f64,
    pub output_scale: f64,
}

impl ActorConfig {
    pub fn new(state_dim: usize, action_dim: usize, hidden_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden_dim,
            layer_norm: false,
            hidden_scale: std::f64::consts::SQRT_2,
            output_scale: 0.01,
        }
    }
}

/// Three dense layers producing a mean and a clipped log-std per action
/// dimension; actions are tanh-squashed Gaussian samples.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianActor {
    config: ActorConfig,
    pub layers: [Dense; 3],
    pub norms: Option<[LayerNorm; 2]>,
    generation: u64,
}

#[derive(Clone, Debug)]
pub struct ActorCache {
    generation: u64,
    input: Array2<f64>,
    norm_caches: Vec<LayerNormCache>,
    hidden: [Array2<f64>; 2],
    raw_log_std: Array2<f64>,
}

/// Forward result: Gaussian parameters before squashing.
#[derive(Clone, Debug)]
pub struct ActorOutput {
    pub mean: Array2<f64>,
    pub log_std: Array2<f64>,
    pub cache: ActorCache,
}

/// A reparameterized squashed sample `a = tanh(mean + std * noise)`.
#[derive(Clone, Debug)]
pub struct SquashedSample {
    pub actions: Array2<f64>,
    pub log_prob: Array1<f64>,
    noise: Array2<f64>,
    std: Array2<f64>,
}

/// `log(1 - tanh(u)^2)` without cancellation near saturation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let x = -2.0 * u;
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus)
}

impl GaussianActor {
    pub fn new(config: ActorConfig, rng: &mut dyn RngCore) -> Self {
        let h = config.hidden_dim;
        let layers = [
            Dense::new(config.state_dim, h, config.hidden_scale, rng),
            Dense::new(h, h, config.hidden_scale, rng),
            Dense::new(h, 2 * config.action_dim, config.output_scale, rng),
        ];
        let norms = config
            .layer_norm
            .then(|| [LayerNorm::new(h), LayerNorm::new(h)]);
        Self {
            config,
            layers,
            norms,
            generation: 0,
        }
    }

    pub fn config(&self) -> &ActorConfig {
        &self.config
    }

    pub fn forward(&self, states: &Array2<f64>) -> Result<ActorOutput> {
        check_cols(states, self.config.state_dim, "actor")?;
        let mut norm_caches = Vec::new();
        let mut x = states.clone();
        let mut hidden: [Array2<f64>; 2] = Default::default();
        for (k, slot) in hidden.iter_mut().enumerate() {
            let mut z = self.layers[k].forward(&x)?;
            if let Some(norms) = &self.norms {
                let (n, c) = norms[k].forward(&z)?;
                norm_caches.push(c);
                z = n;
            }
            *slot = elu(&z);
            x = slot.clone();
        }
        let out = self.layers[2].forward(&x)?;
        let a = self.config.action_dim;
        let mean = out.slice(s![.., ..a]).to_owned();
        let raw_log_std = out.slice(s![.., a..]).to_owned();
        let log_std = raw_log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Ok(ActorOutput {
            mean,
            log_std,
            cache: ActorCache {
                generation: self.generation,
                input: states.clone(),
                norm_caches,
                hidden,
                raw_log_std,
            },
        })
    }

    /// Accumulates parameter gradients from `dL/dmean` and `dL/dlog_std`.
    /// The log-std clip passes no gradient outside its range.
    pub fn backward(
        &mut self,
        cache: &ActorCache,
        d_mean: &Array2<f64>,
        d_log_std: &Array2<f64>,
    ) -> Result<()> {
        if cache.generation != self.generation {
            return Err(NnError::StaleCache {
                cached: cache.generation,
                current: self.generation,
            });
        }
        let a = self.config.action_dim;
        let rows = cache.input.nrows();
        if d_mean.dim() != (rows, a) || d_log_std.dim() != (rows, a) {
            return Err(NnError::Shape("actor upstream gradient".into()));
        }
        let mut dout = Array2::zeros((rows, 2 * a));
        dout.slice_mut(s![.., ..a]).assign(d_mean);
        let mut dls = d_log_std.clone();
        Zip::from(&mut dls)
            .and(&cache.raw_log_std)
            .for_each(|g, &raw| {
                if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                    *g = 0.0;
                }
            });
        dout.slice_mut(s![.., a..]).assign(&dls);
        let mut dh = self.layers[2].backward(&cache.hidden[1], &dout, true);
        for k in (0..2).rev() {
            let mut dz = elu_grad_from_output(&cache.hidden[k], &dh);
            if let Some(norms) = &mut self.norms {
                dz = norms[k].backward(&cache.norm_caches[k], &dz, true);
            }
            let input = if k == 0 {
                &cache.input
            } else {
                &cache.hidden[0]
            };
            dh = self.layers[k].backward(input, &dz, true);
        }
        Ok(())
    }

    /// Squashes `mean + std * noise` through tanh and computes the
    /// log-density of the squashed action.
    pub fn squash(out: &ActorOutput, noise: Array2<f64>) -> SquashedSample {
        let std = out.log_std.mapv(f64::exp);
        let pre = &out.mean + &(&std * &noise);
        let actions = pre.mapv(f64::tanh);
        let mut log_prob = Array1::zeros(pre.nrows());
        for (r, lp) in log_prob.iter_mut().enumerate() {
            *lp = (0..pre.ncols())
                .map(|j| {
                    let xi = noise[(r, j)];
                    -0.5 * xi * xi - out.log_std[(r, j)] - HALF_LN_2PI
                        - log_one_minus_tanh_sq(pre[(r, j)])
                })
                .sum();
        }
        SquashedSample {
            actions,
            log_prob,
            noise,
            std,
        }
    }

    /// Chain rule through the reparameterized sample: given `dL/da` and
    /// `dL/dlog_prob`, returns `(dL/dmean, dL/dlog_std)`.
    pub fn squash_grads(
        sample: &SquashedSample,
        d_actions: &Array2<f64>,
        d_log_prob: &Array1<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let mut d_mean = Array2::zeros(sample.actions.raw_dim());
        let mut d_log_std = Array2::zeros(sample.actions.raw_dim());
        for ((r, j), a) in sample.actions.indexed_iter() {
            let d_pre = d_actions[(r, j)] * (1.0 - a * a) + d_log_prob[r] * 2.0 * a;
            d_mean[(r, j)] = d_pre;
            d_log_std[(r, j)] = d_pre * sample.std[(r, j)] * sample.noise[(r, j)] - d_log_prob[r];
        }
        (d_mean, d_log_std)
    }

    pub fn hidden_activations(&self, states: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let out = self.forward(states)?;
        Ok(out.cache.hidden.to_vec())
    }
}

impl ActorOutput {
    /// `tanh(mean)`, the deterministic action.
    pub fn deterministic_actions(&self) -> Array2<f64> {
        self.mean.mapv(f64::tanh)
    }

    pub fn rows(&self) -> usize {
        self.mean.len_of(Axis(0))
    }
}

impl Module for GaussianActor {
    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        for l in &self.layers {
            v.extend(l.params());
        }
        if let Some(norms) = &self.norms {
            for n in norms {
                v.extend(n.params());
            }
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        if let Some(norms) = &mut self.norms {
            for n in norms {
                v.extend(n.params_mut());
            }
        }
        v
    }

    fn generation(&self) -> u64 {
        self.generation
    }

    fn bump_generation(&mut self) {
        self.generation += 1;
    }
}
