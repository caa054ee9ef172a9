use ndarray::{Array1, Array2, Axis};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::layers::{elu, elu_grad_from_output, Dense, LayerNorm, LayerNormCache};
use super::{check_cols, Module, NnError, Param, Result};

/// Shape of a residual critic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    /// State dimension plus action dimension.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub initial_depth: usize,
    pub max_depth: usize,
    /// Orthogonal gain for the input head and every block.
    pub hidden_scale: f64,
    pub output_scale: f64,
}

impl CriticConfig {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            initial_depth: 2,
            max_depth: 4,
            hidden_scale: std::f64::consts::SQRT_2,
            output_scale: 1.0,
        }
    }
}

/// `x + LN2(D2(ELU(LN1(D1 x))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub dense1: Dense,
    pub norm1: LayerNorm,
    pub dense2: Dense,
    pub norm2: LayerNorm,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    input: Array2<f64>,
    norm1: LayerNormCache,
    activation: Array2<f64>,
    norm2: LayerNormCache,
}

impl ResidualBlock {
    pub fn new(hidden: usize, scale: f64, rng: &mut dyn RngCore) -> Self {
        Self {
            dense1: Dense::new(hidden, hidden, scale, rng),
            norm1: LayerNorm::new(hidden),
            dense2: Dense::new(hidden, hidden, scale, rng),
            norm2: LayerNorm::new(hidden),
        }
    }

    /// `2 (h^2 + h) + 2 (2h)` for hidden width `h`.
    pub fn param_count(hidden: usize) -> usize {
        2 * (hidden * hidden + hidden) + 2 * (2 * hidden)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, BlockCache)> {
        let (n1, norm1) = self.norm1.forward(&self.dense1.forward(x)?)?;
        let activation = elu(&n1);
        let (n2, norm2) = self.norm2.forward(&self.dense2.forward(&activation)?)?;
        let out = x + &n2;
        Ok((
            out,
            BlockCache {
                input: x.clone(),
                norm1,
                activation,
                norm2,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &BlockCache,
        dy: &Array2<f64>,
        accumulate: bool,
    ) -> Array2<f64> {
        let dz2 = self.norm2.backward(&cache.norm2, dy, accumulate);
        let dact = self.dense2.backward(&cache.activation, &dz2, accumulate);
        let dn1 = elu_grad_from_output(&cache.activation, &dact);
        let dz1 = self.norm1.backward(&cache.norm1, &dn1, accumulate);
        let dx = self.dense1.backward(&cache.input, &dz1, accumulate);
        dx + dy
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::with_capacity(8);
        v.extend(self.dense1.params());
        v.extend(self.norm1.params());
        v.extend(self.dense2.params());
        v.extend(self.norm2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::with_capacity(8);
        v.extend(self.dense1.params_mut());
        v.extend(self.norm1.params_mut());
        v.extend(self.dense2.params_mut());
        v.extend(self.norm2.params_mut());
        v
    }
}

/// Q-network: `ELU(LN(D_in [s, a]))`, a chain of residual blocks, then a
/// scalar linear head. Depth counts residual blocks only.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCritic {
    config: CriticConfig,
    pub head: Dense,
    pub head_norm: LayerNorm,
    pub blocks: Vec<ResidualBlock>,
    pub output: Dense,
    generation: u64,
}

/// Activations recorded by [`ResidualCritic::forward_cached`].
#[derive(Clone, Debug)]
pub struct CriticCache {
    generation: u64,
    input: Array2<f64>,
    head_norm: LayerNormCache,
    head_activation: Array2<f64>,
    blocks: Vec<BlockCache>,
    features: Array2<f64>,
}

impl ResidualCritic {
    pub fn new(config: CriticConfig, rng: &mut dyn RngCore) -> Self {
        let head = Dense::new(config.input_dim, config.hidden_dim, config.hidden_scale, rng);
        let blocks = (0..config.initial_depth)
            .map(|_| ResidualBlock::new(config.hidden_dim, config.hidden_scale, rng))
            .collect();
        let output = Dense::new(config.hidden_dim, 1, config.output_scale, rng);
        Self {
            config,
            head,
            head_norm: LayerNorm::new(config.hidden_dim),
            blocks,
            output,
            generation: 0,
        }
    }

    /// Critic with exactly `depth` freshly initialized blocks, e.g. as a
    /// target for checkpointed parameters.
    pub fn with_depth(config: CriticConfig, depth: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let mut c = Self::new(
            CriticConfig {
                initial_depth: 0,
                ..config
            },
            rng,
        );
        c.config = config;
        for _ in 0..depth {
            c.append_block(rng)?;
        }
        Ok(c)
    }

    pub fn config(&self) -> &CriticConfig {
        &self.config
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Appends a freshly initialized block at the end of the residual chain.
    pub fn append_block(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        if self.depth() >= self.config.max_depth {
            return Err(NnError::MaxDepth(self.config.max_depth));
        }
        let block = ResidualBlock::new(self.config.hidden_dim, self.config.hidden_scale, rng);
        self.push_block(block);
        Ok(())
    }

    pub(crate) fn push_block(&mut self, block: ResidualBlock) {
        self.blocks.push(block);
        self.bump_generation();
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<(Array1<f64>, CriticCache)> {
        check_cols(x, self.config.input_dim, "critic")?;
        let (n, head_norm) = self.head_norm.forward(&self.head.forward(x)?)?;
        let head_activation = elu(&n);
        let mut h = head_activation.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h)?;
            blocks.push(cache);
            h = next;
        }
        let q = self.output.forward(&h)?.index_axis_move(Axis(1), 0);
        Ok((
            q,
            CriticCache {
                generation: self.generation,
                input: x.clone(),
                head_norm,
                head_activation,
                blocks,
                features: h,
            },
        ))
    }

    /// Backpropagates `dL/dq`; returns `dL/dx`. Parameter gradients are
    /// accumulated only when `accumulate` is set.
    pub fn backward(
        &mut self,
        cache: &CriticCache,
        dq: &Array1<f64>,
        accumulate: bool,
    ) -> Result<Array2<f64>> {
        if cache.generation != self.generation || cache.blocks.len() != self.blocks.len() {
            return Err(NnError::StaleCache {
                cached: cache.generation,
                current: self.generation,
            });
        }
        if dq.len() != cache.input.nrows() {
            return Err(NnError::Shape(format!(
                "upstream gradient has {} rows, cache has {}",
                dq.len(),
                cache.input.nrows()
            )));
        }
        let dout = dq.clone().insert_axis(Axis(1));
        let mut dh = self.output.backward(&cache.features, &dout, accumulate);
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            dh = block.backward(bc, &dh, accumulate);
        }
        let dn = elu_grad_from_output(&cache.head_activation, &dh);
        let dz = self.head_norm.backward(&cache.head_norm, &dn, accumulate);
        Ok(self.head.backward(&cache.input, &dz, accumulate))
    }

    /// Post-activation outputs of every hidden layer: the input head and the
    /// inner activation of each block.
    pub fn hidden_activations(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        let (_, cache) = self.forward_cached(x)?;
        let mut acts = vec![cache.head_activation];
        acts.extend(cache.blocks.into_iter().map(|b| b.activation));
        Ok(acts)
    }
}

impl Module for ResidualCritic {
    fn params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = Vec::new();
        v.extend(self.head.params());
        v.extend(self.head_norm.params());
        for b in &self.blocks {
            v.extend(b.params());
        }
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = Vec::new();
        v.extend(self.head.params_mut());
        v.extend(self.head_norm.params_mut());
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v.extend(self.output.params_mut());
        v
    }

    fn generation(&self) -> u64 {
        self.generation
    }

    fn bump_generation(&mut self) {
        self.generation += 1;
    }
}
