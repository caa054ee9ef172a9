use ndarray::{Array1, Array2, Axis, Zip};
use rand::RngCore;

use super::{check_cols, orthogonal_init, Param, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `y = x W^T + b` with `W` stored as `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(input: usize, output: usize, scale: f64, rng: &mut dyn RngCore) -> Self {
        Self {
            weight: Param::new(orthogonal_init(output, input, scale, rng)),
            bias: Param::new(Array2::zeros((1, output))),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Param::new(Array2::zeros((output, input))),
            bias: Param::new(Array2::zeros((1, output))),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_cols(x, self.input_dim(), "dense layer")?;
        Ok(x.dot(&self.weight.value.t()) + &self.bias.value)
    }

    /// Accumulates parameter gradients (when `accumulate`) and returns `dL/dx`.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>, accumulate: bool) -> Array2<f64> {
        if accumulate {
            self.weight.grad += &dy.t().dot(x);
            self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        dy.dot(&self.weight.value)
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Per-row layer normalization with a learnable affine.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gain: Param,
    pub shift: Param,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNormCache {
    /// The standardized input, before the affine.
    pub fn normalized(&self) -> &Array2<f64> {
        &self.normalized
    }
}

impl LayerNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gain: Param::new(Array2::ones((1, features))),
            shift: Param::new(Array2::zeros((1, features))),
        }
    }

    pub fn features(&self) -> usize {
        self.gain.value.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, LayerNormCache)> {
        check_cols(x, self.features(), "layer norm")?;
        let n = x.ncols() as f64;
        let mut normalized = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / n;
            row -= mean;
            let var = row.dot(&row) / n;
            *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row *= *s;
        }
        let y = &normalized * &self.gain.value + &self.shift.value;
        Ok((y, LayerNormCache { normalized, inv_std }))
    }

    pub fn backward(
        &mut self,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
        accumulate: bool,
    ) -> Array2<f64> {
        if accumulate {
            self.gain.grad += &(dy * &cache.normalized)
                .sum_axis(Axis(0))
                .insert_axis(Axis(0));
            self.shift.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        }
        let n = dy.ncols() as f64;
        let mut dx = dy * &self.gain.value;
        Zip::from(dx.rows_mut())
            .and(cache.normalized.rows())
            .and(&cache.inv_std)
            .for_each(|mut g, xhat, &s| {
                let mean_g = g.sum() / n;
                let mean_gx = g.dot(&xhat) / n;
                Zip::from(&mut g)
                    .and(&xhat)
                    .for_each(|gi, &xi| *gi = s * (*gi - mean_g - xi * mean_gx));
            });
        dx
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.gain, &self.shift]
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.gain, &mut self.shift]
    }
}

pub fn elu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { v.exp_m1() })
}

/// ELU derivative expressed through its output: 1 above zero, `y + 1` below.
pub fn elu_grad_from_output(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    Zip::from(&mut dx).and(y).for_each(|g, &out| {
        if out <= 0.0 {
            *g *= out + 1.0;
        }
    });
    dx
}
