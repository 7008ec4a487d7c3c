use crate::layers::param::{join, Module, Param};
use crate::layers::LayerError;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

/// Per-row `(x - mean) / sqrt(var + eps)`, optionally followed by a learned
/// scale and shift (off unless built with [`LayerNorm::with_affine`]).
#[derive(Debug, Clone, Default)]
pub struct LayerNorm {
    affine: Option<(Param, Param)>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

pub fn layer_norm(x: &Tensor) -> Tensor {
    LayerNorm::new().forward(x).0
}

impl LayerNorm {
    pub fn new() -> Self {
        Self { affine: None }
    }

    pub fn with_affine(prefix: &str, d: usize) -> Self {
        Self {
            affine: Some((
                Param::new(join(prefix, "gamma"), Tensor::filled(&[d], 1.0)),
                Param::zeros(join(prefix, "beta"), &[d]),
            )),
        }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, LayerNormCache) {
        let (mean, var) = x.row_stats();
        let c = x.cols();
        let inv_std: Vec<f64> = var
            .data()
            .iter()
            .map(|v| 1.0 / (v + LN_EPS).sqrt())
            .collect();
        let mut normalized = x.clone();
        for (r, row) in normalized.data_mut().chunks_mut(c).enumerate() {
            let (m, s) = (mean.data()[r], inv_std[r]);
            row.iter_mut().for_each(|v| *v = (*v - m) * s);
        }
        let out = match &self.affine {
            None => normalized.clone(),
            Some((gamma, beta)) => {
                let mut y = normalized.clone();
                for row in y.data_mut().chunks_mut(c) {
                    for ((v, g), b) in row
                        .iter_mut()
                        .zip(gamma.value.data())
                        .zip(beta.value.data())
                    {
                        *v = *v * g + b;
                    }
                }
                y
            }
        };
        (
            out,
            LayerNormCache {
                normalized,
                inv_std,
            },
        )
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Tensor) -> Result<Tensor, LayerError> {
        let xhat = &cache.normalized;
        if dy.shape() != xhat.shape() {
            return Err(LayerError::shape("layer_norm", xhat.shape(), dy.shape()));
        }
        let c = xhat.cols();
        let mut dxhat = dy.clone();
        if let Some((gamma, beta)) = &mut self.affine {
            gamma.accumulate(&dy.hadamard(xhat)?.sum_rows());
            beta.accumulate(&dy.sum_rows());
            for row in dxhat.data_mut().chunks_mut(c) {
                row.iter_mut()
                    .zip(gamma.value.data())
                    .for_each(|(v, g)| *v *= g);
            }
        }
        let n = c as f64;
        let mut dx = dxhat.clone();
        for r in 0..xhat.rows() {
            let g = dxhat.row(r);
            let xh = xhat.row(r);
            let mean_g = g.iter().sum::<f64>() / n;
            let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
            let s = cache.inv_std[r];
            for ((o, &gi), &xi) in dx.row_mut(r).iter_mut().zip(g).zip(xh) {
                *o = s * (gi - mean_g - xi * mean_gx);
            }
        }
        Ok(dx)
    }
}

impl Module for LayerNorm {
    fn params(&self) -> Vec<&Param> {
        match &self.affine {
            Some((g, b)) => vec![g, b],
            None => vec![],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.affine {
            Some((g, b)) => vec![g, b],
            None => vec![],
        }
    }
}
