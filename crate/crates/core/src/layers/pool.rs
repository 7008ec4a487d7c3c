use crate::layers::linear::Linear;
use crate::layers::param::{join, Module, Param};
use crate::layers::LayerError;
use crate::rng::Rng;
use crate::tensor::{softmax_in_place, Tensor};

/// Mean over the time axis: `[T × d] -> [d]`.
pub fn mean_pool_time(x: &Tensor) -> Result<Tensor, LayerError> {
    if x.is_empty() {
        return Err(LayerError::EmptySequence);
    }
    Ok(x.sum_rows().scale(1.0 / x.rows() as f64))
}

/// Spreads `dy / T` over every row.
pub fn mean_pool_backward(dy: &Tensor, steps: usize) -> Tensor {
    let d = dy.len();
    let g = dy.scale(1.0 / steps as f64);
    let mut out = Vec::with_capacity(steps * d);
    for _ in 0..steps {
        out.extend_from_slice(g.data());
    }
    Tensor::new(&[steps, d], out).expect("nonempty")
}

/// Additive attention pooling: `u_t = v · tanh(W h_t + b)`, `α = softmax(u)`,
/// output `Σ_t α_t h_t`.
#[derive(Debug, Clone)]
pub struct AttentionPool {
    pub score: Linear,
    pub context: Param,
}

#[derive(Debug, Clone)]
pub struct AttentionPoolCache {
    input: Tensor,
    activated: Tensor,
    weights: Vec<f64>,
}

impl AttentionPoolCache {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl AttentionPool {
    pub fn new(prefix: &str, d: usize, rng: &mut Rng) -> Self {
        Self {
            score: Linear::new(&join(prefix, "score"), d, d, rng),
            context: Param::scaled_uniform(join(prefix, "context"), &[d], d, 1, rng),
        }
    }

    pub fn forward(&self, h: &Tensor) -> Result<(Tensor, AttentionPoolCache), LayerError> {
        if h.rank() != 2 || h.cols() != self.context.value.len() {
            return Err(LayerError::shape(
                "attention_pool",
                h.shape(),
                self.context.value.shape(),
            ));
        }
        let activated = self.score.forward(h)?.map(f64::tanh);
        let mut weights: Vec<f64> = (0..h.rows())
            .map(|t| {
                activated
                    .row(t)
                    .iter()
                    .zip(self.context.value.data())
                    .map(|(a, v)| a * v)
                    .sum()
            })
            .collect();
        softmax_in_place(&mut weights);
        let mut out = vec![0.0; h.cols()];
        for (t, &w) in weights.iter().enumerate() {
            out.iter_mut().zip(h.row(t)).for_each(|(o, x)| *o += w * x);
        }
        Ok((
            Tensor::vector(out),
            AttentionPoolCache {
                input: h.clone(),
                activated,
                weights,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &AttentionPoolCache,
        dy: &Tensor,
    ) -> Result<Tensor, LayerError> {
        let h = &cache.input;
        let (steps, d) = (h.rows(), h.cols());
        if dy.len() != d {
            return Err(LayerError::shape(
                "attention_pool backward",
                &[d],
                dy.shape(),
            ));
        }
        let dy = dy.data();
        let alpha = &cache.weights;
        let d_alpha: Vec<f64> = (0..steps)
            .map(|t| h.row(t).iter().zip(dy).map(|(a, b)| a * b).sum())
            .collect();
        let inner: f64 = alpha.iter().zip(&d_alpha).map(|(a, b)| a * b).sum();
        let d_score: Vec<f64> = alpha
            .iter()
            .zip(&d_alpha)
            .map(|(a, g)| a * (g - inner))
            .collect();

        let mut dh = Tensor::zeros(&[steps, d]);
        let mut d_pre = Tensor::zeros(&[steps, d]);
        let mut d_context = vec![0.0; d];
        let v = self.context.value.data();
        for t in 0..steps {
            let row = dh.row_mut(t);
            row.iter_mut().zip(dy).for_each(|(o, g)| *o = alpha[t] * g);
            let act = cache.activated.row(t);
            for j in 0..d {
                d_context[j] += d_score[t] * act[j];
                d_pre.set(t, j, d_score[t] * v[j] * (1.0 - act[j] * act[j]));
            }
        }
        self.context.accumulate(&Tensor::vector(d_context));
        dh.add_assign(&self.score.backward(h, &d_pre)?)?;
        Ok(dh)
    }
}

impl Module for AttentionPool {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.score.params();
        v.push(&self.context);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.score.params_mut();
        v.push(&mut self.context);
        v
    }
}
