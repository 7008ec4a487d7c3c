use crate::layers::param::{join, Module, Param};
use crate::layers::LayerError;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `y = x W + b` applied to every row of `x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(prefix: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Param::scaled_uniform(join(prefix, "weight"), &[d_in, d_out], d_in, d_out, rng),
            bias: Param::zeros(join(prefix, "bias"), &[d_out]),
        }
    }

    pub fn from_parts(prefix: &str, weight: Tensor, bias: Tensor) -> Result<Self, LayerError> {
        if weight.rank() != 2 || bias.len() != weight.cols() {
            return Err(LayerError::shape("linear", weight.shape(), bias.shape()));
        }
        Ok(Self {
            weight: Param::new(join(prefix, "weight"), weight),
            bias: Param::new(join(prefix, "bias"), bias),
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, LayerError> {
        Ok(x.matmul(&self.weight.value)?
            .add_row_vector(&self.bias.value)?)
    }

    /// Accumulates `dW`, `db` and returns `dx` (same shape as `x`).
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor, LayerError> {
        let x2 = as_matrix(x);
        let dy2 = as_matrix(dy);
        self.weight.accumulate(&x2.matmul_tn(&dy2)?);
        self.bias.accumulate(&dy2.sum_rows());
        let dx = dy2.matmul_nt(&self.weight.value)?;
        Ok(dx.reshape(x.shape())?)
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub(crate) fn as_matrix(t: &Tensor) -> Tensor {
    if t.rank() == 2 {
        t.clone()
    } else {
        t.clone()
            .reshape(&[t.rows(), t.cols()])
            .expect("same element count")
    }
}
