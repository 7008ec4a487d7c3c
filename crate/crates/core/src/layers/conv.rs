use crate::layers::linear::Linear;
use crate::layers::param::{Module, Param};
use crate::layers::LayerError;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Kernel-size-1 convolution over time: maps each step's `c_in` channels to
/// `c_out` and preserves the sequence length.
#[derive(Debug, Clone)]
pub struct Conv1dFuse {
    inner: Linear,
}

impl Conv1dFuse {
    pub fn new(prefix: &str, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let mut inner = Linear::new(prefix, c_in, c_out, rng);
        inner.weight.name = format!("{prefix}.kernel");
        Self { inner }
    }

    pub fn from_kernel(prefix: &str, kernel: Tensor, bias: Tensor) -> Result<Self, LayerError> {
        let mut inner = Linear::from_parts(prefix, kernel, bias)?;
        inner.weight.name = format!("{prefix}.kernel");
        Ok(Self { inner })
    }

    /// `[c_in × c_out]`.
    pub fn kernel(&self) -> &Tensor {
        &self.inner.weight.value
    }

    pub fn kernel_mut(&mut self) -> &mut Tensor {
        &mut self.inner.weight.value
    }

    pub fn bias(&self) -> &Tensor {
        &self.inner.bias.value
    }

    pub fn bias_mut(&mut self) -> &mut Tensor {
        &mut self.inner.bias.value
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, LayerError> {
        if x.cols() != self.inner.d_in() {
            return Err(LayerError::shape(
                "conv1d_fuse",
                x.shape(),
                self.kernel().shape(),
            ));
        }
        self.inner.forward(x)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor, LayerError> {
        self.inner.backward(x, dy)
    }
}

impl Module for Conv1dFuse {
    fn params(&self) -> Vec<&Param> {
        self.inner.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.inner.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::gradcheck::{grad_check, Probe};

    struct ConvProbe {
        conv: Conv1dFuse,
        proj: Tensor,
    }

    impl Probe for ConvProbe {
        fn loss(&self, inputs: &[Tensor]) -> f64 {
            self.conv
                .forward(&inputs[0])
                .unwrap()
                .dot(&self.proj)
                .unwrap()
        }
        fn backward(&mut self, inputs: &[Tensor]) -> Vec<Tensor> {
            vec![self.conv.backward(&inputs[0], &self.proj).unwrap()]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            self.conv.params_mut()
        }
    }

    fn selector(d: usize) -> Tensor {
        let mut k = Tensor::zeros(&[2 * d, d]);
        for i in 0..d {
            k.set(i, i, 1.0);
        }
        k
    }

    #[test]
    fn selector_kernel_picks_first_half() {
        let d = 3;
        let conv = Conv1dFuse::from_kernel("c", selector(d), Tensor::zeros(&[d])).unwrap();
        let x = Tensor::rand_uniform(&mut Rng::new(1), &[5, 2 * d], -1.0, 1.0).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x.slice_cols(0, d));
    }

    #[test]
    fn zero_kernel_zero_output() {
        let conv =
            Conv1dFuse::from_kernel("c", Tensor::zeros(&[4, 2]), Tensor::zeros(&[2])).unwrap();
        let x = Tensor::rand_uniform(&mut Rng::new(1), &[3, 4], -1.0, 1.0).unwrap();
        assert!(conv.forward(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch() {
        let conv = Conv1dFuse::new("c", 4, 2, &mut Rng::new(0));
        assert!(conv.forward(&Tensor::zeros(&[3, 3])).is_err());
    }

    #[test]
    fn gradient_check() {
        let mut rng = Rng::new(2);
        let conv = Conv1dFuse::new("c", 6, 3, &mut rng);
        let proj = Tensor::rand_uniform(&mut rng, &[4, 3], -1.0, 1.0).unwrap();
        let x = Tensor::rand_uniform(&mut rng, &[4, 6], -1.0, 1.0).unwrap();
        let report = grad_check(&mut ConvProbe { conv, proj }, &mut [x]);
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }
}
