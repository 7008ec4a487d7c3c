use crate::layers::linear::Linear;
use crate::layers::param::{join, Module, Param};
use crate::layers::LayerError;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Position-wise `ReLU(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub first: Linear,
    pub second: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    input: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

impl FeedForwardCache {
    /// Pre-activations of the inner layer.
    pub fn pre_activations(&self) -> &Tensor {
        &self.pre
    }
}

impl FeedForward {
    /// Inner width `4 * d`.
    pub fn new(prefix: &str, d: usize, rng: &mut Rng) -> Self {
        Self::with_inner(prefix, d, 4 * d, rng)
    }

    pub fn with_inner(prefix: &str, d: usize, inner: usize, rng: &mut Rng) -> Self {
        Self {
            first: Linear::new(&join(prefix, "fc1"), d, inner, rng),
            second: Linear::new(&join(prefix, "fc2"), inner, d, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, FeedForwardCache), LayerError> {
        let pre = self.first.forward(x)?;
        let hidden = pre.relu();
        let y = self.second.forward(&hidden)?;
        Ok((
            y,
            FeedForwardCache {
                input: x.clone(),
                pre,
                hidden,
            },
        ))
    }

    /// Moves `fc1` biases by `3 * margin` on every unit with a pre-activation
    /// in `cache` closer than `margin` to the ReLU kink. Returns whether any
    /// bias moved. Used to prepare finite-difference instances.
    pub fn shift_kinks(&mut self, cache: &FeedForwardCache, margin: f64) -> bool {
        let pre = &cache.pre;
        let mut moved = false;
        for j in 0..pre.cols() {
            if (0..pre.rows()).any(|t| pre.at(t, j).abs() < margin) {
                self.first.bias.value.data_mut()[j] += 3.0 * margin;
                moved = true;
            }
        }
        moved
    }

    pub fn backward(
        &mut self,
        cache: &FeedForwardCache,
        dy: &Tensor,
    ) -> Result<Tensor, LayerError> {
        let d_hidden = self.second.backward(&cache.hidden, dy)?;
        let d_pre = d_hidden.hadamard(&cache.pre.map(|p| if p > 0.0 { 1.0 } else { 0.0 }))?;
        self.first.backward(&cache.input, &d_pre)
    }
}

impl Module for FeedForward {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v
    }
}
