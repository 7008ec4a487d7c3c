use crate::rng::Rng;
use crate::tensor::Tensor;

/// A named trainable array with a gradient accumulator of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn scaled_uniform(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Tensor::rand_uniform(rng, shape, -limit, limit).expect("positive limit");
        Self::new(name, value)
    }

    pub fn accumulate(&mut self, g: &Tensor) {
        self.grad
            .add_assign_flat(g)
            .expect("gradient shape mirrors parameter");
    }
}

/// Anything that owns parameters. Order of the returned lists is stable and
/// defines checkpoint layout and optimizer state layout.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
