use crate::layers::LayerError;
use crate::tensor::Tensor;

/// Fixed sinusoidal table: `pe[t, 2i] = sin(t / 10000^(2i/d))`,
/// `pe[t, 2i+1] = cos(t / 10000^(2i/d))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalTable {
    pe: Tensor,
}

impl PositionalTable {
    pub fn new(max_len: usize, d: usize) -> Self {
        let mut pe = Tensor::zeros(&[max_len, d]);
        for t in 0..max_len {
            for i in (0..d).step_by(2) {
                let angle = t as f64 / 10000f64.powf(i as f64 / d as f64);
                pe.set(t, i, angle.sin());
                if i + 1 < d {
                    pe.set(t, i + 1, angle.cos());
                }
            }
        }
        Self { pe }
    }

    pub fn max_len(&self) -> usize {
        self.pe.rows()
    }

    pub fn table(&self) -> &Tensor {
        &self.pe
    }

    pub fn add(&self, x: &Tensor) -> Result<Tensor, LayerError> {
        let (t, d) = (x.rows(), x.cols());
        if t > self.max_len() {
            return Err(LayerError::SequenceTooLong {
                len: t,
                max: self.max_len(),
            });
        }
        if d != self.pe.cols() {
            return Err(LayerError::shape(
                "add_positional",
                x.shape(),
                self.pe.shape(),
            ));
        }
        let mut out = x.clone();
        out.data_mut()
            .iter_mut()
            .zip(&self.pe.data()[..t * d])
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }
}
