//! Bidirectional LSTM with full backpropagation through time.
//!
//! Gate layout inside the `4H` pre-activation is `[input, forget, cell, output]`.

use crate::layers::param::{join, Module, Param};
use crate::layers::LayerError;
use crate::rng::Rng;
use crate::tensor::Tensor;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct LstmDirection {
    pub w_input: Param,
    pub w_hidden: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
struct DirectionCache {
    inputs: Tensor,
    /// Activated gates per step, `[T × 4H]`.
    gates: Tensor,
    cells: Tensor,
    hidden: Tensor,
}

impl LstmDirection {
    pub fn new(prefix: &str, d_in: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w_input: Param::scaled_uniform(
                join(prefix, "w_input"),
                &[d_in, 4 * hidden],
                d_in,
                4 * hidden,
                rng,
            ),
            w_hidden: Param::scaled_uniform(
                join(prefix, "w_hidden"),
                &[hidden, 4 * hidden],
                hidden,
                4 * hidden,
                rng,
            ),
            bias: Param::zeros(join(prefix, "bias"), &[4 * hidden]),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.value.rows()
    }

    /// Runs over `x` from row 0 upward.
    fn run(&self, x: &Tensor) -> Result<DirectionCache, LayerError> {
        let hs = self.hidden_size();
        let steps = x.rows();
        let pre_x = x
            .matmul(&self.w_input.value)?
            .add_row_vector(&self.bias.value)?;
        let wh = &self.w_hidden.value;
        let mut gates = Tensor::zeros(&[steps, 4 * hs]);
        let mut cells = Tensor::zeros(&[steps, hs]);
        let mut hidden = Tensor::zeros(&[steps, hs]);
        let mut h_prev = vec![0.0; hs];
        let mut c_prev = vec![0.0; hs];
        for t in 0..steps {
            let mut z = pre_x.row(t).to_vec();
            for (k, &h) in h_prev.iter().enumerate() {
                if h != 0.0 {
                    z.iter_mut().zip(wh.row(k)).for_each(|(zi, w)| *zi += h * w);
                }
            }
            let g = gates.row_mut(t);
            for j in 0..hs {
                g[j] = sigmoid(z[j]);
                g[hs + j] = sigmoid(z[hs + j]);
                g[2 * hs + j] = z[2 * hs + j].tanh();
                g[3 * hs + j] = sigmoid(z[3 * hs + j]);
            }
            let g = gates.row(t).to_vec();
            for j in 0..hs {
                let c = g[hs + j] * c_prev[j] + g[j] * g[2 * hs + j];
                c_prev[j] = c;
                h_prev[j] = g[3 * hs + j] * c.tanh();
            }
            cells.row_mut(t).copy_from_slice(&c_prev);
            hidden.row_mut(t).copy_from_slice(&h_prev);
        }
        Ok(DirectionCache {
            inputs: x.clone(),
            gates,
            cells,
            hidden,
        })
    }

    /// `dh` is the upstream gradient on each step's hidden state, in the
    /// same (processing) order as the forward run.
    fn backward(&mut self, cache: &DirectionCache, dh: &Tensor) -> Result<Tensor, LayerError> {
        let hs = self.hidden_size();
        let steps = cache.inputs.rows();
        let mut dz_all = Tensor::zeros(&[steps, 4 * hs]);
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        for t in (0..steps).rev() {
            let g = cache.gates.row(t);
            let c = cache.cells.row(t);
            let dz = dz_all.row_mut(t);
            for j in 0..hs {
                let (i, f, cand, o) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
                let c_prev = if t > 0 { cache.cells.at(t - 1, j) } else { 0.0 };
                let tc = c[j].tanh();
                let dhj = dh.at(t, j) + dh_next[j];
                let dc = dc_next[j] + dhj * o * (1.0 - tc * tc);
                dz[j] = dc * cand * i * (1.0 - i);
                dz[hs + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * hs + j] = dc * i * (1.0 - cand * cand);
                dz[3 * hs + j] = dhj * tc * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let dz = dz_all.row(t);
            for (k, d) in dh_next.iter_mut().enumerate() {
                *d = self
                    .w_hidden
                    .value
                    .row(k)
                    .iter()
                    .zip(dz)
                    .map(|(w, z)| w * z)
                    .sum();
            }
        }
        self.w_input.accumulate(&cache.inputs.matmul_tn(&dz_all)?);
        self.bias.accumulate(&dz_all.sum_rows());
        if steps > 1 {
            let h_prev = cache.hidden.slice_rows(0, steps - 1);
            let dz_tail = dz_all.slice_rows(1, steps);
            self.w_hidden.accumulate(&h_prev.matmul_tn(&dz_tail)?);
        }
        Ok(dz_all.matmul_nt(&self.w_input.value)?)
    }
}

impl Module for LstmDirection {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

/// A forward and a backward [`LstmDirection`]; output step `t` is
/// `[h_fwd(t) | h_bwd(t)]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward_dir: LstmDirection,
    pub backward_dir: LstmDirection,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
}

fn reverse_rows(x: &Tensor) -> Tensor {
    let perm: Vec<usize> = (0..x.rows()).rev().collect();
    x.permute_rows(&perm)
}

impl BiLstm {
    /// Each direction has `d_out / 2` hidden units.
    pub fn new(prefix: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        assert!(
            d_out % 2 == 0 && d_out > 0,
            "BiLSTM output width must be even"
        );
        Self {
            forward_dir: LstmDirection::new(&join(prefix, "fwd"), d_in, d_out / 2, rng),
            backward_dir: LstmDirection::new(&join(prefix, "bwd"), d_in, d_out / 2, rng),
        }
    }

    pub fn d_in(&self) -> usize {
        self.forward_dir.w_input.value.rows()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BiLstmCache), LayerError> {
        if x.rank() != 2 || x.cols() != self.d_in() {
            return Err(LayerError::shape(
                "bilstm",
                x.shape(),
                self.forward_dir.w_input.value.shape(),
            ));
        }
        let fwd = self.forward_dir.run(x)?;
        let bwd = self.backward_dir.run(&reverse_rows(x))?;
        let out = Tensor::concat_cols(&[&fwd.hidden, &reverse_rows(&bwd.hidden)])?;
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backward(&mut self, cache: &BiLstmCache, dy: &Tensor) -> Result<Tensor, LayerError> {
        let hs = self.forward_dir.hidden_size();
        if dy.cols() != 2 * hs || dy.rows() != cache.fwd.inputs.rows() {
            return Err(LayerError::shape(
                "bilstm backward",
                &[cache.fwd.inputs.rows(), 2 * hs],
                dy.shape(),
            ));
        }
        let mut dx = self
            .forward_dir
            .backward(&cache.fwd, &dy.slice_cols(0, hs))?;
        let d_rev = self
            .backward_dir
            .backward(&cache.bwd, &reverse_rows(&dy.slice_cols(hs, 2 * hs)))?;
        dx.add_assign(&reverse_rows(&d_rev))?;
        Ok(dx)
    }
}

impl Module for BiLstm {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.forward_dir.params();
        v.extend(self.backward_dir.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.forward_dir.params_mut();
        v.extend(self.backward_dir.params_mut());
        v
    }
}
