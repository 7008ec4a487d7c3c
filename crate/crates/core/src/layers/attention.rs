//! Multi-head scaled dot-product attention.
//!
//! Queries come from the target sequence, keys and values from the source.
//! Self-attention is the same computation with target == source. `d` is
//! split into `heads` slices of width `d / heads`; the concatenated head
//! outputs are mixed by `w_o`. No biases.

use crate::layers::param::{join, Module, Param};
use crate::layers::LayerError;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
    pub w_o: Param,
    heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    target: Tensor,
    source: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    probs: Vec<Tensor>,
    concat: Tensor,
}

impl AttentionCache {
    /// Row-stochastic `T_target × T_source` weights of one head.
    pub fn attention(&self, head: usize) -> &Tensor {
        &self.probs[head]
    }

    pub fn num_heads(&self) -> usize {
        self.probs.len()
    }
}

impl MultiHeadAttention {
    /// # Panics
    /// If `d` is not divisible by `heads`.
    pub fn new(prefix: &str, d: usize, heads: usize, rng: &mut Rng) -> Self {
        assert!(
            heads > 0 && d % heads == 0,
            "d={d} not divisible by heads={heads}"
        );
        let mut mk = |n: &str| Param::scaled_uniform(join(prefix, n), &[d, d], d, d, rng);
        Self {
            w_q: mk("w_q"),
            w_k: mk("w_k"),
            w_v: mk("w_v"),
            w_o: mk("w_o"),
            heads,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn d_model(&self) -> usize {
        self.w_q.value.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model() / self.heads
    }

    pub fn self_attention(&self, h: &Tensor) -> Result<(Tensor, AttentionCache), LayerError> {
        self.attend(h, h, None)
    }

    /// Requires equal sequence lengths.
    pub fn cross_attention(
        &self,
        target: &Tensor,
        source: &Tensor,
    ) -> Result<(Tensor, AttentionCache), LayerError> {
        if target.rows() != source.rows() {
            return Err(LayerError::LengthMismatch {
                target: target.rows(),
                src: source.rows(),
            });
        }
        self.attend(target, source, None)
    }

    /// General form. `key_mask[j] == false` removes source step `j` from every
    /// query's distribution; at least one key must remain.
    pub fn attend(
        &self,
        target: &Tensor,
        source: &Tensor,
        key_mask: Option<&[bool]>,
    ) -> Result<(Tensor, AttentionCache), LayerError> {
        let d = self.d_model();
        if target.cols() != d || source.cols() != d {
            return Err(LayerError::shape(
                "attention",
                target.shape(),
                source.shape(),
            ));
        }
        if let Some(mask) = key_mask {
            if mask.len() != source.rows() || !mask.iter().any(|&m| m) {
                return Err(LayerError::shape(
                    "attention mask",
                    &[mask.len()],
                    source.shape(),
                ));
            }
        }
        let q = target.matmul(&self.w_q.value)?;
        let k = source.matmul(&self.w_k.value)?;
        let v = source.matmul(&self.w_v.value)?;
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut concat = Tensor::zeros(&[target.rows(), d]);
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let qh = q.slice_cols(lo, hi);
            let kh = k.slice_cols(lo, hi);
            let vh = v.slice_cols(lo, hi);
            let mut scores = qh.matmul_nt(&kh)?.scale(scale);
            if let Some(mask) = key_mask {
                for r in 0..scores.rows() {
                    for (s, &keep) in scores.row_mut(r).iter_mut().zip(mask) {
                        if !keep {
                            *s = f64::NEG_INFINITY;
                        }
                    }
                }
            }
            let p = scores.softmax_rows();
            concat.set_cols(lo, &p.matmul(&vh)?);
            probs.push(p);
        }
        let out = concat.matmul(&self.w_o.value)?;
        Ok((
            out,
            AttentionCache {
                target: target.clone(),
                source: source.clone(),
                q,
                k,
                v,
                probs,
                concat,
            },
        ))
    }

    /// Returns `(d_target, d_source)`. For self-attention the input gradient
    /// is their sum.
    pub fn backward(
        &mut self,
        cache: &AttentionCache,
        dy: &Tensor,
    ) -> Result<(Tensor, Tensor), LayerError> {
        if dy.shape() != cache.concat.shape() {
            return Err(LayerError::shape(
                "attention backward",
                cache.concat.shape(),
                dy.shape(),
            ));
        }
        self.w_o.accumulate(&cache.concat.matmul_tn(dy)?);
        let d_concat = dy.matmul_nt(&self.w_o.value)?;
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut dq = Tensor::zeros(cache.q.shape());
        let mut dkey = Tensor::zeros(cache.k.shape());
        let mut dv = Tensor::zeros(cache.v.shape());
        for h in 0..self.heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let p = &cache.probs[h];
            let d_out = d_concat.slice_cols(lo, hi);
            let vh = cache.v.slice_cols(lo, hi);
            let dp = d_out.matmul_nt(&vh)?;
            dv.set_cols(lo, &p.matmul_tn(&d_out)?);
            let mut ds = dp.clone();
            for r in 0..ds.rows() {
                let pr = p.row(r);
                let inner: f64 = dp.row(r).iter().zip(pr).map(|(a, b)| a * b).sum();
                for (s, &pi) in ds.row_mut(r).iter_mut().zip(pr) {
                    *s = pi * (*s - inner) * scale;
                }
            }
            dq.set_cols(lo, &ds.matmul(&cache.k.slice_cols(lo, hi))?);
            dkey.set_cols(lo, &ds.matmul_tn(&cache.q.slice_cols(lo, hi))?);
        }
        self.w_q.accumulate(&cache.target.matmul_tn(&dq)?);
        self.w_k.accumulate(&cache.source.matmul_tn(&dkey)?);
        self.w_v.accumulate(&cache.source.matmul_tn(&dv)?);
        let d_target = dq.matmul_nt(&self.w_q.value)?;
        let mut d_source = dkey.matmul_nt(&self.w_k.value)?;
        d_source.add_assign(&dv.matmul_nt(&self.w_v.value)?)?;
        Ok((d_target, d_source))
    }
}

impl Module for MultiHeadAttention {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w_q, &self.w_k, &self.w_v, &self.w_o]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_o]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::gradcheck::{grad_check, Probe};

    struct CrossProbe {
        attn: MultiHeadAttention,
        proj: Tensor,
    }

    impl Probe for CrossProbe {
        fn loss(&self, inputs: &[Tensor]) -> f64 {
            let (y, _) = self.attn.cross_attention(&inputs[0], &inputs[1]).unwrap();
            y.dot(&self.proj).unwrap()
        }
        fn backward(&mut self, inputs: &[Tensor]) -> Vec<Tensor> {
            let (_, cache) = self.attn.cross_attention(&inputs[0], &inputs[1]).unwrap();
            let (dt, ds) = self.attn.backward(&cache, &self.proj).unwrap();
            vec![dt, ds]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            self.attn.params_mut()
        }
    }

    struct SelfProbe(CrossProbe);

    impl Probe for SelfProbe {
        fn loss(&self, inputs: &[Tensor]) -> f64 {
            let (y, _) = self.0.attn.self_attention(&inputs[0]).unwrap();
            y.dot(&self.0.proj).unwrap()
        }
        fn backward(&mut self, inputs: &[Tensor]) -> Vec<Tensor> {
            let (_, cache) = self.0.attn.self_attention(&inputs[0]).unwrap();
            let (dt, ds) = self.0.attn.backward(&cache, &self.0.proj).unwrap();
            vec![dt.add(&ds).unwrap()]
        }
        fn params_mut(&mut self) -> Vec<&mut Param> {
            self.0.attn.params_mut()
        }
    }

    fn rand(rng: &mut Rng, t: usize, d: usize) -> Tensor {
        Tensor::rand_uniform(rng, &[t, d], -1.0, 1.0).unwrap()
    }

    #[test]
    fn identical_keys_give_uniform_rows() {
        let mut rng = Rng::new(1);
        let attn = MultiHeadAttention::new("a", 8, 2, &mut rng);
        let target = rand(&mut rng, 5, 8);
        let row = rand(&mut rng, 1, 8);
        let source = Tensor::from_rows(&vec![row.row(0).to_vec(); 5]).unwrap();
        let (y, cache) = attn.cross_attention(&target, &source).unwrap();
        for h in 0..2 {
            assert!(cache
                .attention(h)
                .data()
                .iter()
                .all(|&p| (p - 0.2).abs() < 1e-15));
        }
        for r in 1..5 {
            assert!(y
                .row(r)
                .iter()
                .zip(y.row(0))
                .all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn single_token_passes_value_through() {
        let mut rng = Rng::new(2);
        let attn = MultiHeadAttention::new("a", 8, 4, &mut rng);
        let h = rand(&mut rng, 1, 8);
        let (y, cache) = attn.self_attention(&h).unwrap();
        assert_eq!(cache.attention(0).data(), &[1.0]);
        let expected = h
            .matmul(&attn.w_v.value)
            .unwrap()
            .matmul(&attn.w_o.value)
            .unwrap();
        assert!(y.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn cross_with_same_input_is_self_attention() {
        let mut rng = Rng::new(3);
        let attn = MultiHeadAttention::new("a", 8, 2, &mut rng);
        let h = rand(&mut rng, 6, 8);
        let (a, _) = attn.cross_attention(&h, &h).unwrap();
        let (b, _) = attn.self_attention(&h).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut rng = Rng::new(3);
        let attn = MultiHeadAttention::new("a", 4, 2, &mut rng);
        let err = attn
            .cross_attention(&rand(&mut rng, 3, 4), &rand(&mut rng, 4, 4))
            .unwrap_err();
        assert_eq!(err, LayerError::LengthMismatch { target: 3, src: 4 });
    }

    #[test]
    fn mask_zeroes_masked_keys() {
        let mut rng = Rng::new(4);
        let attn = MultiHeadAttention::new("a", 4, 2, &mut rng);
        let h = rand(&mut rng, 4, 4);
        let mask = [true, true, false, false];
        let (_, cache) = attn.attend(&h, &h, Some(&mask)).unwrap();
        for r in 0..4 {
            let row = cache.attention(1).row(r);
            assert_eq!(&row[2..], &[0.0, 0.0]);
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn self_attention_grad_check() {
        let mut rng = Rng::new(5);
        let attn = MultiHeadAttention::new("a", 8, 2, &mut rng);
        let proj = rand(&mut rng, 5, 8);
        let h = rand(&mut rng, 5, 8);
        let report = grad_check(&mut SelfProbe(CrossProbe { attn, proj }), &mut [h]);
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn cross_attention_grad_check_reaches_both_inputs() {
        let mut rng = Rng::new(6);
        let attn = MultiHeadAttention::new("a", 8, 4, &mut rng);
        let proj = rand(&mut rng, 5, 8);
        let mut inputs = [rand(&mut rng, 5, 8), rand(&mut rng, 5, 8)];
        let mut probe = CrossProbe { attn, proj };
        let grads = probe.backward(&inputs);
        assert!(grads
            .iter()
            .all(|g| g.data().iter().any(|&x| x.abs() > 1e-6)));
        let report = grad_check(&mut probe, &mut inputs);
        assert!(report.max_rel_error <= 1e-4, "{report:?}");
    }
}
