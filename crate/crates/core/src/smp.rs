//! Symmetric mutual promotion fusion.
//!
//! Two mirrored branches each let one modality query the other
//! (cross-attention), refine the result with self-attention and a
//! feed-forward layer, and normalize after every residual:
//!
//! ```text
//! z1  = LN(MHCA(x_tgt, x_src) + x_tgt)
//! z2  = LN(MHSA(z1) + z1)
//! out = LN(FFN(z2) + z2)
//! ```
//!
//! The left branch targets modality `a` with source `b`, the right branch
//! the reverse. Their outputs are concatenated on the feature axis (`T×2d`)
//! and mixed back to `T×d` by a pointwise convolution.

use crate::layers::{
    join, AttentionCache, Conv1dFuse, FeedForward, FeedForwardCache, LayerError, LayerNorm,
    LayerNormCache, Module, MultiHeadAttention, Param,
};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Parameters of one branch (the left and right branches have this same shape).
#[derive(Debug, Clone)]
pub struct SmpBranch {
    pub cross: MultiHeadAttention,
    pub intra: MultiHeadAttention,
    pub ffn: FeedForward,
    norms: [LayerNorm; 3],
}

#[derive(Debug, Clone)]
pub struct BranchCache {
    cross: AttentionCache,
    ln1: LayerNormCache,
    intra: AttentionCache,
    ln2: LayerNormCache,
    ffn: FeedForwardCache,
    ln3: LayerNormCache,
}

impl BranchCache {
    pub fn cross_attention(&self) -> &AttentionCache {
        &self.cross
    }

    pub fn self_attention(&self) -> &AttentionCache {
        &self.intra
    }

    pub fn ffn_cache(&self) -> &FeedForwardCache {
        &self.ffn
    }
}

impl SmpBranch {
    pub fn new(prefix: &str, d: usize, heads: usize, rng: &mut Rng) -> Self {
        Self {
            cross: MultiHeadAttention::new(&join(prefix, "cross"), d, heads, rng),
            intra: MultiHeadAttention::new(&join(prefix, "self"), d, heads, rng),
            ffn: FeedForward::new(&join(prefix, "ffn"), d, rng),
            norms: Default::default(),
        }
    }

    pub fn forward(
        &self,
        target: &Tensor,
        source: &Tensor,
    ) -> Result<(Tensor, BranchCache), LayerError> {
        self.forward_masked(target, source, None, None)
    }

    /// `target_mask` restricts self-attention keys, `source_mask` the
    /// cross-attention keys. `None` keeps every step.
    pub fn forward_masked(
        &self,
        target: &Tensor,
        source: &Tensor,
        target_mask: Option<&[bool]>,
        source_mask: Option<&[bool]>,
    ) -> Result<(Tensor, BranchCache), LayerError> {
        if target.rows() != source.rows() {
            return Err(LayerError::LengthMismatch {
                target: target.rows(),
                src: source.rows(),
            });
        }
        let (ca, cross) = self.cross.attend(target, source, source_mask)?;
        let (z1, ln1) = self.norms[0].forward(&ca.add(target)?);
        let (sa, intra) = self.intra.attend(&z1, &z1, target_mask)?;
        let (z2, ln2) = self.norms[1].forward(&sa.add(&z1)?);
        let (ff, ffn) = self.ffn.forward(&z2)?;
        let (out, ln3) = self.norms[2].forward(&ff.add(&z2)?);
        Ok((
            out,
            BranchCache {
                cross,
                ln1,
                intra,
                ln2,
                ffn,
                ln3,
            },
        ))
    }

    /// Returns `(d_target, d_source)`.
    pub fn backward(
        &mut self,
        cache: &BranchCache,
        dy: &Tensor,
    ) -> Result<(Tensor, Tensor), LayerError> {
        let d_res3 = self.norms[2].backward(&cache.ln3, dy)?;
        let mut d_z2 = self.ffn.backward(&cache.ffn, &d_res3)?;
        d_z2.add_assign(&d_res3)?;
        let d_res2 = self.norms[1].backward(&cache.ln2, &d_z2)?;
        let (dq, dkv) = self.intra.backward(&cache.intra, &d_res2)?;
        let mut d_z1 = dq.add(&dkv)?;
        d_z1.add_assign(&d_res2)?;
        let d_res1 = self.norms[0].backward(&cache.ln1, &d_z1)?;
        let (mut d_target, d_source) = self.cross.backward(&cache.cross, &d_res1)?;
        d_target.add_assign(&d_res1)?;
        Ok((d_target, d_source))
    }
}

impl Module for SmpBranch {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.cross.params();
        v.extend(self.intra.params());
        v.extend(self.ffn.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.cross.params_mut();
        v.extend(self.intra.params_mut());
        v.extend(self.ffn.params_mut());
        v
    }
}

/// Branch whose target is the first modality of the pair.
pub fn lsmp_block(
    p: &SmpBranch,
    x_tgt: &Tensor,
    x_src: &Tensor,
) -> Result<(Tensor, BranchCache), LayerError> {
    p.forward(x_tgt, x_src)
}

/// Mirrored branch. Same map as [`lsmp_block`]; only the roles of the
/// modalities fed to it differ.
pub fn rsmp_block(
    p: &SmpBranch,
    x_tgt: &Tensor,
    x_src: &Tensor,
) -> Result<(Tensor, BranchCache), LayerError> {
    p.forward(x_tgt, x_src)
}

#[derive(Debug, Clone)]
pub struct SmpLevel {
    pub left: SmpBranch,
    pub right: SmpBranch,
}

/// A stack of branch pairs followed by the fusing convolution. Level `k+1`
/// takes the left output of level `k` as its `a` input and the right output
/// as its `b` input.
#[derive(Debug, Clone)]
pub struct SmpModule {
    pub levels: Vec<SmpLevel>,
    pub fuse: Conv1dFuse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmpOutput {
    pub fused: Tensor,
    pub left: Tensor,
    pub right: Tensor,
}

#[derive(Debug, Clone)]
pub struct SmpCache {
    levels: Vec<(BranchCache, BranchCache)>,
    concat: Tensor,
}

impl SmpCache {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn branch_caches(&self, level: usize) -> (&BranchCache, &BranchCache) {
        let (l, r) = &self.levels[level];
        (l, r)
    }
}

impl SmpModule {
    pub fn new(prefix: &str, d: usize, heads: usize, blocks: usize, rng: &mut Rng) -> Self {
        assert!(blocks >= 1, "at least one SMP block");
        let levels = (0..blocks)
            .map(|k| SmpLevel {
                left: SmpBranch::new(&join(prefix, &format!("block{k}.left")), d, heads, rng),
                right: SmpBranch::new(&join(prefix, &format!("block{k}.right")), d, heads, rng),
            })
            .collect();
        Self {
            levels,
            fuse: Conv1dFuse::new(&join(prefix, "fuse"), 2 * d, d, rng),
        }
    }

    pub fn d_model(&self) -> usize {
        self.fuse.kernel().cols()
    }

    /// Parameters for the swapped pair: branches exchanged and kernel halves
    /// exchanged. `mirrored().forward(b, a).fused == forward(a, b).fused`.
    pub fn mirrored(&self) -> SmpModule {
        let mut out = self.clone();
        for lvl in &mut out.levels {
            std::mem::swap(&mut lvl.left, &mut lvl.right);
        }
        let d = self.d_model();
        let k = self.fuse.kernel();
        let mut swapped = Tensor::zeros(k.shape());
        for i in 0..d {
            swapped.row_mut(i).copy_from_slice(k.row(d + i));
            swapped.row_mut(d + i).copy_from_slice(k.row(i));
        }
        *out.fuse.kernel_mut() = swapped;
        out
    }

    pub fn forward(&self, x_a: &Tensor, x_b: &Tensor) -> Result<(SmpOutput, SmpCache), LayerError> {
        self.forward_masked(x_a, x_b, None, None)
    }

    /// Like [`forward`](Self::forward) with per-modality key masks over time steps.
    pub fn forward_masked(
        &self,
        x_a: &Tensor,
        x_b: &Tensor,
        mask_a: Option<&[bool]>,
        mask_b: Option<&[bool]>,
    ) -> Result<(SmpOutput, SmpCache), LayerError> {
        let d = self.d_model();
        if x_a.shape() != x_b.shape() || x_a.rank() != 2 || x_a.cols() != d {
            return Err(LayerError::shape("smp_fuse", x_a.shape(), x_b.shape()));
        }
        let mut a = x_a.clone();
        let mut b = x_b.clone();
        let mut caches = Vec::with_capacity(self.levels.len());
        for lvl in &self.levels {
            let (left, lc) = lvl.left.forward_masked(&a, &b, mask_a, mask_b)?;
            let (right, rc) = lvl.right.forward_masked(&b, &a, mask_b, mask_a)?;
            caches.push((lc, rc));
            a = left;
            b = right;
        }
        let concat = Tensor::concat_cols(&[&a, &b])?;
        let fused = self.fuse.forward(&concat)?;
        Ok((
            SmpOutput {
                fused,
                left: a,
                right: b,
            },
            SmpCache {
                levels: caches,
                concat,
            },
        ))
    }

    /// Backpropagates a gradient on `fused`; returns `(d_x_a, d_x_b)`.
    pub fn backward(
        &mut self,
        cache: &SmpCache,
        d_fused: &Tensor,
    ) -> Result<(Tensor, Tensor), LayerError> {
        let d = self.d_model();
        let d_concat = self.fuse.backward(&cache.concat, d_fused)?;
        let mut d_a = d_concat.slice_cols(0, d);
        let mut d_b = d_concat.slice_cols(d, 2 * d);
        for (lvl, (lc, rc)) in self.levels.iter_mut().zip(&cache.levels).rev() {
            let (dl_tgt, dl_src) = lvl.left.backward(lc, &d_a)?;
            let (dr_tgt, dr_src) = lvl.right.backward(rc, &d_b)?;
            d_a = dl_tgt.add(&dr_src)?;
            d_b = dr_tgt.add(&dl_src)?;
        }
        Ok((d_a, d_b))
    }
}

impl Module for SmpModule {
    fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        for lvl in &self.levels {
            v.extend(lvl.left.params());
            v.extend(lvl.right.params());
        }
        v.extend(self.fuse.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        for lvl in &mut self.levels {
            v.extend(lvl.left.params_mut());
            v.extend(lvl.right.params_mut());
        }
        v.extend(self.fuse.params_mut());
        v
    }
}
