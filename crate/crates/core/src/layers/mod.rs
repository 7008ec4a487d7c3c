//! Neural layers with hand-written backward passes.
//!
//! Forward passes take `&self` and return a cache; backward passes take
//! `&mut self`, accumulate into parameter gradients and return the input
//! gradient. Several forwards may share one parameter set concurrently, but
//! backward needs exclusive access.

mod attention;
mod conv;
mod ffn;
pub mod gradcheck;
mod linear;
mod lstm;
mod norm;
mod param;
mod pool;
mod positional;

pub use attention::{AttentionCache, MultiHeadAttention};
pub use conv::Conv1dFuse;
pub use ffn::{FeedForward, FeedForwardCache};
pub use gradcheck::{
    grad_check, grad_check_scalars, grad_check_scalars_with, relative_error, ridders,
    GradCheckOptions, GradCheckReport, Probe, ScalarCheck, DEFAULT_STEP,
};
pub use linear::Linear;
pub use lstm::{BiLstm, BiLstmCache, LstmDirection};
pub use norm::{layer_norm, LayerNorm, LayerNormCache, LN_EPS};
pub use param::{Module, Param};
pub use pool::{mean_pool_backward, mean_pool_time, AttentionPool, AttentionPoolCache};
pub use positional::PositionalTable;

pub(crate) use param::join;

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("sequence length mismatch: target has {target} steps, source has {src}")]
    LengthMismatch { target: usize, src: usize },
    #[error("sequence of {len} steps exceeds the positional table ({max})")]
    SequenceTooLong { len: usize, max: usize },
    #[error("empty sequence")]
    EmptySequence,
}

impl LayerError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Self::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
