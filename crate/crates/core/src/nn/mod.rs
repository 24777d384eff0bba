//! Minimal neural kernels with hand-derived reverse-mode gradients.
//!
//! Every layer is a plain description (parameter ids plus sizes). Values live in
//! a [`ParameterStore`]; `forward` returns the output together with whatever the
//! matching `backward` needs, and `backward` accumulates into a [`Grads`] buffer
//! laid out like the store.
//!
//! Batched sequences are stored as 2-D matrices. The recurrent stack uses a
//! time-major layout (row `t * batch + b`), the attention stack a window-major
//! layout (row `b * len + t`).

mod activation;
mod attention;
mod encoding;
mod linear;
mod lstm;
mod norm;
mod params;
mod scalar;
mod transformer;

pub use activation::{gelu, gelu_grad, sigmoid};
pub use attention::{Mha, MhaCache};
pub use encoding::{add_temporal_encoding, temporal_encoding};
pub use linear::Linear;
pub use lstm::{LstmCache, LstmStack, LstmStackConfig};
pub use norm::{LayerNorm, LayerNormCache};
pub use params::{Grads, Init, Layout, ParamId, ParamSpec, ParameterStore, Tensor};
pub use scalar::Scalar;
pub use transformer::{TransformerCache, TransformerConfig, TransformerLayer, TransformerStack};

use crate::error::{Error, Result};
use ndarray::ArrayView2;

/// Fails with a numeric error if any entry is NaN or infinite.
pub fn check_finite<S: Scalar>(what: &str, x: ArrayView2<'_, S>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite value in {what}")))
    }
}
