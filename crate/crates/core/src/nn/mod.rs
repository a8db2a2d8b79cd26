//! A small reverse-mode neural-network engine.
//!
//! Every trainable block implements [`Differentiable`]: `forward` returns the
//! output together with whatever the block needs to differentiate it later,
//! and `backward` consumes that cache. Because the cache is a value returned
//! by `forward`, calling `backward` without a matching forward pass cannot be
//! expressed.
//!
//! Parameters are exchanged as flat `Vec<f64>` in a fixed per-block order, which
//! is what [`AdamState`] and [`grad_check`] operate on.

pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gemm;
pub mod gradcheck;
pub mod init;
pub mod tensor;
mod fastmath;

pub use activation::{activate, activate_complex, Activation, ActivationKind, ComplexGabor};
pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, LayerRecord};
pub use conv::ConvLayer;
pub use dense::DenseLayer;
pub use gradcheck::{grad_check, GradCheckReport};
pub use init::{init_layer, InitScheme};
pub use tensor::{ComplexTensor, Tensor};

use crate::error::Result;

/// Gradients produced by a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Loss gradient for each parameter, in [`Differentiable::params`] order.
    pub params: Vec<f64>,
    /// Loss gradient with respect to the block input.
    pub input: Tensor,
}

pub trait Differentiable {
    type Cache;

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Self::Cache)>;

    fn backward(&self, cache: &Self::Cache, grad_out: &Tensor) -> Result<Gradients>;

    fn param_count(&self) -> usize;

    fn params(&self) -> Vec<f64>;

    fn set_params(&mut self, params: &[f64]) -> Result<()>;
}

/// Copies `src` into consecutive tensors, checking the total length.
pub(crate) fn scatter_params(src: &[f64], dst: &mut [&mut Tensor]) -> Result<()> {
    let total: usize = dst.iter().map(|t| t.len()).sum();
    if total != src.len() {
        return Err(crate::Error::ShapeMismatch(format!(
            "{} parameters supplied, {total} expected",
            src.len()
        )));
    }
    let mut offset = 0;
    for t in dst.iter_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&src[offset..offset + n]);
        offset += n;
    }
    Ok(())
}
