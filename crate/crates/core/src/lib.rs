//! Super-resolution of single-channel gridded geophysical fields.
//!
//! Four method families share one [`GridField`] type:
//!
//! * bicubic interpolation ([`resample`]),
//! * a convolutional refinement network with residual blocks ([`srcnn`]),
//! * the same network trained adversarially ([`srgan`]),
//! * implicit neural representations with periodic activations ([`inr`]).
//!
//! Everything trains on the small reverse-mode engine in [`nn`] and is scored
//! with the metrics in [`metrics`]. The guide under `book/` walks through each
//! piece; its code listings are compiled and run as doc-tests of this crate.

pub mod datagen;
pub mod error;
pub mod grid;
pub mod inr;
pub mod metrics;
pub mod nn;
pub mod resample;
pub mod rng;
pub mod srcnn;
pub mod srgan;

pub use error::{Error, Result};
pub use grid::{denormalize, load_grid, normalize, render_heatmap, save_grid, GridField, NormStats};
pub use metrics::MetricReport;
pub use resample::{bicubic_upscale, box_downsample, ResampleFactor};

// The guide's listings run as doc-tests, one module per chapter so a failure
// points at its chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/resampling.md")]
    mod resampling {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/datagen.md")]
    mod datagen {}
    #[doc = include_str!("../../../book/src/srcnn.md")]
    mod srcnn {}
    #[doc = include_str!("../../../book/src/srgan.md")]
    mod srgan {}
    #[doc = include_str!("../../../book/src/inr.md")]
    mod inr {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
