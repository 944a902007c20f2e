//! Cycle framework for moving camera-rendered sRGB images back and forth to
//! the linear CIE XYZ state.
//!
//! The inverse pipeline decomposes an sRGB image into a small local residual
//! layer plus a globally processed layer, then maps the global layer to CIE
//! XYZ through a predicted 3x6 quadratic color transform. The forward pipeline
//! runs the same decomposition in reverse to re-render an (optionally edited)
//! XYZ image back to sRGB. Both directions are driven by four small
//! convolutional sub-networks trained end to end.
//!
//! Module map:
//! - [`raster`]: the `PlanarImage` sample grid shared by every stage
//! - [`colorspace`]: transfer curves, sRGB/XYZ matrices, chromatic adaptation
//! - [`polymap`]: the quadratic 3x6 global transform and its least-squares fit
//! - [`nn`]: minimal tensor/layer engine with reverse-mode gradients and Adam
//! - [`cyclenet`]: the four-sub-network cycle model, loss, and training loop
//! - [`data`]: image I/O, the synthetic ISP simulator, pairs/patches/splits
//! - [`metrics`]: PSNR, SSIM, quartile summaries, angular error
//! - [`tasks`]: low-light enhancement, raw calibration, haze/blur/denoise
//!   harnesses that compare working in the linear state vs. sRGB

pub mod colorspace;
pub mod cyclenet;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod polymap;
pub mod raster;
pub mod tasks;

pub use error::{Error, Result};
pub use raster::PlanarImage;
