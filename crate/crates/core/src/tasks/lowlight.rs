//! Low-light enhancement: synthetic digital gains in the linear state,
//! exposure fusion, and re-rendering.

use super::fusion::exposure_fusion;
use super::Linearizer;
use crate::cyclenet::CycleNet;
use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// The fixed digital gains simulating a multi-exposure bracket.
pub const DEFAULT_GAINS: [f64; 4] = [0.1, 1.4, 2.7, 4.0];

/// Per-gain scalar multiples of a linear image; no clamping (XYZ state).
pub fn multi_gain(xyz: &PlanarImage, gains: &[f64]) -> Result<Vec<PlanarImage>> {
    if gains.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidInput(format!("gains must be positive, got {gains:?}")));
    }
    Ok(gains.iter().map(|&g| xyz.scaled(g)).collect())
}

/// Low-light enhancement through an arbitrary linearizer: unprocess, apply
/// the gain bracket, clamp each exposure to [0, 1] for fusion, fuse, and
/// re-render. The re-rendering keeps the forward local residual layer, so
/// detail restored by fusion survives the trip back to sRGB.
pub fn enhance_lowlight_with(
    linearizer: Linearizer<'_>,
    srgb: &PlanarImage,
    gains: &[f64],
) -> Result<PlanarImage> {
    let xyz = linearizer.unprocess(srgb)?;
    let exposures: Vec<PlanarImage> = multi_gain(&xyz, gains)?
        .into_iter()
        .map(|img| img.clamped(0.0, 1.0))
        .collect();
    let fused = exposure_fusion(&exposures)?;
    linearizer.render(&fused)
}

/// [`enhance_lowlight_with`] through a trained cycle model.
pub fn enhance_lowlight(net: &CycleNet, srgb: &PlanarImage, gains: &[f64]) -> Result<PlanarImage> {
    enhance_lowlight_with(Linearizer::Learned(net), srgb, gains)
}
