//! Downstream harnesses that exploit the linear state: low-light
//! enhancement, XYZ->raw calibration with illuminant casts, and synthetic
//! haze/blur/noise round-trip studies comparing linear-domain restoration
//! against operating directly on sRGB.

mod calibrate;
mod fusion;
mod harness;
mod haze;
mod lowlight;
mod wiener;

pub use calibrate::{apply_illuminant, calibrate_xyz_to_raw, Illuminant, RawCalibration};
pub use fusion::exposure_fusion;
pub use harness::{blur_harness, denoise_harness, gaussian_blur, HarnessReport};
pub use haze::{haze_model, HazeDirection, Transmission};
pub use lowlight::{enhance_lowlight, enhance_lowlight_with, multi_gain, DEFAULT_GAINS};
pub use wiener::{circular_convolve, wiener_deconvolve, Kernel2D};

use crate::colorspace::{standard_baseline, BaselineDirection};
use crate::cyclenet::CycleNet;
use crate::error::Result;
use crate::raster::PlanarImage;

/// The linearization a harness routes through: the fixed 2.2-gamma
/// colorimetric baseline or a trained cycle model.
#[derive(Clone, Copy)]
pub enum Linearizer<'a> {
    Standard,
    Learned(&'a CycleNet),
}

impl Linearizer<'_> {
    pub fn unprocess(&self, srgb: &PlanarImage) -> Result<PlanarImage> {
        match self {
            Linearizer::Standard => standard_baseline(srgb, BaselineDirection::Unprocess),
            Linearizer::Learned(net) => Ok(net.unprocess(srgb)?.xyz),
        }
    }

    pub fn render(&self, xyz: &PlanarImage) -> Result<PlanarImage> {
        match self {
            Linearizer::Standard => standard_baseline(xyz, BaselineDirection::Render),
            Linearizer::Learned(net) => Ok(net.render(xyz)?.srgb()),
        }
    }
}
