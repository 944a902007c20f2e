//! Synthetic ISP: manufactures display-referred sRGB renderings from linear
//! XYZ scenes.
//!
//! The pipeline mirrors a consumer camera's split into a global stage (color
//! matrix, per-channel quadratic tone term, gamma encoding) and a local
//! stage (vignette falloff plus an unsharp-style local-contrast boost).

use nalgebra::Matrix3;
use rand::Rng;

use super::stream_rng;
use crate::colorspace::{gamma_scalar, srgb_piecewise, xyz_to_srgb_matrix, GammaDirection};
use crate::error::{Error, Result};
use crate::raster::PlanarImage;

#[derive(Debug, Clone, PartialEq)]
pub struct IspParams {
    /// XYZ -> linear display RGB, applied before the tone nonlinearity.
    pub color_matrix: [[f64; 3]; 3],
    pub gamma: f64,
    /// Strength of the per-channel quadratic tone term.
    pub quad_coeff: f64,
    /// Radial falloff: gain 1 - strength * r^2, r = 1 at the corners.
    pub vignette_strength: f64,
    /// Unsharp-style boost: v + strength * (v - blur(v)).
    pub local_contrast: f64,
    /// Use the piecewise sRGB curve instead of the pure power curve.
    pub srgb_curve: bool,
    pub seed: u64,
}

impl IspParams {
    /// Identity pipeline: output = clamp(xyz, 0, 1).
    pub fn identity() -> Self {
        Self {
            color_matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            gamma: 1.0,
            quad_coeff: 0.0,
            vignette_strength: 0.0,
            local_contrast: 0.0,
            srgb_curve: false,
            seed: 0,
        }
    }

    /// The benchmark camera: 2.2 gamma, a seeded nonsingular perturbation of
    /// the standard XYZ->sRGB matrix, quadratic tone 0.05, vignette 0.15 and
    /// local contrast 0.1.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            color_matrix: random_color_matrix(seed),
            gamma: 2.2,
            quad_coeff: 0.05,
            vignette_strength: 0.15,
            local_contrast: 0.1,
            srgb_curve: false,
            seed,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.color_matrix[r][c])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        for (name, v) in [
            ("quad_coeff", self.quad_coeff),
            ("vignette_strength", self.vignette_strength),
            ("local_contrast", self.local_contrast),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.matrix().determinant().abs() < 1e-9 {
            return Err(Error::Config("color matrix is singular".into()));
        }
        Ok(())
    }
}

/// Seeded perturbation of the standard XYZ->sRGB matrix: M = S * (I + E)
/// with E uniform in [-0.2, 0.2], resampled until comfortably nonsingular.
fn random_color_matrix(seed: u64) -> [[f64; 3]; 3] {
    let std = xyz_to_srgb_matrix();
    let mut rng = stream_rng(&[seed, 0x15b]);
    loop {
        let e = Matrix3::from_fn(|_, _| rng.gen_range(-0.2..0.2));
        let m = std * (Matrix3::identity() + e);
        if m.determinant().abs() > 0.5 {
            let mut out = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    out[r][c] = m[(r, c)];
                }
            }
            return out;
        }
    }
}

/// 3x3 binomial blur with replicated borders; the base of the unsharp term.
pub(crate) fn gauss3_blur(img: &PlanarImage) -> PlanarImage {
    let (h, w) = (img.height(), img.width());
    let mut out = PlanarImage::zeros(h, w);
    let weights = [1.0, 2.0, 1.0];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (dy, wy) in (-1i64..=1).zip(weights) {
                for (dx, wx) in (-1i64..=1).zip(weights) {
                    let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let px = img.pixel(sy, sx);
                    for c in 0..3 {
                        acc[c] += wy * wx * px[c];
                    }
                }
            }
            out.set_pixel(y, x, [acc[0] / 16.0, acc[1] / 16.0, acc[2] / 16.0]);
        }
    }
    out
}

/// Renders a linear XYZ scene through the synthetic camera.
pub fn simulate_isp(xyz: &PlanarImage, p: &IspParams) -> Result<PlanarImage> {
    xyz.check_finite()?;
    p.validate()?;
    let m = p.matrix();

    // Global stage: matrix, quadratic tone term, gamma encoding.
    let mut out = xyz.map_pixels(|px| {
        let t = m * nalgebra::Vector3::new(px[0], px[1], px[2]);
        let mut v = [0.0; 3];
        for c in 0..3 {
            let u = t[c] + p.quad_coeff * t[c] * t[c];
            v[c] = if p.srgb_curve {
                srgb_piecewise(u, GammaDirection::Encode)
            } else {
                gamma_scalar(u, p.gamma, GammaDirection::Encode)
            };
        }
        v
    });

    // Local stage: vignette, then unsharp local contrast.
    if p.vignette_strength > 0.0 {
        let (h, w) = (out.height(), out.width());
        let cy = (h as f64 - 1.0) / 2.0;
        let cx = (w as f64 - 1.0) / 2.0;
        for y in 0..h {
            for x in 0..w {
                let dy = if cy > 0.0 { (y as f64 - cy) / cy } else { 0.0 };
                let dx = if cx > 0.0 { (x as f64 - cx) / cx } else { 0.0 };
                let r2 = (dy * dy + dx * dx) / 2.0;
                let gain = 1.0 - p.vignette_strength * r2;
                for c in 0..3 {
                    out.set(y, x, c, out.get(y, x, c) * gain);
                }
            }
        }
    }
    if p.local_contrast > 0.0 {
        let blur = gauss3_blur(&out);
        let lc = p.local_contrast;
        let data = out.data_mut();
        for (v, b) in data.iter_mut().zip(blur.data()) {
            *v += lc * (*v - b);
        }
    }
    Ok(out.clamped(0.0, 1.0))
}
