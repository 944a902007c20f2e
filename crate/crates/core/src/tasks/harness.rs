//! Blur and denoise round-trip studies: degrade in the linear state, render
//! through the synthetic ISP, then restore along two routes and compare.
//!
//! Route (a) applies the restoration operator directly to the rendered sRGB
//! image; route (b) linearizes first, restores in the linear state, and
//! re-renders. Both scores are PSNR against the clean rendering, so the
//! reports isolate what the working state contributes.

use rand_distr::{Distribution, Normal};

use super::wiener::{circular_convolve, wiener_deconvolve, Kernel2D};
use super::Linearizer;
use crate::data::{simulate_isp, stream_rng, IspParams};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::raster::PlanarImage;

/// PSNR of the direct-sRGB route and the linearize-first route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessReport {
    pub psnr_srgb_path: f64,
    pub psnr_linear_path: f64,
}

/// Separable Gaussian smoothing with replicated borders; sigma 0 is the
/// identity. The stand-in denoiser both routes share.
pub fn gaussian_blur(img: &PlanarImage, sigma: f64) -> PlanarImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for d in -radius..=radius {
        let v = (-(d as f64 * d as f64) / (2.0 * sigma * sigma)).exp();
        taps.push(v);
        sum += v;
    }
    taps.iter_mut().for_each(|v| *v /= sum);

    let (h, w) = (img.height(), img.width());
    let mut tmp = PlanarImage::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, t) in taps.iter().enumerate() {
                let sx = (x as i64 + i as i64 - radius).clamp(0, w as i64 - 1) as usize;
                let px = img.pixel(y, sx);
                for c in 0..3 {
                    acc[c] += t * px[c];
                }
            }
            tmp.set_pixel(y, x, acc);
        }
    }
    let mut out = PlanarImage::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (i, t) in taps.iter().enumerate() {
                let sy = (y as i64 + i as i64 - radius).clamp(0, h as i64 - 1) as usize;
                let px = tmp.pixel(sy, x);
                for c in 0..3 {
                    acc[c] += t * px[c];
                }
            }
            out.set_pixel(y, x, acc);
        }
    }
    out
}

/// Motion-blur study. The scene blurs in the linear state (circular
/// convolution), renders through the ISP, and is deblurred by Wiener
/// deconvolution (a) directly on sRGB and (b) on the linearized image with
/// re-rendering. Scores are PSNR against the sharp rendering.
pub fn blur_harness(
    scene_xyz: &PlanarImage,
    kernel: &Kernel2D,
    isp: &IspParams,
    snr: f64,
    linearizer: Linearizer<'_>,
) -> Result<HarnessReport> {
    let reference = simulate_isp(scene_xyz, isp)?;
    let blurred_xyz = circular_convolve(scene_xyz, kernel)?;
    let observed = simulate_isp(&blurred_xyz, isp)?;

    // (a) Deconvolve the rendered image as if it were linear.
    let srgb_deblurred = wiener_deconvolve(&observed, kernel, snr)?.clamped(0.0, 1.0);
    let psnr_srgb_path = psnr(&srgb_deblurred, &reference, 1.0)?;

    // (b) Linearize, deconvolve where the blur actually happened, re-render.
    let linear = linearizer.unprocess(&observed)?;
    let linear_deblurred =
        wiener_deconvolve(&linear, kernel, snr)?.clamped(0.0, f64::INFINITY);
    let re_rendered = linearizer.render(&linear_deblurred)?;
    let psnr_linear_path = psnr(&re_rendered, &reference, 1.0)?;

    Ok(HarnessReport { psnr_srgb_path, psnr_linear_path })
}

/// Denoising study. Gaussian noise of standard deviation `sigma` is added
/// in the linear state before rendering; both routes then share one
/// Gaussian smoothing strength.
pub fn denoise_harness(
    scene_xyz: &PlanarImage,
    isp: &IspParams,
    sigma: f64,
    denoiser_strength: f64,
    seed: u64,
    linearizer: Linearizer<'_>,
) -> Result<HarnessReport> {
    if sigma < 0.0 {
        return Err(Error::InvalidInput(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    let reference = simulate_isp(scene_xyz, isp)?;

    let noisy_xyz = if sigma > 0.0 {
        let mut rng = stream_rng(&[seed, 0xD0]);
        let normal = Normal::new(0.0, sigma).map_err(|_| Error::InvalidInput("bad sigma".into()))?;
        let mut noisy = scene_xyz.clone();
        for v in noisy.data_mut() {
            *v = (*v + normal.sample(&mut rng)).max(0.0);
        }
        noisy
    } else {
        scene_xyz.clone()
    };
    let observed = simulate_isp(&noisy_xyz, isp)?;

    // (a) Smooth the rendered image directly.
    let srgb_denoised = gaussian_blur(&observed, denoiser_strength);
    let psnr_srgb_path = psnr(&srgb_denoised, &reference, 1.0)?;

    // (b) Linearize, smooth where the noise is stationary, re-render.
    let linear = linearizer.unprocess(&observed)?;
    let linear_denoised = gaussian_blur(&linear, denoiser_strength).clamped(0.0, f64::INFINITY);
    let re_rendered = linearizer.render(&linear_denoised)?;
    let psnr_linear_path = psnr(&re_rendered, &reference, 1.0)?;

    Ok(HarnessReport { psnr_srgb_path, psnr_linear_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_scene_xyz;
    use crate::metrics::PSNR_CAP_DB;

    fn clean_isp() -> IspParams {
        // Gamma only: the standard linearizer inverts this exactly, so the
        // delta-kernel identity holds to numerical precision.
        let mut p = IspParams::identity();
        p.gamma = 2.2;
        p
    }

    #[test]
    fn delta_kernel_leaves_both_paths_at_the_reference() {
        let scene = synth_scene_xyz(24, 24, 1);
        let report = blur_harness(&scene, &Kernel2D::delta(), &clean_isp(), 1e9, Linearizer::Standard).unwrap();
        // PSNR >= 120 dB corresponds to max error well below 1e-6.
        assert!(report.psnr_srgb_path >= 120.0, "{report:?}");
        assert!(report.psnr_linear_path >= 120.0, "{report:?}");
    }

    #[test]
    fn linear_path_wins_under_gamma() {
        let scene = synth_scene_xyz(48, 48, 2);
        let report = blur_harness(&scene, &Kernel2D::motion(7), &clean_isp(), 1e4, Linearizer::Standard).unwrap();
        assert!(
            report.psnr_linear_path > report.psnr_srgb_path,
            "expected linear to win: {report:?}"
        );
    }

    #[test]
    fn zero_sigma_with_zero_strength_is_lossless() {
        let scene = synth_scene_xyz(24, 24, 3);
        let report = denoise_harness(&scene, &clean_isp(), 0.0, 0.0, 0, Linearizer::Standard).unwrap();
        assert_eq!(report.psnr_srgb_path, PSNR_CAP_DB);
        assert!(report.psnr_linear_path >= 60.0, "{report:?}");
    }

    #[test]
    fn noise_degrades_monotonically() {
        let scene = synth_scene_xyz(32, 32, 4);
        let mut last = f64::INFINITY;
        for sigma in [0.01, 0.05, 0.1] {
            let r = denoise_harness(&scene, &clean_isp(), sigma, 1.0, 7, Linearizer::Standard).unwrap();
            assert!(r.psnr_srgb_path < last, "sigma {sigma}: {r:?} vs last {last}");
            last = r.psnr_srgb_path;
        }
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let scene = synth_scene_xyz(16, 16, 5);
        assert!(denoise_harness(&scene, &clean_isp(), -0.1, 1.0, 0, Linearizer::Standard).is_err());
    }
}
