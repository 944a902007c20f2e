//! Multi-exposure fusion: quality-weighted Laplacian-pyramid blending.
//!
//! Per-pixel weights combine contrast (|Laplacian| of luma), saturation
//! (channel standard deviation) and well-exposedness (Gaussian about 0.5,
//! sigma 0.2), normalized across the stack. Images blend level by level in
//! a Laplacian pyramid against Gaussian pyramids of the weights.

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

const W5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
const EXPOSEDNESS_SIGMA: f64 = 0.2;
const WEIGHT_FLOOR: f64 = 1e-12;

/// Halves each axis (rounding up) with the 5-tap binomial kernel,
/// replicated borders.
fn reduce(img: &PlanarImage) -> PlanarImage {
    let (h, w) = (img.height(), img.width());
    let (ho, wo) = ((h + 1) / 2, (w + 1) / 2);
    let mut out = PlanarImage::zeros(ho, wo);
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = [0.0; 3];
            for (m, wy) in W5.iter().enumerate() {
                let sy = (2 * y as i64 + m as i64 - 2).clamp(0, h as i64 - 1) as usize;
                for (n, wx) in W5.iter().enumerate() {
                    let sx = (2 * x as i64 + n as i64 - 2).clamp(0, w as i64 - 1) as usize;
                    let px = img.pixel(sy, sx);
                    for c in 0..3 {
                        acc[c] += wy * wx * px[c];
                    }
                }
            }
            out.set_pixel(y, x, acc);
        }
    }
    out
}

/// Doubles back to an explicit target size: zero insertion followed by the
/// same binomial kernel, scaled to preserve DC.
fn expand(img: &PlanarImage, th: usize, tw: usize) -> PlanarImage {
    let (h, w) = (img.height(), img.width());
    let mut out = PlanarImage::zeros(th, tw);
    for y in 0..th {
        for x in 0..tw {
            let mut acc = [0.0; 3];
            let mut wsum = 0.0;
            for (m, wy) in W5.iter().enumerate() {
                let ny = y as i64 + 2 - m as i64;
                if ny % 2 != 0 {
                    continue;
                }
                let sy = (ny / 2).clamp(0, h as i64 - 1) as usize;
                for (n, wx) in W5.iter().enumerate() {
                    let nx = x as i64 + 2 - n as i64;
                    if nx % 2 != 0 {
                        continue;
                    }
                    let sx = (nx / 2).clamp(0, w as i64 - 1) as usize;
                    let px = img.pixel(sy, sx);
                    let wgt = wy * wx;
                    for c in 0..3 {
                        acc[c] += wgt * px[c];
                    }
                    wsum += wgt;
                }
            }
            // Per-parity weight renormalization keeps flat fields flat.
            for c in acc.iter_mut() {
                *c /= wsum;
            }
            out.set_pixel(y, x, acc);
        }
    }
    out
}

fn gaussian_pyramid(img: &PlanarImage, levels: usize) -> Vec<PlanarImage> {
    let mut pyr = Vec::with_capacity(levels);
    pyr.push(img.clone());
    for _ in 1..levels {
        let next = reduce(pyr.last().unwrap());
        pyr.push(next);
    }
    pyr
}

/// Per-pixel fusion weight: contrast x saturation x well-exposedness.
fn quality_weights(img: &PlanarImage) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let luma = img.luma();
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let at = |yy: i64, xx: i64| -> f64 {
                let sy = yy.clamp(0, h as i64 - 1) as usize;
                let sx = xx.clamp(0, w as i64 - 1) as usize;
                luma[sy * w + sx]
            };
            let (yi, xi) = (y as i64, x as i64);
            let lap = (at(yi - 1, xi) + at(yi + 1, xi) + at(yi, xi - 1) + at(yi, xi + 1)
                - 4.0 * at(yi, xi))
                .abs();

            let px = img.pixel(y, x);
            let mean = (px[0] + px[1] + px[2]) / 3.0;
            let sat = (px.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();

            let mut expo = 1.0;
            for &v in &px {
                let d = v - 0.5;
                expo *= (-d * d / (2.0 * EXPOSEDNESS_SIGMA * EXPOSEDNESS_SIGMA)).exp();
            }
            out[y * w + x] = lap * sat * expo + WEIGHT_FLOOR;
        }
    }
    out
}

fn scalar_to_image(v: &[f64], h: usize, w: usize) -> PlanarImage {
    let mut data = Vec::with_capacity(v.len() * 3);
    for &s in v {
        data.extend_from_slice(&[s, s, s]);
    }
    PlanarImage::from_vec(h, w, data).expect("weight buffer matches image")
}

/// Fuses shape-matched exposures in [0, 1] into one well-exposed image.
/// Pyramid depth is floor(log2(min dim)) - 1.
pub fn exposure_fusion(images: &[PlanarImage]) -> Result<PlanarImage> {
    let first = images.first().ok_or_else(|| Error::InvalidInput("fusion of an empty stack".into()))?;
    for img in images {
        first.check_same_shape(img)?;
        img.check_finite()?;
    }
    let (h, w) = (first.height(), first.width());
    let levels = ((h.min(w) as f64).log2().floor() as usize).saturating_sub(1).max(1);

    // Normalized weight maps.
    let raw: Vec<Vec<f64>> = images.iter().map(quality_weights).collect();
    let mut norm = vec![vec![0.0; h * w]; images.len()];
    for i in 0..h * w {
        let total: f64 = raw.iter().map(|r| r[i]).sum();
        for (k, r) in raw.iter().enumerate() {
            norm[k][i] = r[i] / total;
        }
    }

    // Blend Laplacian levels of the images against Gaussian levels of the
    // weights.
    let mut blended: Vec<PlanarImage> = Vec::with_capacity(levels);
    for _ in 0..levels {
        blended.push(PlanarImage::zeros(1, 1)); // placeholders, sized below
    }
    for (k, img) in images.iter().enumerate() {
        let gp = gaussian_pyramid(img, levels);
        let wp = gaussian_pyramid(&scalar_to_image(&norm[k], h, w), levels);
        for l in 0..levels {
            let lap = if l + 1 < levels {
                let up = expand(&gp[l + 1], gp[l].height(), gp[l].width());
                gp[l].sub(&up)?
            } else {
                gp[l].clone()
            };
            let weighted = PlanarImage::from_vec(
                lap.height(),
                lap.width(),
                lap.data().iter().zip(wp[l].data()).map(|(v, wgt)| v * wgt).collect(),
            )?;
            if k == 0 {
                blended[l] = weighted;
            } else {
                blended[l] = blended[l].add(&weighted)?;
            }
        }
    }

    // Collapse.
    let mut acc = blended[levels - 1].clone();
    for l in (0..levels - 1).rev() {
        acc = blended[l].add(&expand(&acc, blended[l].height(), blended[l].width()))?;
    }
    Ok(acc.clamped(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> PlanarImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        PlanarImage::from_vec(h, w, data).unwrap()
    }

    #[test]
    fn single_image_round_trips() {
        let img = random_image(1, 33, 47); // odd sizes stress the pyramid
        let out = exposure_fusion(std::slice::from_ref(&img)).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_stack_round_trips() {
        let img = random_image(2, 24, 24);
        let out = exposure_fusion(&[img.clone(), img.clone(), img.clone()]).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn midtone_has_peak_exposedness() {
        let mid = PlanarImage::filled(1, 1, [0.5; 3]);
        let w_mid = quality_weights(&mid)[0];
        let dark = PlanarImage::filled(1, 1, [0.05; 3]);
        let w_dark = quality_weights(&dark)[0];
        // Constant images have zero contrast/saturation, so compare the
        // exposedness factor directly.
        let expo = |v: f64| {
            let d: f64 = v - 0.5;
            (-d * d / (2.0 * EXPOSEDNESS_SIGMA * EXPOSEDNESS_SIGMA)).exp().powi(3)
        };
        assert_eq!(expo(0.5), 1.0);
        assert!(expo(0.05) < 0.1);
        // Their raw weights only differ through the floor term here.
        assert!(w_mid >= w_dark);
    }

    #[test]
    fn fused_output_stays_near_input_envelope() {
        // A coherent exposure bracket of one scene, as fusion is used in
        // practice; white-noise inputs would exaggerate pyramid ringing.
        let scene = crate::data::synth_scene_xyz(32, 32, 3);
        let imgs: Vec<PlanarImage> = [0.3, 0.7, 1.4, 2.5]
            .iter()
            .map(|&g| scene.scaled(g).clamped(0.0, 1.0))
            .collect();
        let out = exposure_fusion(&imgs).unwrap();
        for i in 0..out.data().len() {
            let lo = imgs.iter().map(|im| im.data()[i]).fold(f64::INFINITY, f64::min);
            let hi = imgs.iter().map(|im| im.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            let v = out.data()[i];
            assert!(v >= lo - 0.05 && v <= hi + 0.05, "pixel {i}: {v} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn empty_and_mismatched_inputs_error() {
        assert!(exposure_fusion(&[]).is_err());
        let a = random_image(4, 16, 16);
        let b = random_image(5, 16, 17);
        assert!(exposure_fusion(&[a, b]).is_err());
    }

    #[test]
    fn well_exposed_regions_dominate() {
        // One underexposed and one well-exposed copy of the same scene; the
        // fused result should sit much closer to the well-exposed one.
        let scene = random_image(6, 32, 32).map(|v| 0.3 + 0.4 * v);
        let dark = scene.scaled(0.1);
        let out = exposure_fusion(&[dark.clone(), scene.clone()]).unwrap();
        let dist_scene: f64 =
            out.data().iter().zip(scene.data()).map(|(a, b)| (a - b).abs()).sum();
        let dist_dark: f64 = out.data().iter().zip(dark.data()).map(|(a, b)| (a - b).abs()).sum();
        assert!(dist_scene < dist_dark * 0.5);
    }
}
