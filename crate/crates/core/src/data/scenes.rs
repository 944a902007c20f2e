//! Procedural linear-XYZ scenes and synthetic dataset generation.
//!
//! Scenes are smooth corner gradients overlaid with soft-edged colored
//! ellipses and two scales of texture noise, all seed-deterministic. They
//! stand in for photographic content when manufacturing training pairs with
//! the ISP simulator.

use std::path::Path;

use rand::Rng;

use super::io::save_image;
use super::isp::{simulate_isp, IspParams};
use super::pairs::{split_pairs, ImagePair, PairSet};
use super::{stream_rng, stream_seed};
use crate::error::Result;
use crate::raster::PlanarImage;

/// Smoothstep falloff for shape edges.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// A seed-deterministic linear XYZ scene.
///
/// Content is painted in linear RGB in [0.005, 0.95] and then carried into
/// XYZ by the colorimetric matrix, so the channels stay correlated the way
/// physical tristimulus data is and downstream color matrices rarely clip.
pub fn synth_scene_xyz(height: usize, width: usize, seed: u64) -> PlanarImage {
    let rgb = synth_scene_rgb(height, width, seed);
    let m = crate::colorspace::srgb_to_xyz_matrix();
    rgb.map_pixels(|px| {
        let v = *m * nalgebra::Vector3::new(px[0], px[1], px[2]);
        [v[0], v[1], v[2]]
    })
}

fn synth_scene_rgb(height: usize, width: usize, seed: u64) -> PlanarImage {
    let mut rng = stream_rng(&[seed, 0x5ce9e]);
    let mut img = PlanarImage::zeros(height, width);

    // Bilinear blend of four random corner colors.
    let corners: Vec<[f64; 3]> = (0..4)
        .map(|_| [rng.gen_range(0.05..0.75), rng.gen_range(0.05..0.75), rng.gen_range(0.05..0.75)])
        .collect();
    for y in 0..height {
        let fy = if height > 1 { y as f64 / (height - 1) as f64 } else { 0.0 };
        for x in 0..width {
            let fx = if width > 1 { x as f64 / (width - 1) as f64 } else { 0.0 };
            let mut px = [0.0; 3];
            for c in 0..3 {
                let top = corners[0][c] * (1.0 - fx) + corners[1][c] * fx;
                let bot = corners[2][c] * (1.0 - fx) + corners[3][c] * fx;
                px[c] = top * (1.0 - fy) + bot * fy;
            }
            img.set_pixel(y, x, px);
        }
    }

    // Soft-edged ellipses.
    let shapes = rng.gen_range(5..10);
    for _ in 0..shapes {
        let cy = rng.gen_range(0.0..height as f64);
        let cx = rng.gen_range(0.0..width as f64);
        let ry = rng.gen_range(0.08..0.45) * height as f64;
        let rx = rng.gen_range(0.08..0.45) * width as f64;
        let color = [rng.gen_range(0.02..0.85), rng.gen_range(0.02..0.85), rng.gen_range(0.02..0.85)];
        let opacity = rng.gen_range(0.5..1.0);
        let edge = rng.gen_range(0.05..0.3);
        for y in 0..height {
            for x in 0..width {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                let d = (dy * dy + dx * dx).sqrt();
                if d < 1.0 + edge {
                    let alpha = opacity * smoothstep((1.0 + edge - d) / edge);
                    let mut px = img.pixel(y, x);
                    for c in 0..3 {
                        px[c] = px[c] * (1.0 - alpha) + color[c] * alpha;
                    }
                    img.set_pixel(y, x, px);
                }
            }
        }
    }

    // Low-frequency noise field plus fine grain.
    let coarse_h = (height / 8).max(2);
    let coarse_w = (width / 8).max(2);
    let mut coarse = PlanarImage::zeros(coarse_h, coarse_w);
    for v in coarse.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let coarse = coarse.resize_bilinear(height, width);
    let data = img.data_mut();
    for (i, v) in data.iter_mut().enumerate() {
        *v += 0.03 * coarse.data()[i] + 0.008 * rng.gen_range(-1.0..1.0);
    }

    img.clamped(0.005, 0.95)
}

/// Scene + rendering for dataset index `i`.
pub fn synth_pair(i: usize, seed: u64, height: usize, width: usize, isp: &IspParams) -> Result<ImagePair> {
    let xyz = synth_scene_xyz(height, width, stream_seed(&[seed, i as u64, 0x9A12]));
    let srgb = simulate_isp(&xyz, isp)?;
    ImagePair::new(srgb, xyz)
}

/// Writes `count` pairs (PNG sRGB, PFM XYZ) plus `manifest.csv` under `dir`,
/// split with the given fractions. Returns the manifest.
pub fn generate_dataset(
    dir: &Path,
    count: usize,
    height: usize,
    width: usize,
    isp: &IspParams,
    seed: u64,
    fractions: (f64, f64, f64),
) -> Result<PairSet> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count {
        let pair = synth_pair(i, seed, height, width, isp)?;
        let srgb_path = dir.join(format!("pair_{i:04}_srgb.png"));
        let xyz_path = dir.join(format!("pair_{i:04}_xyz.pfm"));
        save_image(&pair.srgb, &srgb_path)?;
        save_image(&pair.xyz, &xyz_path)?;
        paths.push((srgb_path, xyz_path));
    }
    let set = split_pairs(paths, fractions, stream_seed(&[seed, 0x5b11]))?;
    set.write_manifest(&dir.join("manifest.csv"))?;
    Ok(set)
}
