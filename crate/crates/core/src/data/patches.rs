//! Random patch extraction with paired geometric augmentation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::pairs::ImagePair;
use super::stream_rng;
use crate::error::{Error, Result};

/// One random patch pair; identical window, rescale and reflections on both
/// images. Augmentation draws, in order: scale factor in [0.75, 1.25], crop
/// origin, horizontal flip, vertical flip.
pub fn sample_patch(pair: &ImagePair, size: usize, rng: &mut ChaCha8Rng, augment: bool) -> Result<ImagePair> {
    let (h, w) = (pair.srgb.height(), pair.srgb.width());
    if h < size || w < size || size == 0 {
        return Err(Error::Config(format!(
            "patch size {size} does not fit a {h}x{w} image"
        )));
    }
    let src = if augment {
        let scale: f64 = rng.gen_range(0.75..=1.25);
        ((size as f64 * scale).round() as usize).clamp(1, h.min(w))
    } else {
        size
    };
    let top = rng.gen_range(0..=h - src);
    let left = rng.gen_range(0..=w - src);
    let mut srgb = pair.srgb.crop(top, left, src, src)?;
    let mut xyz = pair.xyz.crop(top, left, src, src)?;
    if src != size {
        srgb = srgb.resize_bilinear(size, size);
        xyz = xyz.resize_bilinear(size, size);
    }
    if augment {
        if rng.gen_bool(0.5) {
            srgb = srgb.flip_horizontal();
            xyz = xyz.flip_horizontal();
        }
        if rng.gen_bool(0.5) {
            srgb = srgb.flip_vertical();
            xyz = xyz.flip_vertical();
        }
    }
    ImagePair::new(srgb, xyz)
}

/// `count` patch pairs, deterministic per seed.
pub fn extract_patches(
    pair: &ImagePair,
    size: usize,
    count: usize,
    seed: u64,
    augment: bool,
) -> Result<Vec<ImagePair>> {
    let (h, w) = (pair.srgb.height(), pair.srgb.width());
    if h < size || w < size || size == 0 {
        return Err(Error::Config(format!(
            "patch size {size} does not fit a {h}x{w} image"
        )));
    }
    let mut rng = stream_rng(&[seed, 0x9A7C]);
    (0..count).map(|_| sample_patch(pair, size, &mut rng, augment)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PlanarImage;
    use rand::SeedableRng;

    fn checker_pair(h: usize, w: usize) -> ImagePair {
        let mut srgb = PlanarImage::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = ((x + y) % 7) as f64 / 7.0;
                srgb.set_pixel(y, x, [v, 1.0 - v, v * v]);
            }
        }
        let xyz = srgb.scaled(0.5);
        ImagePair::new(srgb, xyz).unwrap()
    }

    #[test]
    fn count_zero_gives_empty_list() {
        let pair = checker_pair(16, 16);
        assert!(extract_patches(&pair, 8, 0, 1, true).unwrap().is_empty());
    }

    #[test]
    fn same_seed_same_patches() {
        let pair = checker_pair(24, 24);
        let a = extract_patches(&pair, 8, 5, 9, true).unwrap();
        let b = extract_patches(&pair, 8, 5, 9, true).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.srgb.data(), q.srgb.data());
            assert_eq!(p.xyz.data(), q.xyz.data());
        }
    }

    #[test]
    fn windows_are_applied_identically() {
        // xyz is srgb * 0.5; the relation must survive crop + augmentation.
        let pair = checker_pair(32, 32);
        for p in extract_patches(&pair, 12, 8, 3, true).unwrap() {
            for (s, x) in p.srgb.data().iter().zip(p.xyz.data()) {
                assert!((s * 0.5 - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_image_patches_are_constant() {
        let srgb = PlanarImage::filled(20, 20, [0.3, 0.4, 0.5]);
        let xyz = srgb.clone();
        let pair = ImagePair::new(srgb, xyz).unwrap();
        for p in extract_patches(&pair, 8, 4, 7, true).unwrap() {
            for px in p.srgb.data().chunks_exact(3) {
                assert!((px[0] - 0.3).abs() < 1e-12);
                assert!((px[1] - 0.4).abs() < 1e-12);
                assert!((px[2] - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn undersized_image_is_a_config_error() {
        let pair = checker_pair(6, 6);
        assert!(matches!(extract_patches(&pair, 8, 1, 0, false), Err(Error::Config(_))));
    }

    #[test]
    fn unaugmented_patch_is_a_plain_crop() {
        let pair = checker_pair(16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = sample_patch(&pair, 8, &mut rng, false).unwrap();
        assert_eq!(p.srgb.height(), 8);
        // Every patch pixel appears in the source.
        let mut found = false;
        'outer: for y in 0..=8 {
            for x in 0..=8 {
                let c = pair.srgb.crop(y, x, 8, 8).unwrap();
                if c.data() == p.srgb.data() {
                    found = true;
                    break 'outer;
                }
            }
        }
        assert!(found);
    }
}
