//! The quadratic global color transform.
//!
//! Pixels expand from [R, G, B] to [R, G, B, R^2, G^2, B^2]; a 3x6 matrix
//! maps the expanded pixel back to three channels. This captures global,
//! spatially uniform processing such as color matrices plus a smooth tone
//! nonlinearity. `fit_poly` solves the least-squares matrix in closed form,
//! serving as the deterministic oracle for the global stage the networks
//! predict.

use std::fmt::Write as _;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// Number of terms in the pixelwise expansion.
pub const PHI_TERMS: usize = 6;

/// Basis-term names, indexed like the expansion.
pub const PHI_TERM_NAMES: [&str; PHI_TERMS] = ["R", "G", "B", "R^2", "G^2", "B^2"];

/// Largest per-axis sample count used when fitting; mirrors the networks'
/// subsampling budget and bounds the cost of the normal equations.
pub const FIT_GRID_LIMIT: usize = 128;

/// A 3x6 global transform acting on the quadratic pixel expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    entries: [[f64; PHI_TERMS]; 3],
}

impl PolyMatrix {
    pub fn new(entries: [[f64; PHI_TERMS]; 3]) -> Self {
        Self { entries }
    }

    /// [I3 | 0]: the transform that reproduces its input.
    pub fn identity() -> Self {
        let mut entries = [[0.0; PHI_TERMS]; 3];
        for c in 0..3 {
            entries[c][c] = 1.0;
        }
        Self { entries }
    }

    pub fn zero() -> Self {
        Self { entries: [[0.0; PHI_TERMS]; 3] }
    }

    /// Row-major flattening of the 18 entries.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 18 {
            return Err(Error::shape("18 entries", format!("{}", flat.len())));
        }
        let mut entries = [[0.0; PHI_TERMS]; 3];
        for c in 0..3 {
            entries[c].copy_from_slice(&flat[c * PHI_TERMS..(c + 1) * PHI_TERMS]);
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[[f64; PHI_TERMS]; 3] {
        &self.entries
    }

    #[inline]
    pub fn row(&self, c: usize) -> &[f64; PHI_TERMS] {
        &self.entries[c]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for c in 0..3 {
            for k in 0..PHI_TERMS {
                m = m.max((self.entries[c][k] - other.entries[c][k]).abs());
            }
        }
        m
    }

    /// Plain-text form: 3 lines of 6 decimal values, locale-independent.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for row in &self.entries {
            let mut first = true;
            for v in row {
                if !first {
                    s.push(' ');
                }
                // 17 significant digits round-trip f64 exactly.
                write!(s, "{v:.17e}").unwrap();
                first = false;
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = [[0.0; PHI_TERMS]; 3];
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "poly matrix text must have 3 rows, got {}",
                rows.len()
            )));
        }
        for (c, line) in rows.iter().enumerate() {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != PHI_TERMS {
                return Err(Error::InvalidInput(format!(
                    "poly matrix row {c} must have {PHI_TERMS} values, got {}",
                    vals.len()
                )));
            }
            for (k, v) in vals.iter().enumerate() {
                entries[c][k] = v
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad matrix entry {v:?}")))?;
            }
        }
        Ok(Self { entries })
    }
}

/// Quadratic expansion of one pixel.
#[inline]
pub fn phi_pixel(px: [f64; 3]) -> [f64; PHI_TERMS] {
    [px[0], px[1], px[2], px[0] * px[0], px[1] * px[1], px[2] * px[2]]
}

/// Expands an image into the 6 x n sample matrix, row-major: `out[k][i]` is
/// basis term k of pixel i, pixels in row-major order.
pub fn expand_phi(img: &PlanarImage) -> Vec<Vec<f64>> {
    let n = img.pixel_count();
    let mut out = vec![vec![0.0; n]; PHI_TERMS];
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        let phi = phi_pixel([px[0], px[1], px[2]]);
        for k in 0..PHI_TERMS {
            out[k][i] = phi[k];
        }
    }
    out
}

/// Applies the 3x6 transform pixelwise and reshapes back to image layout.
/// The output is not clamped; intermediate states may leave [0, 1].
pub fn apply_poly(m: &PolyMatrix, img: &PlanarImage) -> PlanarImage {
    img.map_pixels(|px| {
        let phi = phi_pixel(px);
        let mut out = [0.0; 3];
        for c in 0..3 {
            let row = m.row(c);
            let mut acc = 0.0;
            for k in 0..PHI_TERMS {
                acc += row[k] * phi[k];
            }
            out[c] = acc;
        }
        out
    })
}

/// Uniform inclusive-grid pixel indices with at most `limit` samples per axis.
fn grid_indices(extent: usize, limit: usize) -> Vec<usize> {
    if extent <= limit {
        return (0..extent).collect();
    }
    (0..limit)
        .map(|i| ((i as f64) * (extent - 1) as f64 / (limit - 1) as f64).round() as usize)
        .collect()
}

/// Closed-form least-squares fit of the 3x6 transform mapping `src` to `dst`.
///
/// Minimizes sum ||psi(M phi(src)) - dst||^2 + ridge ||M||^2 via the normal
/// equations: one shared 6x6 Gram matrix, three independent right-hand
/// sides (the output channels are independent rows of M). Images larger
/// than [`FIT_GRID_LIMIT`] per axis are subsampled on a uniform grid first.
///
/// With `ridge = 0`, a singular Gram matrix yields a rank-deficiency error
/// naming the basis term that carries no independent information.
pub fn fit_poly(src: &[&PlanarImage], dst: &[&PlanarImage], ridge: f64) -> Result<PolyMatrix> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(Error::Config(format!(
            "fit_poly needs matched nonempty image lists, got {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if ridge < 0.0 {
        return Err(Error::Config(format!("ridge must be nonnegative, got {ridge}")));
    }

    let mut gram = Matrix6::<f64>::zeros();
    let mut rhs = [Vector6::<f64>::zeros(); 3];
    let mut total = 0usize;

    for (s, d) in src.iter().zip(dst) {
        s.check_same_shape(d)?;
        let ys = grid_indices(s.height(), FIT_GRID_LIMIT);
        let xs = grid_indices(s.width(), FIT_GRID_LIMIT);
        for &y in &ys {
            for &x in &xs {
                let phi = phi_pixel(s.pixel(y, x));
                let target = d.pixel(y, x);
                for a in 0..PHI_TERMS {
                    for b in a..PHI_TERMS {
                        gram[(a, b)] += phi[a] * phi[b];
                    }
                    for c in 0..3 {
                        rhs[c][a] += phi[a] * target[c];
                    }
                }
                total += 1;
            }
        }
    }
    if total < PHI_TERMS {
        return Err(Error::Config(format!(
            "fit_poly needs at least {PHI_TERMS} samples, got {total}"
        )));
    }
    // Mirror the upper triangle.
    for a in 0..PHI_TERMS {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    if ridge == 0.0 {
        check_full_rank(&gram)?;
    } else {
        for k in 0..PHI_TERMS {
            gram[(k, k)] += ridge;
        }
    }

    let chol = match gram.cholesky() {
        Some(c) => c,
        None => {
            check_full_rank(&gram)?;
            return Err(Error::Config("normal equations are not positive definite".into()));
        }
    };

    let mut entries = [[0.0; PHI_TERMS]; 3];
    for c in 0..3 {
        let sol = chol.solve(&rhs[c]);
        for k in 0..PHI_TERMS {
            entries[c][k] = sol[k];
        }
    }
    Ok(PolyMatrix::new(entries))
}

/// Detects (near-)singular Gram matrices and names the deficient basis term
/// as the dominant component of the near-null eigenvector.
fn check_full_rank(gram: &Matrix6<f64>) -> Result<()> {
    let eigen = SymmetricEigen::new(*gram);
    let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_eig.max(1.0) * 1e-12;
    let mut worst: Option<(usize, f64)> = None;
    for (i, &ev) in eigen.eigenvalues.iter().enumerate() {
        if ev <= tol && worst.map_or(true, |(_, w)| ev < w) {
            worst = Some((i, ev));
        }
    }
    if let Some((i, _)) = worst {
        let null_vec = eigen.eigenvectors.column(i);
        let dim = null_vec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        return Err(Error::RankDeficient { dim, term: PHI_TERM_NAMES[dim] });
    }
    Ok(())
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

    fn random_matrix(seed: u64) -> PolyMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = [[0.0; PHI_TERMS]; 3];
        for row in &mut e {
            for v in row.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        PolyMatrix::new(e)
    }

    #[test]
    fn phi_of_sample_pixel() {
        assert_eq!(phi_pixel([0.5, 0.2, 0.1]), [0.5, 0.2, 0.1, 0.25, 0.04000000000000001, 0.010000000000000002]);
        assert_eq!(phi_pixel([0.0; 3]), [0.0; 6]);
        assert_eq!(phi_pixel([1.0; 3]), [1.0; 6]);
    }

    #[test]
    fn expand_phi_layout() {
        let img = PlanarImage::from_vec(1, 2, vec![0.5, 0.2, 0.1, 1.0, 0.0, 1.0]).unwrap();
        let phi = expand_phi(&img);
        assert_eq!(phi.len(), 6);
        assert_eq!(phi[0], vec![0.5, 1.0]);
        assert_eq!(phi[3], vec![0.25, 1.0]);
        assert_eq!(phi[4], vec![0.04000000000000001, 0.0]);
    }

    #[test]
    fn identity_matrix_reproduces_input() {
        let img = random_image(1, 4, 5);
        let out = apply_poly(&PolyMatrix::identity(), &img);
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn zero_matrix_gives_zero_image() {
        let img = random_image(2, 3, 3);
        let out = apply_poly(&PolyMatrix::zero(), &img);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_row_picks_squared_term() {
        let mut m = PolyMatrix::zero();
        let mut e = *m.entries();
        e[0][3] = 1.0;
        m = PolyMatrix::new(e);
        let img = PlanarImage::filled(1, 1, [0.5, 0.2, 0.1]);
        let out = apply_poly(&m, &img);
        assert!((out.get(0, 0, 0) - 0.25).abs() < 1e-15);
    }

    /// Brute-force per-pixel oracle equivalent of apply_poly.
    fn apply_poly_bruteforce(m: &PolyMatrix, img: &PlanarImage) -> PlanarImage {
        let mut out = PlanarImage::zeros(img.height(), img.width());
        for y in 0..img.height() {
            for x in 0..img.width() {
                let [r, g, b] = img.pixel(y, x);
                let basis = [r, g, b, r * r, g * g, b * b];
                for c in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..6 {
                        acc += m.entries()[c][k] * basis[k];
                    }
                    out.set(y, x, c, acc);
                }
            }
        }
        out
    }

    #[test]
    fn apply_matches_bruteforce_oracle() {
        for seed in 0..5 {
            let img = random_image(seed, 8, 8);
            let m = random_matrix(seed + 100);
            let fast = apply_poly(&m, &img);
            let slow = apply_poly_bruteforce(&m, &img);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fit_recovers_ground_truth_matrix() {
        let truth = random_matrix(7);
        let src = random_image(8, 16, 16);
        let dst = apply_poly(&truth, &src);
        let fitted = fit_poly(&[&src], &[&dst], 0.0).unwrap();
        assert!(fitted.max_abs_diff(&truth) < 1e-8, "err = {}", fitted.max_abs_diff(&truth));
    }

    #[test]
    fn fit_identity_on_matched_pair() {
        let src = random_image(9, 12, 12);
        let fitted = fit_poly(&[&src], &[&src], 0.0).unwrap();
        let out = apply_poly(&fitted, &src);
        for (a, b) in out.data().iter().zip(src.data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_image_is_rank_deficient() {
        let src = PlanarImage::filled(4, 4, [0.3, 0.5, 0.7]);
        let dst = src.clone();
        let err = fit_poly(&[&src], &[&dst], 0.0);
        assert!(matches!(err, Err(Error::RankDeficient { .. })), "got {err:?}");
    }

    #[test]
    fn ridge_residual_monotone() {
        let truth = random_matrix(11);
        let src = random_image(12, 16, 16);
        let dst = apply_poly(&truth, &src);
        let mut last = f64::INFINITY;
        for ridge in [1e-2, 1e-4, 1e-8, 0.0] {
            let fitted = fit_poly(&[&src], &[&dst], ridge).unwrap();
            let out = apply_poly(&fitted, &src);
            let resid: f64 = out
                .data()
                .iter()
                .zip(dst.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(resid <= last + 1e-12, "residual grew: {resid} > {last}");
            last = resid;
        }
    }

    /// Best 3x3 linear fit, as the nested-model baseline.
    fn fit_linear_3x3(src: &PlanarImage, dst: &PlanarImage) -> nalgebra::Matrix3<f64> {
        let mut gram = nalgebra::Matrix3::<f64>::zeros();
        let mut rhs = nalgebra::Matrix3::<f64>::zeros();
        for (s, d) in src.data().chunks_exact(3).zip(dst.data().chunks_exact(3)) {
            for a in 0..3 {
                for b in 0..3 {
                    gram[(a, b)] += s[a] * s[b];
                    rhs[(a, b)] += s[a] * d[b];
                }
            }
        }
        let inv = gram.try_inverse().unwrap();
        (inv * rhs).transpose()
    }

    #[test]
    fn quadratic_fit_nests_linear_fit() {
        // A curved target: channelwise square plus cross-channel mixing.
        let src = random_image(13, 16, 16);
        let dst = src.map_pixels(|px| {
            [
                0.8 * px[0] * px[0] + 0.2 * px[1],
                0.5 * px[1] + 0.5 * px[1] * px[1],
                0.9 * px[2] * px[2] + 0.1 * px[0],
            ]
        });
        let quad = fit_poly(&[&src], &[&dst], 0.0).unwrap();
        let quad_out = apply_poly(&quad, &src);

        let lin = fit_linear_3x3(&src, &dst);
        let lin_out = src.map_pixels(|px| {
            let v = lin * nalgebra::Vector3::new(px[0], px[1], px[2]);
            [v[0], v[1], v[2]]
        });

        let mse = |a: &PlanarImage, b: &PlanarImage| -> f64 {
            a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
                / a.data().len() as f64
        };
        let psnr = |m: f64| -10.0 * m.log10();
        assert!(psnr(mse(&quad_out, &dst)) >= psnr(mse(&lin_out, &dst)));
    }

    #[test]
    fn text_round_trip() {
        let m = random_matrix(21);
        let text = m.to_text();
        let back = PolyMatrix::from_text(&text).unwrap();
        assert_eq!(m, back);
    }
}
