//! Chart-based XYZ -> sensor-raw calibration and illuminant casts.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// Per-channel sensor response to the scene light source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Illuminant {
    pub gains: [f64; 3],
}

impl Illuminant {
    pub fn new(gains: [f64; 3]) -> Result<Self> {
        if gains.iter().all(|&g| g > 0.0) {
            Ok(Self { gains })
        } else {
            Err(Error::InvalidInput(format!("illuminant gains must be positive, got {gains:?}")))
        }
    }
}

/// Least-squares 3x3 map from reconstructed XYZ chart colors into a
/// white-balanced sensor space.
#[derive(Debug, Clone)]
pub struct RawCalibration {
    pub xyz_to_raw: [[f64; 3]; 3],
    /// The chart colors the fit consumed, kept for reporting.
    pub xyz_chart: Vec<[f64; 3]>,
    /// Root-mean-square residual over all chart components.
    pub residual: f64,
}

impl RawCalibration {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.xyz_to_raw[r][c])
    }

    /// Maps an XYZ image into the calibrated sensor space.
    pub fn apply(&self, xyz: &PlanarImage) -> PlanarImage {
        let m = self.matrix();
        xyz.map_pixels(|px| {
            let v = m * Vector3::new(px[0], px[1], px[2]);
            [v[0], v[1], v[2]]
        })
    }
}

/// Fits min_M sum ||M x - r||^2 over paired chart colors. Needs at least 3
/// non-coplanar XYZ colors; coplanar charts are a rank error naming the
/// dead direction.
pub fn calibrate_xyz_to_raw(xyz_chart: &[[f64; 3]], raw_chart: &[[f64; 3]]) -> Result<RawCalibration> {
    if xyz_chart.len() != raw_chart.len() || xyz_chart.len() < 3 {
        return Err(Error::Config(format!(
            "calibration needs >= 3 paired colors, got {} and {}",
            xyz_chart.len(),
            raw_chart.len()
        )));
    }
    let mut gram = Matrix3::<f64>::zeros();
    let mut cross = Matrix3::<f64>::zeros(); // sum r x^T
    for (x, r) in xyz_chart.iter().zip(raw_chart) {
        for a in 0..3 {
            for b in 0..3 {
                gram[(a, b)] += x[a] * x[b];
                cross[(a, b)] += r[a] * x[b];
            }
        }
    }

    let eigen = SymmetricEigen::new(gram);
    let max_eig = eigen.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    for (i, &ev) in eigen.eigenvalues.iter().enumerate() {
        if ev <= max_eig.max(1.0) * 1e-12 {
            let null = eigen.eigenvectors.column(i);
            let dim = null
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(k, _)| k)
                .unwrap_or(0);
            return Err(Error::RankDeficient { dim, term: ["X", "Y", "Z"][dim] });
        }
    }

    let gram_inv = gram.try_inverse().expect("checked full rank above");
    let m = cross * gram_inv;

    let mut ss = 0.0;
    for (x, r) in xyz_chart.iter().zip(raw_chart) {
        let pred = m * Vector3::new(x[0], x[1], x[2]);
        for c in 0..3 {
            let d = pred[c] - r[c];
            ss += d * d;
        }
    }
    let residual = (ss / (3.0 * xyz_chart.len() as f64)).sqrt();

    let mut xyz_to_raw = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            xyz_to_raw[r][c] = m[(r, c)];
        }
    }
    Ok(RawCalibration { xyz_to_raw, xyz_chart: xyz_chart.to_vec(), residual })
}

/// Diagonal (von Kries) illuminant cast in sensor space: per-channel
/// multiplication by the illuminant gains.
pub fn apply_illuminant(raw_wb: &PlanarImage, l: &Illuminant) -> PlanarImage {
    raw_wb.map_pixels(|px| [px[0] * l.gains[0], px[1] * l.gains[1], px[2] * l.gains[2]])
}
