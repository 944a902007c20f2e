//! Deterministic color math: transfer curves, linear-sRGB <-> CIE XYZ
//! matrices, chromatic adaptation, and the standard 2.2-gamma baseline
//! linearization.
//!
//! All matrix constants are derived at double precision from the sRGB
//! primaries and illuminant chromaticities (CIE 1931 2-degree observer,
//! D65-relative scaling), so forward/inverse pairs agree to machine
//! precision.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// Transfer-curve direction: `Decode` maps display values to linear light
/// (v^gamma), `Encode` maps linear light to display values (v^(1/gamma)).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaDirection {
    Encode,
    Decode,
}

/// Direction of the colorimetric 3x3 matrix transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixDirection {
    SrgbToXyz,
    XyzToSrgb,
}

/// Direction of the composite baseline linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineDirection {
    /// sRGB -> XYZ: decode the 2.2 curve, then apply the colorimetric matrix.
    Unprocess,
    /// XYZ -> sRGB: apply the inverse matrix, then encode the 2.2 curve.
    Render,
}

/// Tristimulus white point with Y normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitePoint {
    pub xyz: [f64; 3],
}

impl WhitePoint {
    /// From CIE xy chromaticity, Y = 1.
    pub fn from_chromaticity(x: f64, y: f64) -> Self {
        assert!(y > 0.0, "chromaticity y must be positive");
        Self { xyz: [x / y, 1.0, (1.0 - x - y) / y] }
    }

    pub fn d65() -> Self {
        Self::from_chromaticity(0.3127, 0.3290)
    }

    pub fn d50() -> Self {
        Self::from_chromaticity(0.3457, 0.3585)
    }

    fn vector(&self) -> Vector3<f64> {
        Vector3::from_column_slice(&self.xyz)
    }
}

/// Published cone-response bases for von Kries style adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatKind {
    Bradford,
    Sharp,
    VonKries,
}

impl CatKind {
    /// The 3x3 XYZ -> cone-response matrix.
    pub fn matrix(self) -> Matrix3<f64> {
        match self {
            CatKind::Bradford => Matrix3::new(
                0.8951, 0.2664, -0.1614, //
                -0.7502, 1.7135, 0.0367, //
                0.0389, -0.0685, 1.0296,
            ),
            CatKind::Sharp => Matrix3::new(
                1.2694, -0.0988, -0.1706, //
                -0.8364, 1.8006, 0.0357, //
                0.0297, -0.0315, 1.0018,
            ),
            // Hunt-Pointer-Estevez normalized to D65.
            CatKind::VonKries => Matrix3::new(
                0.40024, 0.70760, -0.08081, //
                -0.22630, 1.16532, 0.04570, //
                0.0, 0.0, 0.91822,
            ),
        }
    }
}

/// sRGB primary chromaticities (xy): R, G, B.
const SRGB_PRIMARIES: [(f64, f64); 3] = [(0.64, 0.33), (0.30, 0.60), (0.15, 0.06)];

fn derive_srgb_to_xyz() -> Matrix3<f64> {
    let cols: Vec<Vector3<f64>> = SRGB_PRIMARIES
        .iter()
        .map(|&(x, y)| Vector3::new(x / y, 1.0, (1.0 - x - y) / y))
        .collect();
    let p = Matrix3::from_columns(&cols);
    let white = WhitePoint::d65().vector();
    let scale = p.try_inverse().expect("sRGB primaries are independent") * white;
    let mut m = p;
    for (c, s) in scale.iter().enumerate() {
        m.set_column(c, &(p.column(c) * *s));
    }
    m
}

/// Linear-sRGB -> XYZ matrix (D65).
pub fn srgb_to_xyz_matrix() -> &'static Matrix3<f64> {
    static M: OnceLock<Matrix3<f64>> = OnceLock::new();
    M.get_or_init(derive_srgb_to_xyz)
}

/// XYZ -> linear-sRGB matrix (D65).
pub fn xyz_to_srgb_matrix() -> &'static Matrix3<f64> {
    static M: OnceLock<Matrix3<f64>> = OnceLock::new();
    M.get_or_init(|| srgb_to_xyz_matrix().try_inverse().expect("matrix is nonsingular"))
}

/// Pure power transfer curve on [0, 1].
///
/// `Decode` applies v^gamma, `Encode` applies v^(1/gamma); the output is
/// clamped to [0, 1]. Input samples are expected in [0, 1]; values outside
/// are clamped before the power to keep the result real.
pub fn gamma_transfer(img: &PlanarImage, gamma: f64, dir: GammaDirection) -> Result<PlanarImage> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    img.check_finite()?;
    let e = match dir {
        GammaDirection::Decode => gamma,
        GammaDirection::Encode => 1.0 / gamma,
    };
    Ok(img.map(|v| v.clamp(0.0, 1.0).powf(e)))
}

/// Scalar pure-power encode/decode used by the ISP simulator.
pub fn gamma_scalar(v: f64, gamma: f64, dir: GammaDirection) -> f64 {
    let e = match dir {
        GammaDirection::Decode => gamma,
        GammaDirection::Encode => 1.0 / gamma,
    };
    v.clamp(0.0, 1.0).powf(e)
}

/// Piecewise IEC 61966-2-1 sRGB curve. Only the ISP simulator uses this, as
/// an alternate to the pure 2.2 power curve.
pub fn srgb_piecewise(v: f64, dir: GammaDirection) -> f64 {
    let v = v.clamp(0.0, 1.0);
    match dir {
        GammaDirection::Encode => {
            if v <= 0.0031308 {
                12.92 * v
            } else {
                1.055 * v.powf(1.0 / 2.4) - 0.055
            }
        }
        GammaDirection::Decode => {
            if v <= 0.04045 {
                v / 12.92
            } else {
                ((v + 0.055) / 1.055).powf(2.4)
            }
        }
    }
}

fn apply_matrix(img: &PlanarImage, m: &Matrix3<f64>) -> PlanarImage {
    img.map_pixels(|px| {
        let v = m * Vector3::new(px[0], px[1], px[2]);
        [v[0], v[1], v[2]]
    })
}

/// Per-pixel colorimetric matrix transform between linear sRGB and XYZ.
pub fn xyz_matrix_transform(img: &PlanarImage, dir: MatrixDirection) -> Result<PlanarImage> {
    img.check_finite()?;
    let m = match dir {
        MatrixDirection::SrgbToXyz => srgb_to_xyz_matrix(),
        MatrixDirection::XyzToSrgb => xyz_to_srgb_matrix(),
    };
    Ok(apply_matrix(img, m))
}

/// Von Kries chromatic adaptation in the chosen cone-response basis.
pub fn chromatic_adapt(
    img: &PlanarImage,
    src: &WhitePoint,
    dst: &WhitePoint,
    cat: CatKind,
) -> Result<PlanarImage> {
    img.check_finite()?;
    let cat_m = cat.matrix();
    let src_lms = cat_m * src.vector();
    let dst_lms = cat_m * dst.vector();
    for (i, v) in src_lms.iter().enumerate() {
        if *v == 0.0 {
            return Err(Error::SingularAdaptation(i));
        }
    }
    let diag = Matrix3::from_diagonal(&Vector3::new(
        dst_lms[0] / src_lms[0],
        dst_lms[1] / src_lms[1],
        dst_lms[2] / src_lms[2],
    ));
    let adapt = cat_m.try_inverse().expect("CAT matrices are nonsingular") * diag * cat_m;
    Ok(apply_matrix(img, &adapt))
}

/// The standard baseline linearization: a pure 2.2 gamma curve composed with
/// the D65 colorimetric matrix.
pub fn standard_baseline(img: &PlanarImage, dir: BaselineDirection) -> Result<PlanarImage> {
    match dir {
        BaselineDirection::Unprocess => {
            let lin = gamma_transfer(img, 2.2, GammaDirection::Decode)?;
            xyz_matrix_transform(&lin, MatrixDirection::SrgbToXyz)
        }
        BaselineDirection::Render => {
            img.check_finite()?;
            let lin = xyz_matrix_transform(img, MatrixDirection::XyzToSrgb)?;
            // Out-of-gamut XYZ can produce negative linear sRGB; clamp to the
            // displayable range before encoding.
            let lin = lin.clamped(0.0, f64::INFINITY);
            gamma_transfer(&lin, 2.2, GammaDirection::Encode)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> PlanarImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        PlanarImage::from_vec(h, w, data).unwrap()
    }

    #[test]
    fn gamma_endpoints_are_fixed() {
        let img = PlanarImage::from_vec(1, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let dec = gamma_transfer(&img, 2.2, GammaDirection::Decode).unwrap();
        assert_eq!(dec.data(), img.data());
        let enc = gamma_transfer(&img, 2.2, GammaDirection::Encode).unwrap();
        assert_eq!(enc.data(), img.data());
    }

    #[test]
    fn gamma_encode_quarter() {
        // 0.25^(1/2.2) evaluated at high precision.
        let img = PlanarImage::filled(1, 1, [0.25; 3]);
        let enc = gamma_transfer(&img, 2.2, GammaDirection::Encode).unwrap();
        assert_abs_diff_eq!(enc.get(0, 0, 0), 0.5325205447199813, epsilon = 1e-4);
    }

    #[test]
    fn gamma_round_trip() {
        let img = random_image(1, 8, 8);
        let dec = gamma_transfer(&img, 2.2, GammaDirection::Decode).unwrap();
        let back = gamma_transfer(&dec, 2.2, GammaDirection::Encode).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gamma_rejects_non_finite() {
        let img = PlanarImage::from_vec(1, 1, vec![0.1, f64::NAN, 0.2]).unwrap();
        assert!(gamma_transfer(&img, 2.2, GammaDirection::Decode).is_err());
    }

    #[test]
    fn white_maps_to_d65() {
        let img = PlanarImage::filled(1, 1, [1.0; 3]);
        let xyz = xyz_matrix_transform(&img, MatrixDirection::SrgbToXyz).unwrap();
        let px = xyz.pixel(0, 0);
        assert_abs_diff_eq!(px[0], 0.9505, epsilon = 1e-3);
        assert_abs_diff_eq!(px[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(px[2], 1.0888, epsilon = 1e-3);
    }

    #[test]
    fn black_maps_to_black() {
        let img = PlanarImage::zeros(2, 2);
        let xyz = xyz_matrix_transform(&img, MatrixDirection::SrgbToXyz).unwrap();
        assert!(xyz.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matrix_round_trip_is_identity() {
        let img = random_image(2, 8, 8);
        let xyz = xyz_matrix_transform(&img, MatrixDirection::SrgbToXyz).unwrap();
        let back = xyz_matrix_transform(&xyz, MatrixDirection::XyzToSrgb).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn matrix_transform_is_linear() {
        let a = random_image(3, 4, 4);
        let b = random_image(4, 4, 4);
        let (alpha, beta) = (0.7, -0.3);
        let combo = PlanarImage::from_vec(
            4,
            4,
            a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + beta * y).collect(),
        )
        .unwrap();
        let t_combo = xyz_matrix_transform(&combo, MatrixDirection::SrgbToXyz).unwrap();
        let ta = xyz_matrix_transform(&a, MatrixDirection::SrgbToXyz).unwrap();
        let tb = xyz_matrix_transform(&b, MatrixDirection::SrgbToXyz).unwrap();
        for i in 0..t_combo.data().len() {
            let expect = alpha * ta.data()[i] + beta * tb.data()[i];
            assert!((t_combo.data()[i] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn adaptation_identity_when_whites_match() {
        let img = random_image(5, 4, 4);
        for cat in [CatKind::Bradford, CatKind::Sharp, CatKind::VonKries] {
            let out = chromatic_adapt(&img, &WhitePoint::d65(), &WhitePoint::d65(), cat).unwrap();
            for (a, b) in img.data().iter().zip(out.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn adaptation_maps_src_white_to_dst_white() {
        let d65 = WhitePoint::d65();
        let d50 = WhitePoint::d50();
        for cat in [CatKind::Bradford, CatKind::Sharp, CatKind::VonKries] {
            let img = PlanarImage::filled(1, 1, d65.xyz);
            let out = chromatic_adapt(&img, &d65, &d50, cat).unwrap();
            let px = out.pixel(0, 0);
            for c in 0..3 {
                assert_abs_diff_eq!(px[c], d50.xyz[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn bradford_d65_to_d50_matches_published_values() {
        let img = PlanarImage::filled(1, 1, [0.9505, 1.0, 1.0888]);
        let out =
            chromatic_adapt(&img, &WhitePoint::d65(), &WhitePoint::d50(), CatKind::Bradford)
                .unwrap();
        let px = out.pixel(0, 0);
        assert_abs_diff_eq!(px[0], 0.9642, epsilon = 1e-3);
        assert_abs_diff_eq!(px[1], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(px[2], 0.8249, epsilon = 1e-3);
    }

    #[test]
    fn adaptation_rejects_zero_cone_response() {
        let bad = WhitePoint { xyz: [0.0, 0.0, 0.0] };
        let img = PlanarImage::filled(1, 1, [0.5; 3]);
        let err = chromatic_adapt(&img, &bad, &WhitePoint::d65(), CatKind::Bradford);
        assert!(matches!(err, Err(Error::SingularAdaptation(_))));
    }

    #[test]
    fn baseline_round_trip() {
        // Away from the clamp boundaries the composite is invertible.
        let img = random_image(6, 8, 8).map(|v| 0.05 + 0.9 * v);
        let xyz = standard_baseline(&img, BaselineDirection::Unprocess).unwrap();
        let back = standard_baseline(&xyz, BaselineDirection::Render).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn baseline_black_fixed_point() {
        let img = PlanarImage::zeros(2, 2);
        let xyz = standard_baseline(&img, BaselineDirection::Unprocess).unwrap();
        assert!(xyz.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn baseline_gray_luminance() {
        let img = PlanarImage::filled(1, 1, [0.5; 3]);
        let xyz = standard_baseline(&img, BaselineDirection::Unprocess).unwrap();
        // Gray tracks the white point, so Y is the decoded luminance 0.5^2.2.
        assert_abs_diff_eq!(xyz.get(0, 0, 1), 0.217637640824031, epsilon = 1e-3);
    }
}
