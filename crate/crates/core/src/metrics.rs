//! Quantitative evaluation: PSNR, SSIM, quartile summaries, angular error.

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// PSNR returned for bit-identical images instead of infinity.
pub const PSNR_CAP_DB: f64 = 300.0;

/// Mean/quartile summary of a metric sample, matching the Avg/Q1/Q2/Q3
/// reporting layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub avg: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub n: usize,
}

/// 10 log10(peak^2 / MSE); identical images return [`PSNR_CAP_DB`].
pub fn psnr(a: &PlanarImage, b: &PlanarImage, peak: f64) -> Result<f64> {
    a.check_same_shape(b)?;
    if !(peak > 0.0) {
        return Err(Error::InvalidInput(format!("peak must be positive, got {peak}")));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data().len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian filtering of one channel plane, valid region only.
fn filter_valid(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = ssim_kernel();
    let r = SSIM_WINDOW / 2;
    // Horizontal pass over full rows.
    let wo = w - 2 * r;
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            tmp[y * wo + x] = acc;
        }
    }
    // Vertical pass.
    let ho = h - 2 * r;
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * wo + x];
            }
            out[y * wo + x] = acc;
        }
    }
    out
}

/// Mean structural similarity: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1.0; computed per channel over the
/// valid window positions and averaged.
pub fn ssim(a: &PlanarImage, b: &PlanarImage) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "ssim needs images at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let peak = 1.0f64;
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);

    let n = h * w;
    let mut total = 0.0;
    for c in 0..3 {
        let mut pa = vec![0.0; n];
        let mut pb = vec![0.0; n];
        let mut paa = vec![0.0; n];
        let mut pbb = vec![0.0; n];
        let mut pab = vec![0.0; n];
        for i in 0..n {
            let x = a.data()[i * 3 + c];
            let y = b.data()[i * 3 + c];
            pa[i] = x;
            pb[i] = y;
            paa[i] = x * x;
            pbb[i] = y * y;
            pab[i] = x * y;
        }
        let mu_a = filter_valid(&pa, h, w);
        let mu_b = filter_valid(&pb, h, w);
        let m_aa = filter_valid(&paa, h, w);
        let m_bb = filter_valid(&pbb, h, w);
        let m_ab = filter_valid(&pab, h, w);

        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = m_aa[i] - ma * ma;
            let vb = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

/// Mean plus inclusive linear-interpolation quartiles of the sorted sample.
pub fn summarize(values: &[f64]) -> Result<MetricSummary> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot summarize an empty sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quantile = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    Ok(MetricSummary {
        avg: values.iter().sum::<f64>() / values.len() as f64,
        q1: quantile(0.25),
        q2: quantile(0.5),
        q3: quantile(0.75),
        n: values.len(),
    })
}

/// Angle between two illuminant vectors, in degrees.
pub fn angular_error(l1: [f64; 3], l2: [f64; 3]) -> Result<f64> {
    let n1 = (l1[0] * l1[0] + l1[1] * l1[1] + l1[2] * l1[2]).sqrt();
    let n2 = (l2[0] * l2[0] + l2[1] * l2[1] + l2[2] * l2[2]).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidInput("angular error of a zero vector".into()));
    }
    let dot = (l1[0] * l2[0] + l1[1] * l2[1] + l1[2] * l2[2]) / (n1 * n2);
    Ok(dot.clamp(-1.0, 1.0).acos().to_degrees())
}
