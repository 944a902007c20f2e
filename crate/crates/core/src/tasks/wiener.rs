//! Circular convolution and Wiener deconvolution in the frequency domain.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// A small nonnegative blur kernel normalized to unit sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    height: usize,
    width: usize,
    taps: Vec<f64>,
}

impl Kernel2D {
    pub fn new(height: usize, width: usize, taps: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || taps.len() != height * width {
            return Err(Error::shape(format!("{height}x{width} taps"), format!("{}", taps.len())));
        }
        if taps.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidInput("kernel taps must be finite and nonnegative".into()));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("kernel must sum to 1, got {sum}")));
        }
        Ok(Self { height, width, taps })
    }

    pub fn delta() -> Self {
        Self { height: 1, width: 1, taps: vec![1.0] }
    }

    /// Horizontal motion streak of `len` uniform taps.
    pub fn motion(len: usize) -> Self {
        assert!(len >= 1);
        Self { height: 1, width: len, taps: vec![1.0 / len as f64; len] }
    }

    /// Truncated Gaussian, normalized.
    pub fn gaussian(radius: usize, sigma: f64) -> Self {
        assert!(sigma > 0.0);
        let side = 2 * radius + 1;
        let mut taps = vec![0.0; side * side];
        let mut sum = 0.0;
        for y in 0..side {
            for x in 0..side {
                let dy = y as f64 - radius as f64;
                let dx = x as f64 - radius as f64;
                let v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                taps[y * side + x] = v;
                sum += v;
            }
        }
        taps.iter_mut().for_each(|v| *v /= sum);
        Self { height: side, width: side, taps }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn check_fits(&self, img: &PlanarImage) -> Result<()> {
        if self.height > img.height() || self.width > img.width() {
            return Err(Error::Config(format!(
                "kernel {}x{} larger than image {}",
                self.height,
                self.width,
                img.shape_string()
            )));
        }
        Ok(())
    }

    /// Kernel embedded in an h x w frame, centered at the origin with
    /// wraparound, as the frequency response's spatial counterpart.
    fn padded_spectrumless(&self, h: usize, w: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        let cy = (self.height / 2) as i64;
        let cx = (self.width / 2) as i64;
        for ky in 0..self.height {
            for kx in 0..self.width {
                let y = (ky as i64 - cy).rem_euclid(h as i64) as usize;
                let x = (kx as i64 - cx).rem_euclid(w as i64) as usize;
                out[y * w + x] += Complex64::new(self.taps[ky * self.width + kx], 0.0);
            }
        }
        out
    }
}

/// In-place 2D FFT via row-column decomposition.
fn fft2(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

fn channel_spectrum(img: &PlanarImage, c: usize) -> Vec<Complex64> {
    img.data()
        .chunks_exact(3)
        .map(|px| Complex64::new(px[c], 0.0))
        .collect()
}

/// Circular (wraparound) convolution of each channel with the kernel; the
/// exact linear blur model the Wiener filter inverts.
pub fn circular_convolve(img: &PlanarImage, kernel: &Kernel2D) -> Result<PlanarImage> {
    img.check_finite()?;
    kernel.check_fits(img)?;
    let (h, w) = (img.height(), img.width());
    let mut k_spec = kernel.padded_spectrumless(h, w);
    fft2(&mut k_spec, h, w, false);

    let mut out = PlanarImage::zeros(h, w);
    for c in 0..3 {
        let mut spec = channel_spectrum(img, c);
        fft2(&mut spec, h, w, false);
        for (v, k) in spec.iter_mut().zip(&k_spec) {
            *v *= k;
        }
        fft2(&mut spec, h, w, true);
        for (i, v) in spec.iter().enumerate() {
            out.data_mut()[i * 3 + c] = v.re;
        }
    }
    Ok(out)
}

/// Frequency-domain Wiener deconvolution with noise-to-signal regularization
/// 1/snr: F = conj(H) G / (|H|^2 + 1/snr).
pub fn wiener_deconvolve(img: &PlanarImage, kernel: &Kernel2D, snr: f64) -> Result<PlanarImage> {
    img.check_finite()?;
    kernel.check_fits(img)?;
    if !(snr > 0.0) {
        return Err(Error::InvalidInput(format!("snr must be positive, got {snr}")));
    }
    let (h, w) = (img.height(), img.width());
    let mut k_spec = kernel.padded_spectrumless(h, w);
    fft2(&mut k_spec, h, w, false);
    let reg = 1.0 / snr;

    let mut out = PlanarImage::zeros(h, w);
    for c in 0..3 {
        let mut spec = channel_spectrum(img, c);
        fft2(&mut spec, h, w, false);
        for (v, k) in spec.iter_mut().zip(&k_spec) {
            *v = k.conj() * *v / (k.norm_sqr() + reg);
        }
        fft2(&mut spec, h, w, true);
        for (i, v) in spec.iter().enumerate() {
            out.data_mut()[i * 3 + c] = v.re;
        }
    }
    Ok(out)
}
