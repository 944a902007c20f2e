//! `PlanarImage`: the h x w x 3 sample grid carried through every pipeline
//! stage.
//!
//! Samples are stored channel-interleaved in row-major order
//! (`data[(y * width + x) * 3 + c]`). sRGB-state images live in `[0, 1]`;
//! XYZ-state images are nonnegative with no hard upper bound; residual layers
//! may be negative.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl PlanarImage {
    /// Solid-color image.
    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        assert!(height >= 1 && width >= 1, "image must be at least 1x1");
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self { height, width, data }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    /// Wraps an interleaved buffer; `data.len()` must equal `height*width*3`.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < 1 || width < 1 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width * 3 {
            return Err(Error::shape(
                format!("{height}x{width}x3 = {} samples", height * width * 3),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * 3 + c] = v;
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x3", self.height, self.width)
    }

    /// Errors if the two images differ in size; used by binary operations.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(self.shape_string(), other.shape_string()))
        }
    }

    /// Errors on any NaN/Inf sample.
    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("image contains non-finite samples".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Per-pixel map through a 3-vector function.
    pub fn map_pixels(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(3) {
            data.extend_from_slice(&f([px[0], px[1], px[2]]));
        }
        Self { height: self.height, width: self.width, data }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Self {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Elementwise a - b.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self { height: self.height, width: self.width, data })
    }

    /// Elementwise a + b.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { height: self.height, width: self.width, data })
    }

    /// Mean over all samples.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Rec. 709 luma of the linear samples; used as a single-channel proxy.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|px| 0.2126 * px[0] + 0.7152 * px[1] + 0.0722 * px[2])
            .collect()
    }

    /// Crop a window; the window must lie fully inside the image.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::Config(format!(
                "crop {}x{}+{}+{} exceeds image {}",
                height,
                width,
                top,
                left,
                self.shape_string()
            )));
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            let row = ((top + y) * self.width + left) * 3;
            data.extend_from_slice(&self.data[row..row + width * 3]);
        }
        Ok(Self { height, width, data })
    }

    /// Bilinear resize. Sample positions use the inclusive endpoint grid, so
    /// corners map to corners.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1);
        let mut out = PlanarImage::zeros(height, width);
        let sy = if height > 1 { (self.height - 1) as f64 / (height - 1) as f64 } else { 0.0 };
        let sx = if width > 1 { (self.width - 1) as f64 / (width - 1) as f64 } else { 0.0 };
        for y in 0..height {
            let fy = y as f64 * sy;
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = x as f64 * sx;
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let mut px = [0.0; 3];
                for c in 0..3 {
                    let a = self.get(y0, x0, c) * (1.0 - wx) + self.get(y0, x1, c) * wx;
                    let b = self.get(y1, x0, c) * (1.0 - wx) + self.get(y1, x1, c) * wx;
                    px[c] = a * (1.0 - wy) + b * wy;
                }
                out.set_pixel(y, x, px);
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(self.height - 1 - y, x));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(PlanarImage::from_vec(2, 2, vec![0.0; 11]).is_err());
        assert!(PlanarImage::from_vec(2, 2, vec![0.0; 12]).is_ok());
    }

    #[test]
    fn crop_stays_inside() {
        let img = PlanarImage::filled(4, 6, [0.5, 0.25, 0.125]);
        let c = img.crop(1, 2, 3, 4).unwrap();
        assert_eq!((c.height(), c.width()), (3, 4));
        assert!(img.crop(2, 0, 3, 6).is_err());
    }

    #[test]
    fn resize_identity_when_same_size() {
        let mut img = PlanarImage::zeros(5, 7);
        for y in 0..5 {
            for x in 0..7 {
                img.set_pixel(y, x, [y as f64, x as f64, (y * x) as f64]);
            }
        }
        let r = img.resize_bilinear(5, 7);
        for (a, b) in img.data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flips_are_involutions() {
        let mut img = PlanarImage::zeros(3, 4);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
    }
}
