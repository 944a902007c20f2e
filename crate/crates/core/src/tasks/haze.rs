//! The linear haze formation model I = J t + A (1 - t) and its inverse.

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// Medium transmission: one value for the whole frame or a per-pixel field.
#[derive(Debug, Clone)]
pub enum Transmission {
    Uniform(f64),
    PerPixel { height: usize, width: usize, values: Vec<f64> },
}

impl Transmission {
    fn check(&self, img: &PlanarImage, invert: bool) -> Result<()> {
        let check_value = |t: f64| -> Result<()> {
            if !t.is_finite() || t < 0.0 || t > 1.0 {
                return Err(Error::InvalidInput(format!("transmission must lie in [0, 1], got {t}")));
            }
            if invert && t <= 0.0 {
                return Err(Error::InvalidInput(
                    "cannot invert haze with transmission <= 0 (division guard)".into(),
                ));
            }
            Ok(())
        };
        match self {
            Transmission::Uniform(t) => check_value(*t),
            Transmission::PerPixel { height, width, values } => {
                if *height != img.height() || *width != img.width() || values.len() != height * width {
                    return Err(Error::shape(
                        img.shape_string(),
                        format!("{height}x{width} transmission field"),
                    ));
                }
                values.iter().try_for_each(|&t| check_value(t))
            }
        }
    }

    #[inline]
    fn at(&self, y: usize, x: usize, width: usize) -> f64 {
        match self {
            Transmission::Uniform(t) => *t,
            Transmission::PerPixel { values, .. } => values[y * width + x],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazeDirection {
    /// I = J t + A (1 - t).
    Synthesize,
    /// J = (I - A (1 - t)) / t.
    Invert,
}

/// Applies or inverts the haze model with atmospheric light `a` in [0, 1]^3.
pub fn haze_model(
    img: &PlanarImage,
    t: &Transmission,
    a: [f64; 3],
    dir: HazeDirection,
) -> Result<PlanarImage> {
    img.check_finite()?;
    if a.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidInput(format!("atmospheric light must lie in [0, 1], got {a:?}")));
    }
    t.check(img, dir == HazeDirection::Invert)?;

    let (h, w) = (img.height(), img.width());
    let mut out = PlanarImage::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let tv = t.at(y, x, w);
            let px = img.pixel(y, x);
            let mut res = [0.0; 3];
            for c in 0..3 {
                res[c] = match dir {
                    HazeDirection::Synthesize => px[c] * tv + a[c] * (1.0 - tv),
                    HazeDirection::Invert => (px[c] - a[c] * (1.0 - tv)) / tv,
                };
            }
            out.set_pixel(y, x, res);
        }
    }
    Ok(out)
}
