//! Image file I/O: PNG (8/16-bit, 3-channel) for display-referred images and
//! PFM (32-bit float, color) for scene-referred XYZ data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::PlanarImage;

/// Loads a PNG or PFM by extension. 8-bit samples decode to v/255, 16-bit to
/// v/65535; PFM floats load as stored.
pub fn load_image(path: &Path) -> Result<PlanarImage> {
    match extension(path)?.as_str() {
        "png" => load_png(path),
        "pfm" => load_pfm(path),
        other => Err(Error::format(path, format!("unsupported extension {other:?}"))),
    }
}

/// Saves by extension: PNG writes 16-bit samples (round(v * 65535), clamped),
/// PFM writes 32-bit floats. Both invert [`load_image`] exactly for
/// representable values.
pub fn save_image(img: &PlanarImage, path: &Path) -> Result<()> {
    match extension(path)?.as_str() {
        "png" => save_png16(img, path),
        "pfm" => save_pfm(img, path),
        other => Err(Error::format(path, format!("unsupported extension {other:?}"))),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::format(path, "missing file extension"))
}

fn load_png(path: &Path) -> Result<PlanarImage> {
    let dynimg = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::format(path, format!("png decode failed: {e}")))?;
    match dynimg {
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            PlanarImage::from_vec(h, w, data)
        }
        image::DynamicImage::ImageRgb16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            PlanarImage::from_vec(h, w, data)
        }
        other => Err(Error::format(
            path,
            format!("expected a 3-channel image, got {:?}", other.color()),
        )),
    }
}

fn save_png16(img: &PlanarImage, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let raw: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(w as u32, h as u32, raw)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("png encode failed: {e}")))
}

/// 8-bit PNG variant for display outputs.
pub fn save_png8(img: &PlanarImage, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let raw: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: image::ImageBuffer<image::Rgb<u8>, Vec<u8>> =
        image::ImageBuffer::from_raw(w as u32, h as u32, raw)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, format!("png encode failed: {e}")))
}

// PFM: "PF" header, "<width> <height>", a scale whose sign encodes
// endianness, then rows bottom-to-top as f32 triples. We always write
// little-endian (negative scale).

fn load_pfm(path: &Path) -> Result<PlanarImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();

    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let kind = line.trim();
    if kind == "Pf" {
        return Err(Error::format(path, "grayscale PFM has 1 channel, expected 3"));
    }
    if kind != "PF" {
        return Err(Error::format(path, format!("bad PFM magic {kind:?}")));
    }

    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let dims: Vec<&str> = line.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::format(path, format!("bad PFM dimension line {line:?}")));
    }
    let w: usize = dims[0].parse().map_err(|_| Error::format(path, "bad PFM width"))?;
    let h: usize = dims[1].parse().map_err(|_| Error::format(path, "bad PFM height"))?;
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero PFM dimension"));
    }

    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let scale: f64 = line.trim().parse().map_err(|_| Error::format(path, "bad PFM scale"))?;
    if scale == 0.0 {
        return Err(Error::format(path, "PFM scale must be nonzero"));
    }
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; h * w * 3 * 4];
    r.read_exact(&mut raw).map_err(|_| Error::format(path, "truncated PFM data"))?;

    let mut data = vec![0.0f64; h * w * 3];
    for (i, chunk) in raw.chunks_exact(4).enumerate() {
        let bytes = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(bytes)
        } else {
            f32::from_be_bytes(bytes)
        };
        // Rows are stored bottom-up.
        let row = i / (w * 3);
        let col = i % (w * 3);
        let y = h - 1 - row;
        data[y * w * 3 + col] = v as f64;
    }
    PlanarImage::from_vec(h, w, data)
}

fn save_pfm(img: &PlanarImage, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    write!(w, "PF\n{} {}\n-1.0\n", img.width(), img.height()).map_err(io_err)?;
    for y in (0..img.height()).rev() {
        let row = &img.data()[y * img.width() * 3..(y + 1) * img.width() * 3];
        for &v in row {
            w.write_all(&(v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}
