//! PNG export of slices and 16-bit hologram images.
//!
//! Phase maps use a five-stop perceptual colormap running from dark purple
//! `(68, 1, 84)` through blue `(59, 82, 139)`, teal `(33, 145, 140)` and
//! green `(94, 201, 98)` to yellow `(253, 231, 37)`, interpolated linearly.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Color for `t` in `[0, 1]` (clamped).
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[i][c] + f * (STOPS[i + 1][c] - STOPS[i][c])).round() as u8;
    }
    out
}

fn normalize(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

fn png_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

fn write_png(path: &Path, w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| png_error(path, e))?;
    writer.write_image_data(data).map_err(|e| png_error(path, e))?;
    writer.finish().map_err(|e| png_error(path, e))
}

/// 8-bit grayscale, `lo` maps to black and `hi` to white.
pub fn write_gray_png(path: impl AsRef<Path>, img: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let (h, w) = img.dim();
    let data: Vec<u8> = img
        .iter()
        .map(|v| (normalize(*v, lo, hi) * 255.0).round() as u8)
        .collect();
    write_png(
        path.as_ref(),
        w,
        h,
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        &data,
    )
}

/// 8-bit RGB through [`colormap`].
pub fn write_colormap_png(path: impl AsRef<Path>, img: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let (h, w) = img.dim();
    let data: Vec<u8> = img.iter().flat_map(|v| colormap(normalize(*v, lo, hi))).collect();
    write_png(path.as_ref(), w, h, png::ColorType::Rgb, png::BitDepth::Eight, &data)
}

/// 16-bit grayscale scaled so the maximum maps to 65535. Returns the scale
/// (intensity per count).
pub fn write_gray16_png(path: impl AsRef<Path>, img: &Array2<f64>) -> Result<f64> {
    let (h, w) = img.dim();
    let peak = img.iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { peak / 65535.0 } else { 1.0 };
    let data: Vec<u8> = img
        .iter()
        .flat_map(|v| ((v / scale).round().clamp(0.0, 65535.0) as u16).to_be_bytes())
        .collect();
    write_png(
        path.as_ref(),
        w,
        h,
        png::ColorType::Grayscale,
        png::BitDepth::Sixteen,
        &data,
    )?;
    Ok(scale)
}

/// Reads an 8- or 16-bit grayscale PNG as raw counts, `(height, width)`.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| png_error(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_error(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_error(path, e))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(png_error(
            path,
            format!("expected grayscale, found {:?}", info.color_type),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let values: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf[..2 * w * h]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect(),
        png::BitDepth::Eight => buf[..w * h].iter().map(|v| *v as f64).collect(),
        d => return Err(png_error(path, format!("unsupported bit depth {d:?}"))),
    };
    Ok(Array2::from_shape_vec((h, w), values).expect("frame size matches header"))
}
