//! File formats, configuration and exports.

pub mod config;
pub mod format;
pub mod image;
pub mod tables;

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field2D, GridSpec};
use crate::holo::Hologram;

pub use config::RunConfig;
pub use format::{read_field, read_stored, read_volume, write_field, write_volume, Stored};

/// Stores the intensity in the real part of a 2D `HTF1` field.
pub fn write_hologram(path: impl AsRef<Path>, h: &Hologram) -> Result<()> {
    let values = h.intensity().mapv(|v| Complex64::new(v, 0.0));
    write_field(path, &Field2D::new(*h.grid(), values)?)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads a hologram from an `HTF1` field or a grayscale PNG. PNG files carry
/// no geometry, so `grid` supplies it and must match the image size.
pub fn read_hologram(path: impl AsRef<Path>, grid: &GridSpec) -> Result<Hologram> {
    let path = path.as_ref();
    if is_png(path) {
        let counts: Array2<f64> = image::read_gray_png(path)?;
        if counts.dim() != (grid.ny, grid.nx) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} (from config)", grid.nx, grid.ny),
                actual: format!("{}x{} in {}", counts.dim().1, counts.dim().0, path.display()),
            });
        }
        return Hologram::new(*grid, counts);
    }
    let f = read_field(path)?;
    if f.values().iter().any(|c| c.im != 0.0) {
        return Err(Error::Format(format!(
            "{}: hologram intensity must be real",
            path.display()
        )));
    }
    Hologram::new(*f.grid(), f.values().mapv(|c| c.re))
}
