//! Sampling grids, complex 2D fields and slice volumes.
//!
//! Arrays are stored row-major with x fastest: a [`Field2D`] is `(ny, nx)`
//! and a [`FieldVolume`] is `(nz, ny, nx)`. All lengths are micrometers.

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical sampling of the object-plane grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Lateral pitch, sensor pitch divided by magnification.
    pub dx: f64,
    pub dy: f64,
    /// Axial slice spacing.
    pub dz: f64,
    pub wavelength: f64,
    pub na: f64,
    pub magnification: f64,
}

impl GridSpec {
    pub fn new(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        dz: f64,
        wavelength: f64,
        na: f64,
        magnification: f64,
    ) -> Result<Self> {
        let g = GridSpec {
            nx,
            ny,
            dx,
            dy,
            dz,
            wavelength,
            na,
            magnification,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid whose lateral pitch is `sensor_pitch / magnification`.
    pub fn from_sensor(
        n: usize,
        sensor_pitch: f64,
        magnification: f64,
        dz: f64,
        wavelength: f64,
        na: f64,
    ) -> Result<Self> {
        let pitch = sensor_pitch / magnification;
        Self::new(n, n, pitch, pitch, dz, wavelength, na, magnification)
    }

    /// 3.45 um sensor pixels behind a 40x objective, 650 nm light, NA 0.75,
    /// 0.75 um slices.
    pub fn microscope(n: usize) -> Self {
        Self::from_sensor(n, 3.45, 40.0, 0.75, 0.65, 0.75).expect("constant grid is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if self.nx < 2 || self.ny < 2 {
            return bad(format!("nx, ny must be >= 2 (got {}x{})", self.nx, self.ny));
        }
        if !self.nx.is_multiple_of(2) || !self.ny.is_multiple_of(2) {
            return bad(format!("nx, ny must be even (got {}x{})", self.nx, self.ny));
        }
        for (name, v) in [
            ("dx", self.dx),
            ("dy", self.dy),
            ("dz", self.dz),
            ("wavelength", self.wavelength),
            ("magnification", self.magnification),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite (got {v})"));
            }
        }
        if !(self.na > 0.0 && self.na < 1.0) {
            return bad(format!("na must lie in (0, 1) (got {})", self.na));
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    /// Radius of the pass band in cycles/um.
    pub fn band_limit(&self) -> f64 {
        self.na / self.wavelength
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same lateral sampling, ignoring dz.
    pub fn same_lateral(&self, other: &GridSpec) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.dx == other.dx
            && self.dy == other.dy
            && self.wavelength == other.wavelength
            && self.na == other.na
    }
}

/// Axial extent of the reconstruction box.
///
/// Slice `j` sits at distance `z_center + ((nz - 1)/2 - j) * dz` from the
/// detector, so index 0 is the slice farthest from the detector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxialBox {
    pub nz: usize,
    pub z_center: f64,
    pub dz: f64,
}

impl AxialBox {
    pub fn new(nz: usize, z_center: f64, dz: f64) -> Result<Self> {
        let b = AxialBox { nz, z_center, dz };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nz == 0 {
            return Err(Error::InvalidParameter("nz must be >= 1".into()));
        }
        if !(self.dz.is_finite() && self.dz > 0.0) || !self.z_center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bad box geometry (z_center {}, dz {})",
                self.z_center, self.dz
            )));
        }
        if self.z_near() <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "box reaches the detector: nearest slice at z = {}",
                self.z_near()
            )));
        }
        Ok(())
    }

    pub fn slice_z(&self, j: usize) -> f64 {
        self.z_center + ((self.nz as f64 - 1.0) / 2.0 - j as f64) * self.dz
    }

    pub fn slice_positions(&self) -> Vec<f64> {
        (0..self.nz).map(|j| self.slice_z(j)).collect()
    }

    /// Distance of the far end of the box (slice 0).
    pub fn z_far(&self) -> f64 {
        self.slice_z(0)
    }

    pub fn z_near(&self) -> f64 {
        self.slice_z(self.nz - 1)
    }
}

fn first_non_finite<'a>(it: impl Iterator<Item = &'a Complex64>) -> Option<usize> {
    it.enumerate()
        .find(|(_, c)| !(c.re.is_finite() && c.im.is_finite()))
        .map(|(i, _)| i)
}

/// Complex field sampled on a 2D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2D {
    grid: GridSpec,
    values: Array2<Complex64>,
}

impl Field2D {
    pub fn new(grid: GridSpec, values: Array2<Complex64>) -> Result<Self> {
        grid.validate()?;
        if values.dim() != (grid.ny, grid.nx) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", grid.ny, grid.nx),
                actual: format!("{:?}", values.dim()),
            });
        }
        if let Some(i) = first_non_finite(values.iter()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Field2D { grid, values })
    }

    pub(crate) fn from_parts(grid: GridSpec, values: Array2<Complex64>) -> Self {
        debug_assert_eq!(values.dim(), (grid.ny, grid.nx));
        Field2D { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field2D {
            values: Array2::zeros((grid.ny, grid.nx)),
            grid,
        }
    }

    /// Builds a field from a function of pixel indices `(ix, iy)`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        Self::new(grid, Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| f(ix, iy)))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> ArrayView2<'_, Complex64> {
        self.values.view()
    }

    pub fn values_mut(&mut self) -> ArrayViewMut2<'_, Complex64> {
        self.values.view_mut()
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match first_non_finite(self.values.iter()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other> = sum conj(self) * other`.
    pub fn inner(&self, other: &Field2D) -> Complex64 {
        Zip::from(&self.values)
            .and(&other.values)
            .fold(Complex64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
    }

    pub fn mean(&self) -> Complex64 {
        self.values.sum() / self.values.len() as f64
    }

    pub fn amplitude(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.values.mapv(|c| c.arg())
    }

    pub fn scaled(&self, s: Complex64) -> Field2D {
        Field2D::from_parts(self.grid, self.values.mapv(|c| c * s))
    }

    pub fn sub(&self, other: &Field2D) -> Result<Field2D> {
        if !self.grid.same_lateral(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Field2D::from_parts(self.grid, &self.values - &other.values))
    }

    /// Relative Frobenius distance `||self - other|| / ||other||`.
    pub fn relative_error(&self, reference: &Field2D) -> f64 {
        let diff: f64 = Zip::from(&self.values)
            .and(&reference.values)
            .fold(0.0, |acc, a, b| acc + (a - b).norm_sqr());
        (diff / reference.norm_sqr()).sqrt()
    }
}

/// Stack of `nz` slices covering an [`AxialBox`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldVolume {
    grid: GridSpec,
    z_center: f64,
    values: Array3<Complex64>,
}

impl FieldVolume {
    pub fn new(grid: GridSpec, z_center: f64, values: Array3<Complex64>) -> Result<Self> {
        grid.validate()?;
        let (nz, ny, nx) = values.dim();
        if (ny, nx) != (grid.ny, grid.nx) {
            return Err(Error::ShapeMismatch {
                expected: format!("(nz, {}, {})", grid.ny, grid.nx),
                actual: format!("{:?}", values.dim()),
            });
        }
        AxialBox::new(nz, z_center, grid.dz)?;
        if let Some(i) = first_non_finite(values.iter()) {
            return Err(Error::NonFinite(i));
        }
        Ok(FieldVolume { grid, z_center, values })
    }

    pub(crate) fn from_parts(grid: GridSpec, z_center: f64, values: Array3<Complex64>) -> Self {
        FieldVolume { grid, z_center, values }
    }

    pub fn zeros(grid: GridSpec, axial: AxialBox) -> Self {
        FieldVolume {
            grid,
            z_center: axial.z_center,
            values: Array3::zeros((axial.nz, grid.ny, grid.nx)),
        }
    }

    pub fn from_slices(grid: GridSpec, z_center: f64, slices: &[Field2D]) -> Result<Self> {
        let mut values = Array3::zeros((slices.len(), grid.ny, grid.nx));
        for (j, s) in slices.iter().enumerate() {
            if !s.grid.same_lateral(&grid) {
                return Err(Error::GridMismatch);
            }
            values.index_axis_mut(Axis(0), j).assign(&s.values);
        }
        Self::new(grid, z_center, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn nz(&self) -> usize {
        self.values.dim().0
    }

    pub fn z_center(&self) -> f64 {
        self.z_center
    }

    pub fn axial_box(&self) -> AxialBox {
        AxialBox {
            nz: self.nz(),
            z_center: self.z_center,
            dz: self.grid.dz,
        }
    }

    pub fn values(&self) -> &Array3<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<Complex64> {
        self.values
    }

    pub fn slice(&self, j: usize) -> Field2D {
        Field2D::from_parts(self.grid, self.values.index_axis(Axis(0), j).to_owned())
    }

    pub fn check_finite(&self) -> Result<()> {
        match first_non_finite(self.values.iter()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn same_shape(&self, other: &FieldVolume) -> bool {
        self.grid.same_lateral(&other.grid)
            && self.grid.dz == other.grid.dz
            && self.values.dim() == other.values.dim()
            && self.z_center == other.z_center
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn inner(&self, other: &FieldVolume) -> Complex64 {
        Zip::from(&self.values)
            .and(&other.values)
            .fold(Complex64::new(0.0, 0.0), |acc, a, b| acc + a.conj() * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, c| m.max(c.norm()))
    }

    pub fn scaled(&self, s: f64) -> FieldVolume {
        FieldVolume::from_parts(self.grid, self.z_center, self.values.mapv(|c| c * s))
    }

    /// Relative Frobenius distance `||self - other|| / ||other||`.
    pub fn relative_error(&self, reference: &FieldVolume) -> f64 {
        let diff: f64 = Zip::from(&self.values)
            .and(&reference.values)
            .fold(0.0, |acc, a, b| acc + (a - b).norm_sqr());
        (diff / reference.norm_sqr()).sqrt()
    }
}

/// Per-slice energy `sum |u|^2`.
pub fn volume_energy_profile(u: &FieldVolume) -> Vec<f64> {
    u.values
        .axis_iter(Axis(0))
        .map(|s| s.iter().map(|c| c.norm_sqr()).sum())
        .collect()
}

/// Share of the volume energy held by the first and last slice.
pub fn peripheral_energy_fraction(u: &FieldVolume) -> f64 {
    let e = volume_energy_profile(u);
    let total: f64 = e.iter().sum();
    if total == 0.0 || e.len() < 2 {
        return 0.0;
    }
    (e[0] + e[e.len() - 1]) / total
}
