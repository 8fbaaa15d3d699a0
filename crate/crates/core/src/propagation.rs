//! Band-limited angular spectrum propagation and the multi-slice forward
//! model.
//!
//! The transfer function at distance `z` is
//! `exp(i z sqrt(k^2 - 4 pi^2 (fx^2 + fy^2)))` on the closed disc
//! `sqrt(fx^2 + fy^2) <= NA / lambda` and zero elsewhere. Evanescent bins are
//! zeroed as well, so every bin has modulus exactly 0 or 1.
//!
//! The forward operator sums every slice of a volume propagated to the
//! detector plane; its adjoint back-propagates a detector field into each
//! slice.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{frequency_axis, Fft2};
use crate::field::{AxialBox, Field2D, FieldVolume, GridSpec};

#[derive(Clone, Debug)]
pub struct PropagationKernel {
    pub grid: GridSpec,
    pub z: f64,
    /// Transfer function in natural FFT order, `(ny, nx)`.
    pub transfer: Array2<Complex64>,
}

/// Pass-band indicator of the grid (true inside the NA disc).
pub fn band_mask(grid: &GridSpec) -> Array2<bool> {
    let fx = frequency_axis(grid.nx, grid.dx);
    let fy = frequency_axis(grid.ny, grid.dy);
    let k2 = grid.wavenumber().powi(2);
    let cutoff = grid.band_limit();
    let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
        let rho2 = fx[ix] * fx[ix] + fy[iy] * fy[iy];
        rho2.sqrt() <= cutoff && four_pi2 * rho2 <= k2
    })
}

pub fn make_kernel(grid: &GridSpec, z: f64) -> PropagationKernel {
    let fx = frequency_axis(grid.nx, grid.dx);
    let fy = frequency_axis(grid.ny, grid.dy);
    let k2 = grid.wavenumber().powi(2);
    let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mask = band_mask(grid);
    let transfer = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
        if mask[[iy, ix]] {
            let kz = (k2 - four_pi2 * (fx[ix] * fx[ix] + fy[iy] * fy[iy])).sqrt();
            Complex64::from_polar(1.0, z * kz)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    PropagationKernel {
        grid: *grid,
        z,
        transfer,
    }
}

pub fn propagate_with(kernel: &PropagationKernel, f: &Field2D) -> Result<Field2D> {
    if !kernel.grid.same_lateral(f.grid()) {
        return Err(Error::GridMismatch);
    }
    f.check_finite()?;
    let g = *f.grid();
    let mut data = f.values().to_owned();
    Fft2::forward(g.ny, g.nx).process(&mut data);
    data *= &kernel.transfer;
    Fft2::inverse(g.ny, g.nx).process(&mut data);
    Ok(Field2D::from_parts(g, data))
}

/// Propagates `f` by `z` micrometers (negative `z` back-propagates).
pub fn propagate(f: &Field2D, z: f64) -> Result<Field2D> {
    propagate_with(&make_kernel(f.grid(), z), f)
}

/// Projection onto the NA pass band.
pub fn band_limit(f: &Field2D) -> Result<Field2D> {
    propagate(f, 0.0)
}

/// Precomputed forward/adjoint operator for one grid and axial box.
#[derive(Clone)]
pub struct ForwardModel {
    grid: GridSpec,
    axial: AxialBox,
    transfers: Vec<Array2<Complex64>>,
    fwd: Fft2,
    inv: Fft2,
}

impl ForwardModel {
    pub fn new(grid: GridSpec, axial: AxialBox) -> Result<Self> {
        grid.validate()?;
        axial.validate()?;
        if axial.dz != grid.dz {
            return Err(Error::InvalidParameter(format!(
                "box spacing {} differs from grid dz {}",
                axial.dz, grid.dz
            )));
        }
        let transfers = axial
            .slice_positions()
            .into_par_iter()
            .map(|z| make_kernel(&grid, z).transfer)
            .collect();
        Ok(ForwardModel {
            grid,
            axial,
            transfers,
            fwd: Fft2::forward(grid.ny, grid.nx),
            inv: Fft2::inverse(grid.ny, grid.nx),
        })
    }

    pub fn for_volume(u: &FieldVolume) -> Result<Self> {
        Self::new(*u.grid(), u.axial_box())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn axial_box(&self) -> &AxialBox {
        &self.axial
    }

    fn check_volume(&self, u: &FieldVolume) -> Result<()> {
        if !u.grid().same_lateral(&self.grid)
            || u.grid().dz != self.grid.dz
            || u.nz() != self.axial.nz
            || u.z_center() != self.axial.z_center
        {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Detector field produced by the volume: sum of each slice propagated
    /// by its own distance.
    pub fn forward(&self, u: &FieldVolume) -> Result<Field2D> {
        self.check_volume(u)?;
        u.check_finite()?;
        let spectra: Vec<Array2<Complex64>> = u
            .values()
            .axis_iter(Axis(0))
            .into_par_iter()
            .zip(self.transfers.par_iter())
            .map(|(slice, h)| {
                let mut s = slice.to_owned();
                self.fwd.process(&mut s);
                s *= h;
                s
            })
            .collect();
        // fixed summation order keeps the result bitwise reproducible
        let mut total = Array2::zeros((self.grid.ny, self.grid.nx));
        for s in &spectra {
            total += s;
        }
        self.inv.process(&mut total);
        Ok(Field2D::from_parts(self.grid, total))
    }

    /// Hermitian adjoint of [`forward`](Self::forward): back-propagation of
    /// `v` into every slice.
    pub fn adjoint(&self, v: &Field2D) -> Result<FieldVolume> {
        if !v.grid().same_lateral(&self.grid) {
            return Err(Error::GridMismatch);
        }
        v.check_finite()?;
        let mut spectrum = v.values().to_owned();
        self.fwd.process(&mut spectrum);
        let mut out = FieldVolume::zeros(self.grid, self.axial);
        out.values_mut()
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(self.transfers.par_iter())
            .for_each(|(mut slice, h)| {
                let mut s = spectrum.clone();
                Zip::from(&mut s).and(h).for_each(|a, t| *a *= t.conj());
                self.inv.process(&mut s);
                slice.assign(&s);
            });
        Ok(out)
    }
}

/// Forward operator built from the volume's own geometry.
pub fn forward_a(u: &FieldVolume) -> Result<Field2D> {
    ForwardModel::for_volume(u)?.forward(u)
}

pub fn adjoint_a(v: &Field2D, axial: &AxialBox) -> Result<FieldVolume> {
    let mut grid = *v.grid();
    grid.dz = axial.dz;
    ForwardModel::new(grid, *axial)?.adjoint(v)
}
