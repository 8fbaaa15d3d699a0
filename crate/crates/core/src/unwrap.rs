//! Unweighted least-squares phase unwrapping.
//!
//! The Laplacian of the wrapped phase differences is inverted under Neumann
//! boundary conditions. The Neumann problem is solved as a periodic one on
//! the half-sample mirror extension, which is what a DCT-II solver does.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::field::Field2D;

pub fn wrap(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// Discrete Laplacian of the wrapped phase; differences across the outer
/// boundary are zero.
fn wrapped_laplacian(psi: &Array2<f64>) -> Array2<f64> {
    let (ny, nx) = psi.dim();
    let mut rho = Array2::zeros((ny, nx));
    for iy in 0..ny {
        for ix in 0..nx {
            let mut r = 0.0;
            if ix + 1 < nx {
                r += wrap(psi[[iy, ix + 1]] - psi[[iy, ix]]);
            }
            if ix > 0 {
                r -= wrap(psi[[iy, ix]] - psi[[iy, ix - 1]]);
            }
            if iy + 1 < ny {
                r += wrap(psi[[iy + 1, ix]] - psi[[iy, ix]]);
            }
            if iy > 0 {
                r -= wrap(psi[[iy, ix]] - psi[[iy - 1, ix]]);
            }
            rho[[iy, ix]] = r;
        }
    }
    rho
}

fn solve_neumann_poisson(rho: &Array2<f64>) -> Array2<f64> {
    let (ny, nx) = rho.dim();
    let (my, mx) = (2 * ny, 2 * nx);
    let mut ext = Array2::from_shape_fn((my, mx), |(iy, ix)| {
        let sy = if iy < ny { iy } else { my - 1 - iy };
        let sx = if ix < nx { ix } else { mx - 1 - ix };
        Complex64::new(rho[[sy, sx]], 0.0)
    });
    Fft2::forward(my, mx).process(&mut ext);
    for ((ky, kx), c) in ext.indexed_iter_mut() {
        let denom =
            2.0 * (2.0 * PI * ky as f64 / my as f64).cos() + 2.0 * (2.0 * PI * kx as f64 / mx as f64).cos() - 4.0;
        *c = if ky == 0 && kx == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            *c / denom
        };
    }
    Fft2::inverse(my, mx).process(&mut ext);
    Array2::from_shape_fn((ny, nx), |(iy, ix)| ext[[iy, ix]].re)
}

/// Unwraps a wrapped phase map. The result is defined up to an additive
/// constant; it is returned with zero mean.
pub fn unwrap_wrapped(psi: &Array2<f64>) -> Array2<f64> {
    let mut phi = solve_neumann_poisson(&wrapped_laplacian(psi));
    let mean = phi.mean().unwrap_or(0.0);
    phi.mapv_inplace(|p| p - mean);
    phi
}

/// Unwrapped phase of `v`, offset so that it agrees with the wrapped phase at
/// the brightest pixel.
pub fn unwrap_phase(v: &Field2D) -> Result<Array2<f64>> {
    let values = v.values();
    let (anchor, peak) = values
        .indexed_iter()
        .map(|(i, c)| (i, c.norm()))
        .fold(((0, 0), 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if peak == 0.0 {
        return Err(Error::ZeroField);
    }
    let psi = v.phase();
    let mut phi = unwrap_wrapped(&psi);
    let offset = psi[anchor] - phi[anchor];
    phi.mapv_inplace(|p| p + offset);
    Ok(phi)
}
