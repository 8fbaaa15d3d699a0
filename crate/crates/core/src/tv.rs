//! Total variation of a complex volume with anisotropic voxel spacing.
//!
//! Differences are forward differences divided by the physical spacing,
//! with the difference across the last sample of each axis set to zero. The
//! divergence is defined as the negative transpose of that operator, so
//! `<G u, p> = -<u, D p>` holds to rounding.

use ndarray::{s, Array3, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldVolume, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvConfig {
    pub epsilon: f64,
    /// `(dx, dy, dz)`.
    pub spacing: (f64, f64, f64),
}

impl TvConfig {
    pub fn new(epsilon: f64, spacing: (f64, f64, f64)) -> Result<Self> {
        let c = TvConfig { epsilon, spacing };
        c.validate()?;
        Ok(c)
    }

    pub fn for_grid(grid: &GridSpec, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, (grid.dx, grid.dy, grid.dz))
    }

    /// Smoothing scaled to the initial guess: `1e-3 * max |u|`.
    pub fn relative_to(u: &FieldVolume) -> Result<Self> {
        let eps = 1e-3 * u.max_abs();
        Self::for_grid(u.grid(), if eps > 0.0 { eps } else { 1e-12 })
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.spacing;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive (got {})",
                self.epsilon
            )));
        }
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spacings must be positive (got {:?})",
                self.spacing
            )));
        }
        Ok(())
    }
}

/// Discrete gradient components, each shaped like the volume.
#[derive(Clone, Debug)]
pub struct Gradient3 {
    pub x: Array3<Complex64>,
    pub y: Array3<Complex64>,
    pub z: Array3<Complex64>,
}

pub fn gradient(u: &Array3<Complex64>, spacing: (f64, f64, f64)) -> Gradient3 {
    let (nz, ny, nx) = u.dim();
    let (dx, dy, dz) = spacing;
    let mut x = Array3::zeros((nz, ny, nx));
    let mut y = Array3::zeros((nz, ny, nx));
    let mut z = Array3::zeros((nz, ny, nx));
    if nx > 1 {
        Zip::from(x.slice_mut(s![.., .., ..nx - 1]))
            .and(u.slice(s![.., .., 1..]))
            .and(u.slice(s![.., .., ..nx - 1]))
            .for_each(|g, a, b| *g = (a - b) / dx);
    }
    if ny > 1 {
        Zip::from(y.slice_mut(s![.., ..ny - 1, ..]))
            .and(u.slice(s![.., 1.., ..]))
            .and(u.slice(s![.., ..ny - 1, ..]))
            .for_each(|g, a, b| *g = (a - b) / dy);
    }
    if nz > 1 {
        Zip::from(z.slice_mut(s![..nz - 1, .., ..]))
            .and(u.slice(s![1.., .., ..]))
            .and(u.slice(s![..nz - 1, .., ..]))
            .for_each(|g, a, b| *g = (a - b) / dz);
    }
    Gradient3 { x, y, z }
}

/// `D p = -G^T p`.
pub fn divergence(p: &Gradient3, spacing: (f64, f64, f64)) -> Array3<Complex64> {
    let (nz, ny, nx) = p.x.dim();
    let (dx, dy, dz) = spacing;
    let mut out = Array3::<Complex64>::zeros((nz, ny, nx));
    if nx > 1 {
        let px = p.x.slice(s![.., .., ..nx - 1]);
        Zip::from(out.slice_mut(s![.., .., ..nx - 1]))
            .and(&px)
            .for_each(|o, v| *o += v / dx);
        Zip::from(out.slice_mut(s![.., .., 1..]))
            .and(&px)
            .for_each(|o, v| *o -= v / dx);
    }
    if ny > 1 {
        let py = p.y.slice(s![.., ..ny - 1, ..]);
        Zip::from(out.slice_mut(s![.., ..ny - 1, ..]))
            .and(&py)
            .for_each(|o, v| *o += v / dy);
        Zip::from(out.slice_mut(s![.., 1.., ..]))
            .and(&py)
            .for_each(|o, v| *o -= v / dy);
    }
    if nz > 1 {
        let pz = p.z.slice(s![..nz - 1, .., ..]);
        Zip::from(out.slice_mut(s![..nz - 1, .., ..]))
            .and(&pz)
            .for_each(|o, v| *o += v / dz);
        Zip::from(out.slice_mut(s![1.., .., ..]))
            .and(&pz)
            .for_each(|o, v| *o -= v / dz);
    }
    out
}

fn magnitude_sum(u: &FieldVolume, cfg: &TvConfig, eps2: f64) -> f64 {
    let g = gradient(u.values(), cfg.spacing);
    let mut total = 0.0;
    Zip::from(&g.x).and(&g.y).and(&g.z).for_each(|a, b, c| {
        total += (a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + eps2).sqrt();
    });
    total
}

/// Sum over voxels of the gradient magnitude.
pub fn tv_value(u: &FieldVolume, cfg: &TvConfig) -> f64 {
    magnitude_sum(u, cfg, 0.0)
}

/// `sum sqrt(|grad u|^2 + eps^2)`, the functional [`tv_gradient`] differentiates.
pub fn tv_value_smoothed(u: &FieldVolume, cfg: &TvConfig) -> f64 {
    magnitude_sum(u, cfg, cfg.epsilon * cfg.epsilon)
}

/// `-div(grad u / sqrt(|grad u|^2 + eps^2))`.
///
/// This equals `d/dRe + i d/dIm` of [`tv_value_smoothed`], so the first-order
/// change along a direction `w` is `Re <g, w>`.
pub fn tv_gradient(u: &FieldVolume, cfg: &TvConfig) -> FieldVolume {
    let mut g = gradient(u.values(), cfg.spacing);
    let eps2 = cfg.epsilon * cfg.epsilon;
    Zip::from(&mut g.x).and(&mut g.y).and(&mut g.z).for_each(|a, b, c| {
        let m = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + eps2).sqrt();
        *a /= m;
        *b /= m;
        *c /= m;
    });
    let mut d = divergence(&g, cfg.spacing);
    d.mapv_inplace(|v| -v);
    FieldVolume::from_parts(*u.grid(), u.z_center(), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AxialBox;

    fn volume(nz: usize, n: usize, f: impl Fn(usize, usize, usize) -> Complex64) -> FieldVolume {
        let g = GridSpec::new(n, n, 0.5, 0.5, 1.0, 0.65, 0.5, 1.0).unwrap();
        let vals = Array3::from_shape_fn((nz, n, n), |(k, j, i)| f(k, j, i));
        FieldVolume::new(g, 5.0, vals).unwrap()
    }

    #[test]
    fn constant_volume_has_no_variation() {
        let u = volume(3, 4, |_, _, _| Complex64::new(0.7, -0.2));
        let cfg = TvConfig::for_grid(u.grid(), 1e-3).unwrap();
        assert_eq!(tv_value(&u, &cfg), 0.0);
        assert_eq!(tv_gradient(&u, &cfg).norm(), 0.0);
    }

    #[test]
    fn real_input_gives_real_gradient() {
        let u = volume(3, 6, |k, j, i| Complex64::new(((k * 7 + j * 3 + i) as f64).sin(), 0.0));
        let cfg = TvConfig::for_grid(u.grid(), 1e-3).unwrap();
        assert!(tv_gradient(&u, &cfg).values().iter().all(|c| c.im == 0.0));
    }

    #[test]
    fn homogeneous_of_degree_one() {
        let u = volume(3, 6, |k, j, i| Complex64::new((k + j) as f64, (i * j) as f64 * 0.1));
        let cfg = TvConfig::for_grid(u.grid(), 1e-3).unwrap();
        let a = tv_value(&u, &cfg);
        let b = tv_value(&u.scaled(2.5), &cfg);
        assert!((b - 2.5 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(TvConfig::new(0.0, (1.0, 1.0, 1.0)).is_err());
        assert!(TvConfig::new(1e-3, (1.0, 0.0, 1.0)).is_err());
        let g = GridSpec::new(4, 4, 0.5, 0.5, 1.0, 0.65, 0.5, 1.0).unwrap();
        let z = FieldVolume::zeros(g, AxialBox::new(2, 3.0, 1.0).unwrap());
        assert!(TvConfig::relative_to(&z).unwrap().epsilon > 0.0);
    }
}
