//! Hologram demodulation, background removal, amplitude-contrast autofocus
//! and inverse-contrast slice weights.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{bin_index, signed_bin, Fft2};
use crate::field::{AxialBox, Field2D, GridSpec};
use crate::propagation::make_kernel;

/// Recorded off-axis intensity, `(ny, nx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hologram {
    grid: GridSpec,
    intensity: Array2<f64>,
}

impl Hologram {
    pub fn new(grid: GridSpec, intensity: Array2<f64>) -> Result<Self> {
        grid.validate()?;
        if intensity.dim() != (grid.ny, grid.nx) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", grid.ny, grid.nx),
                actual: format!("{:?}", intensity.dim()),
            });
        }
        if let Some((i, v)) = intensity.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hologram intensity must be finite and nonnegative (index {i}: {v})"
            )));
        }
        Ok(Hologram { grid, intensity })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn intensity(&self) -> &Array2<f64> {
        &self.intensity
    }
}

/// Which cross-term lobe to keep.
///
/// `tilt` is the reference-wave tilt in frequency bins `(kx, ky)`; the object
/// lobe sits at `(-kx, -ky)`. The mask radius is also in bins and defaults to
/// half the carrier magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarrierSpec {
    pub tilt: (i64, i64),
    pub mask_radius: Option<f64>,
}

impl CarrierSpec {
    pub fn new(kx: i64, ky: i64) -> Self {
        CarrierSpec {
            tilt: (kx, ky),
            mask_radius: None,
        }
    }

    pub fn with_mask_radius(mut self, r: f64) -> Self {
        self.mask_radius = Some(r);
        self
    }

    pub fn magnitude(&self) -> f64 {
        (self.tilt.0 as f64).hypot(self.tilt.1 as f64)
    }

    pub fn radius(&self) -> f64 {
        self.mask_radius.unwrap_or(self.magnitude() / 2.0)
    }

    /// Rejects carriers at or past Nyquist and masks that reach the
    /// autocorrelation lobe around DC.
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let (kx, ky) = self.tilt;
        if kx.unsigned_abs() as usize >= grid.nx / 2 || ky.unsigned_abs() as usize >= grid.ny / 2 {
            return Err(Error::CarrierNyquist(format!(
                "tilt ({kx}, {ky}) bins on a {}x{} grid",
                grid.nx, grid.ny
            )));
        }
        let r = self.radius();
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mask radius must be positive (got {r})"
            )));
        }
        if 2.0 * r > self.magnitude() {
            return Err(Error::CarrierSeparation(format!(
                "mask radius {r:.2} bins around a carrier {:.2} bins from DC",
                self.magnitude()
            )));
        }
        Ok(())
    }
}

/// Isolates the object cross-term, shifts it to baseband and inverse
/// transforms. The result is the object field times the conjugate of the
/// (flat) reference amplitude.
pub fn demodulate_ftm(h: &Hologram, carrier: &CarrierSpec) -> Result<Field2D> {
    let g = *h.grid();
    carrier.validate(&g)?;
    let (kx, ky) = carrier.tilt;
    let r2 = carrier.radius().powi(2);
    let mut spectrum = h.intensity.mapv(|v| Complex64::new(v, 0.0));
    Fft2::forward(g.ny, g.nx).process(&mut spectrum);

    let mut shifted = Array2::<Complex64>::zeros((g.ny, g.nx));
    for iy in 0..g.ny {
        // offset from the lobe center, wrapped onto the periodic spectrum
        let dy = signed_bin(bin_index(signed_bin(iy, g.ny) + ky, g.ny), g.ny);
        for ix in 0..g.nx {
            let dx = signed_bin(bin_index(signed_bin(ix, g.nx) + kx, g.nx), g.nx);
            if (dx * dx + dy * dy) as f64 <= r2 {
                shifted[[bin_index(dy, g.ny), bin_index(dx, g.nx)]] = spectrum[[iy, ix]];
            }
        }
    }
    Fft2::inverse(g.ny, g.nx).process(&mut shifted);
    Ok(Field2D::from_parts(g, shifted))
}

/// Strongest off-DC spectral peak, reported as a reference tilt in the half
/// plane `kx > 0` (or `kx == 0, ky > 0`).
pub fn detect_carrier(h: &Hologram, dc_exclusion: f64) -> Result<CarrierSpec> {
    let g = *h.grid();
    let mut spectrum = h.intensity.mapv(|v| Complex64::new(v, 0.0));
    Fft2::forward(g.ny, g.nx).process(&mut spectrum);
    let mut best: Option<((i64, i64), f64)> = None;
    for ((iy, ix), c) in spectrum.indexed_iter() {
        let (bx, by) = (signed_bin(ix, g.nx), signed_bin(iy, g.ny));
        if !(bx > 0 || (bx == 0 && by > 0)) {
            continue;
        }
        if ((bx * bx + by * by) as f64).sqrt() <= dc_exclusion {
            continue;
        }
        let m = c.norm_sqr();
        if best.is_none_or(|(_, b)| m > b) {
            best = Some(((bx, by), m));
        }
    }
    let ((kx, ky), _) = best.ok_or_else(|| Error::CarrierSeparation("no off-DC peak".into()))?;
    Ok(CarrierSpec::new(kx, ky))
}

/// Centered Gaussian window with the given 1/e^2 radius in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianWindow {
    pub radius_px: f64,
}

impl GaussianWindow {
    pub fn new(radius_px: f64) -> Self {
        GaussianWindow { radius_px }
    }

    /// 40 % of the half-width of the smaller grid axis.
    pub fn default_for(grid: &GridSpec) -> Self {
        GaussianWindow::new(0.4 * (grid.nx.min(grid.ny) as f64) / 2.0)
    }

    /// A window that leaves the field untouched.
    pub fn flat() -> Self {
        GaussianWindow::new(f64::INFINITY)
    }

    pub fn weights(&self, grid: &GridSpec) -> Array2<f64> {
        let (cx, cy) = ((grid.nx / 2) as f64, (grid.ny / 2) as f64);
        let w2 = self.radius_px * self.radius_px;
        Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
            let r2 = (ix as f64 - cx).powi(2) + (iy as f64 - cy).powi(2);
            (-2.0 * r2 / w2).exp()
        })
    }
}

/// `(v - mean(v)) * G`.
pub fn subtract_background(v: &Field2D, window: &GaussianWindow) -> Field2D {
    let mean = v.mean();
    let g = window.weights(v.grid());
    let mut out = v.values().to_owned();
    Zip::from(&mut out).and(&g).for_each(|c, w| *c = (*c - mean) * *w);
    Field2D::from_parts(*v.grid(), out)
}

/// Default central-window radius: 65 px scaled from a 280 px field of view.
pub fn default_contrast_radius(grid: &GridSpec) -> usize {
    ((65.0 * grid.nx as f64 / 280.0).round() as usize).max(1)
}

fn check_radius(grid: &GridSpec, radius_px: i64) -> Result<()> {
    if radius_px <= 0 {
        return Err(Error::InvalidParameter(format!(
            "contrast window radius must be positive (got {radius_px})"
        )));
    }
    let limit = grid.nx.min(grid.ny) / 2;
    if radius_px as usize > limit {
        return Err(Error::InvalidParameter(format!(
            "contrast window radius {radius_px} exceeds half the grid ({limit})"
        )));
    }
    Ok(())
}

/// Square root of the population standard deviation of `|v|` over the
/// pixels within `radius_px` of the grid center.
pub fn amplitude_contrast(v: &Field2D, radius_px: i64) -> Result<f64> {
    let g = *v.grid();
    check_radius(&g, radius_px)?;
    Ok(contrast_unchecked(v.values().view(), &g, radius_px as f64))
}

fn contrast_unchecked(values: ndarray::ArrayView2<'_, Complex64>, g: &GridSpec, radius: f64) -> f64 {
    let (cx, cy) = ((g.nx / 2) as f64, (g.ny / 2) as f64);
    let r2 = radius * radius;
    let amps: Vec<f64> = values
        .indexed_iter()
        .filter(|((iy, ix), _)| (*ix as f64 - cx).powi(2) + (*iy as f64 - cy).powi(2) <= r2)
        .map(|(_, c)| c.norm())
        .collect();
    let n = amps.len() as f64;
    let mean = amps.iter().sum::<f64>() / n;
    let var = amps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    var.sqrt().sqrt()
}

/// Back-propagates one detector field to many distances, sharing its spectrum.
struct Backpropagator {
    grid: GridSpec,
    spectrum: Array2<Complex64>,
    inv: Fft2,
}

impl Backpropagator {
    fn new(v: &Field2D) -> Result<Self> {
        v.check_finite()?;
        let g = *v.grid();
        let mut spectrum = v.values().to_owned();
        Fft2::forward(g.ny, g.nx).process(&mut spectrum);
        Ok(Backpropagator {
            grid: g,
            spectrum,
            inv: Fft2::inverse(g.ny, g.nx),
        })
    }

    fn at(&self, z: f64) -> Array2<Complex64> {
        let mut s = self.spectrum.clone();
        s *= &make_kernel(&self.grid, -z).transfer;
        self.inv.process(&mut s);
        s
    }

    fn contrast_at(&self, z: f64, radius: i64) -> f64 {
        contrast_unchecked(self.at(z).view(), &self.grid, radius as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusScan {
    pub z_list: Vec<f64>,
    /// Standard deviation of the back-propagated amplitude.
    pub sigma_list: Vec<f64>,
    /// `sqrt(sigma)`.
    pub contrast_list: Vec<f64>,
    pub z_focus: f64,
    pub window_radius_px: usize,
}

impl FocusScan {
    pub fn focus_index(&self) -> usize {
        argmin_first(&self.contrast_list)
    }

    /// Strictly decreasing up to the minimum, strictly increasing after it.
    pub fn is_unimodal(&self) -> bool {
        let i = self.focus_index();
        let c = &self.contrast_list;
        c[..=i].windows(2).all(|w| w[1] < w[0]) && c[i..].windows(2).all(|w| w[1] > w[0])
    }
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Evaluates the amplitude contrast of `v` back-propagated over
/// `z_min, z_min + z_step, ...` up to `z_max`. The smallest z wins ties.
pub fn focus_scan(v: &Field2D, z_min: f64, z_max: f64, z_step: f64, radius_px: i64) -> Result<FocusScan> {
    check_radius(v.grid(), radius_px)?;
    if !(z_min >= 0.0 && z_max > z_min && z_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "focus ladder needs 0 <= z_min < z_max and z_step > 0 (got {z_min}, {z_max}, {z_step})"
        )));
    }
    let count = ((z_max - z_min) / z_step + 1e-9).floor() as usize + 1;
    let z_list: Vec<f64> = (0..count).map(|i| z_min + i as f64 * z_step).collect();
    if z_list.is_empty() {
        return Err(Error::EmptyLadder);
    }
    let bp = Backpropagator::new(v)?;
    let contrast_list: Vec<f64> = z_list.par_iter().map(|&z| bp.contrast_at(z, radius_px)).collect();
    let sigma_list = contrast_list.iter().map(|c| c * c).collect();
    let z_focus = z_list[argmin_first(&contrast_list)];
    Ok(FocusScan {
        z_list,
        sigma_list,
        contrast_list,
        z_focus,
        window_radius_px: radius_px as usize,
    })
}

/// Per-slice weights `1 / sqrt(sigma)`, normalized to a maximum of 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn from_contrasts(contrasts: &[f64]) -> Result<Self> {
        if contrasts.is_empty() {
            return Err(Error::InvalidParameter("no contrasts".into()));
        }
        if let Some(j) = contrasts.iter().position(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::DegenerateContrast(j));
        }
        let cmin = contrasts.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(WeightVector {
            weights: contrasts.iter().map(|c| cmin / c).collect(),
        })
    }

    /// Explicit weights; every entry must lie in (0, 1].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && *w <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must lie in (0, 1]: {weights:?}"
            )));
        }
        Ok(WeightVector { weights })
    }

    pub fn ones(n: usize) -> Self {
        WeightVector { weights: vec![1.0; n] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Per-slice amplitude contrast of `v` back-propagated to every slice of
/// the box.
pub fn slice_contrasts(v: &Field2D, axial: &AxialBox, radius_px: i64) -> Result<Vec<f64>> {
    check_radius(v.grid(), radius_px)?;
    axial.validate()?;
    let bp = Backpropagator::new(v)?;
    Ok(axial
        .slice_positions()
        .par_iter()
        .map(|&z| bp.contrast_at(z, radius_px))
        .collect())
}

pub fn compute_weights(v: &Field2D, axial: &AxialBox, radius_px: i64) -> Result<WeightVector> {
    WeightVector::from_contrasts(&slice_contrasts(v, axial, radius_px)?)
}
