//! Synthetic cell phantoms and off-axis hologram synthesis.
//!
//! A cell contributes a total phase `phi(r) = peak * exp(-(r/R)^8)`, minus an
//! optional Gaussian dip. Its scattered field `exp(i phi) - 1` is shared
//! equally between the slices it occupies, and each share carries the phase
//! `exp(-i k (z_j - z_c))` so that all shares arrive in phase with the
//! illumination at the detector.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AxialBox, FieldVolume, GridSpec};
use crate::holo::{CarrierSpec, Hologram};
use crate::propagation::ForwardModel;

fn default_peak() -> f64 {
    1.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DipSpec {
    /// Micrometers from the grid center.
    pub center: (f64, f64),
    pub radius: f64,
    /// Phase removed at the dip center, radians.
    pub depth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    /// Micrometers from the grid center.
    pub center: (f64, f64),
    pub radius: f64,
    #[serde(default = "default_peak")]
    pub peak_phase: f64,
    /// Inclusive slice range `(first, last)`.
    pub slices: (usize, usize),
    #[serde(default)]
    pub dip: Option<DipSpec>,
}

impl CellSpec {
    pub fn disc(center: (f64, f64), radius: f64, slices: (usize, usize)) -> Self {
        CellSpec {
            center,
            radius,
            peak_phase: default_peak(),
            slices,
            dip: None,
        }
    }

    fn occupancy(&self) -> usize {
        self.slices.1 - self.slices.0 + 1
    }

    fn occupies(&self, j: usize) -> bool {
        (self.slices.0..=self.slices.1).contains(&j)
    }

    /// Total phase at `(x, y)` micrometers from the grid center.
    pub fn phase_at(&self, x: f64, y: f64) -> f64 {
        let r = (x - self.center.0).hypot(y - self.center.1) / self.radius;
        let mut phi = self.peak_phase * (-r.powi(8)).exp();
        if let Some(d) = &self.dip {
            let s = (x - d.center.0).hypot(y - d.center.1) / d.radius;
            phi -= d.depth * (-s * s).exp();
        }
        phi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub cells: Vec<CellSpec>,
    pub grid: GridSpec,
    pub axial: AxialBox,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.axial.validate()?;
        for (i, c) in self.cells.iter().enumerate() {
            let bad = |m: String| Err(Error::InvalidParameter(format!("cell {i}: {m}")));
            if !(c.radius > 0.0 && c.radius.is_finite()) {
                return bad(format!("radius must be positive (got {})", c.radius));
            }
            if !(c.peak_phase.is_finite() && c.center.0.is_finite() && c.center.1.is_finite()) {
                return bad("phase and center must be finite".into());
            }
            if c.slices.0 > c.slices.1 || c.slices.1 >= self.axial.nz {
                return bad(format!("slices {:?} outside 0..{}", c.slices, self.axial.nz));
            }
            if let Some(d) = &c.dip {
                if !(d.radius > 0.0 && d.radius.is_finite()) {
                    return bad(format!("dip radius must be positive (got {})", d.radius));
                }
                if !(d.depth.is_finite() && d.center.0.is_finite() && d.center.1.is_finite()) {
                    return bad("dip depth and center must be finite".into());
                }
            }
        }
        Ok(())
    }
}

/// Lateral coordinates in micrometers, zero at pixel `(nx/2, ny/2)`.
pub fn pixel_position(grid: &GridSpec, ix: usize, iy: usize) -> (f64, f64) {
    (
        (ix as f64 - (grid.nx / 2) as f64) * grid.dx,
        (iy as f64 - (grid.ny / 2) as f64) * grid.dy,
    )
}

/// Pixel nearest to a position in micrometers from the grid center.
pub fn position_pixel(grid: &GridSpec, x: f64, y: f64) -> (usize, usize) {
    let ix = (x / grid.dx).round() as i64 + (grid.nx / 2) as i64;
    let iy = (y / grid.dy).round() as i64 + (grid.ny / 2) as i64;
    (
        ix.clamp(0, grid.nx as i64 - 1) as usize,
        iy.clamp(0, grid.ny as i64 - 1) as usize,
    )
}

/// Summed total phase of the cells occupying slice `j`.
pub fn slice_phase(spec: &PhantomSpec, j: usize) -> Array2<f64> {
    let g = spec.grid;
    Array2::from_shape_fn((g.ny, g.nx), |(iy, ix)| {
        let (x, y) = pixel_position(&g, ix, iy);
        spec.cells
            .iter()
            .filter(|c| c.occupies(j))
            .map(|c| c.phase_at(x, y))
            .sum()
    })
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<FieldVolume> {
    spec.validate()?;
    let g = spec.grid;
    let k = g.wavenumber();
    let mut u = FieldVolume::zeros(spec.grid, spec.axial);
    for cell in &spec.cells {
        let share = 1.0 / cell.occupancy() as f64;
        let scattered = Array2::from_shape_fn((g.ny, g.nx), |(iy, ix)| {
            let (x, y) = pixel_position(&g, ix, iy);
            (Complex64::from_polar(1.0, cell.phase_at(x, y)) - 1.0) * share
        });
        for (j, mut slice) in u.values_mut().axis_iter_mut(Axis(0)).enumerate() {
            if cell.occupies(j) {
                let carrier = Complex64::from_polar(1.0, -k * (spec.axial.slice_z(j) - spec.axial.z_center));
                slice.scaled_add(carrier, &scattered);
            }
        }
    }
    Ok(u)
}

/// Tilted plane reference wave. `tilt` is in frequency bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceWave {
    pub tilt: (i64, i64),
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

impl ReferenceWave {
    pub fn at(&self, grid: &GridSpec, ix: usize, iy: usize) -> Complex64 {
        let arg = 2.0
            * PI
            * (self.tilt.0 as f64 * ix as f64 / grid.nx as f64 + self.tilt.1 as f64 * iy as f64 / grid.ny as f64);
        Complex64::from_polar(self.amplitude, arg)
    }

    pub fn carrier(&self) -> CarrierSpec {
        CarrierSpec::new(self.tilt.0, self.tilt.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HologramSimSpec {
    pub reference: ReferenceWave,
    /// Amplitude of the unscattered illumination at the detector. Zero
    /// records `|r + A u|^2`.
    pub illumination: f64,
    pub snr_db: Option<f64>,
    pub quantize_bits: Option<u32>,
    pub seed: u64,
}

impl HologramSimSpec {
    pub fn noiseless(reference: ReferenceWave) -> Self {
        HologramSimSpec {
            reference,
            illumination: 1.0,
            snr_db: None,
            quantize_bits: None,
            seed: 0,
        }
    }
}

/// Object beam at the detector: illumination plus scattered field.
pub fn detector_field(u: &FieldVolume, illumination: f64) -> Result<crate::field::Field2D> {
    let model = ForwardModel::for_volume(u)?;
    let mut v = model.forward(u)?;
    let b = Complex64::from_polar(illumination, u.grid().wavenumber() * u.z_center());
    v.values_mut().mapv_inplace(|c| c + b);
    Ok(v)
}

pub fn simulate_hologram(u: &FieldVolume, spec: &HologramSimSpec) -> Result<Hologram> {
    let g = *u.grid();
    let (kx, ky) = spec.reference.tilt;
    if kx.unsigned_abs() as usize >= g.nx / 2 || ky.unsigned_abs() as usize >= g.ny / 2 {
        return Err(Error::CarrierNyquist(format!(
            "tilt ({kx}, {ky}) bins on a {}x{} grid",
            g.nx, g.ny
        )));
    }
    if !(spec.reference.amplitude.is_finite() && spec.illumination.is_finite()) {
        return Err(Error::InvalidParameter("amplitudes must be finite".into()));
    }
    let obj = detector_field(u, spec.illumination)?;
    let mut intensity = Array2::from_shape_fn((g.ny, g.nx), |(iy, ix)| {
        (spec.reference.at(&g, ix, iy) + obj.values()[[iy, ix]]).norm_sqr()
    });

    if let Some(snr) = spec.snr_db {
        if !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("snr_db must be finite (got {snr})")));
        }
        let power = intensity.iter().map(|v| v * v).sum::<f64>() / intensity.len() as f64;
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        intensity.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(0.0));
    }

    if let Some(bits) = spec.quantize_bits {
        if !(1..=32).contains(&bits) {
            return Err(Error::InvalidParameter(format!(
                "quantize_bits must be 1..=32 (got {bits})"
            )));
        }
        let levels = ((1u64 << bits) - 1) as f64;
        let peak = intensity.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            intensity.mapv_inplace(|v| (v / peak * levels).round() * peak / levels);
        }
    }
    Hologram::new(g, intensity)
}

/// Empirical SNR of `noisy` against `clean` in dB.
pub fn measured_snr_db(clean: &Hologram, noisy: &Hologram) -> f64 {
    let signal: f64 = clean.intensity().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .intensity()
        .iter()
        .zip(noisy.intensity().iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    10.0 * (signal / noise).log10()
}

/// Reference scene: one disc cell of radius 3.5 um in the three central
/// slices of a 280x280x5 box centered 9 um from the detector.
pub fn standard_scene() -> PhantomSpec {
    PhantomSpec {
        cells: vec![CellSpec::disc((0.0, 0.0), 3.5, (1, 3))],
        grid: GridSpec::microscope(280),
        axial: AxialBox::new(5, 9.0, 0.75).expect("valid box"),
    }
}

/// Two cells side by side; the right one carries a localized phase dip.
pub fn two_cell_scene() -> PhantomSpec {
    let mut infected = CellSpec::disc((5.5, 0.0), 3.5, (1, 3));
    infected.dip = Some(DipSpec {
        center: (6.2, 0.9),
        radius: 0.8,
        depth: 0.8,
    });
    PhantomSpec {
        cells: vec![CellSpec::disc((-5.5, 0.0), 3.5, (1, 3)), infected],
        grid: GridSpec::microscope(280),
        axial: AxialBox::new(5, 9.0, 0.75).expect("valid box"),
    }
}

/// Reference used with the scene presets; the mask radius covers the NA
/// band and stays clear of the autocorrelation lobe.
pub fn scene_reference() -> (ReferenceWave, CarrierSpec) {
    let r = ReferenceWave {
        tilt: (70, 70),
        amplitude: 1.0,
    };
    (r, r.carrier().with_mask_radius(30.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::volume_energy_profile;

    fn small(cells: Vec<CellSpec>) -> PhantomSpec {
        PhantomSpec {
            cells,
            grid: GridSpec::new(32, 32, 0.25, 0.25, 0.75, 0.65, 0.75, 40.0).unwrap(),
            axial: AxialBox::new(5, 9.0, 0.75).unwrap(),
        }
    }

    #[test]
    fn empty_scene_is_zero() {
        let u = make_phantom(&small(vec![])).unwrap();
        assert_eq!(u.norm(), 0.0);
    }

    #[test]
    fn single_slice_occupancy() {
        let u = make_phantom(&small(vec![CellSpec::disc((0.0, 0.0), 2.0, (2, 2))])).unwrap();
        let e = volume_energy_profile(&u);
        for (j, ej) in e.iter().enumerate() {
            assert_eq!(*ej > 0.0, j == 2, "slice {j}");
        }
    }

    #[test]
    fn peak_phase_reached_at_center() {
        let spec = small(vec![CellSpec::disc((0.0, 0.0), 2.0, (1, 3))]);
        let p = slice_phase(&spec, 2);
        let max = p.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 1.5).abs() < 1e-12);
        assert_eq!(slice_phase(&spec, 0).iter().cloned().fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(make_phantom(&small(vec![CellSpec::disc((0.0, 0.0), 0.0, (1, 1))])).is_err());
        assert!(make_phantom(&small(vec![CellSpec::disc((0.0, 0.0), 1.0, (1, 5))])).is_err());
        assert!(make_phantom(&small(vec![CellSpec::disc((0.0, 0.0), 1.0, (3, 1))])).is_err());
    }

    #[test]
    fn carrier_at_nyquist_rejected() {
        let u = make_phantom(&small(vec![])).unwrap();
        let spec = HologramSimSpec::noiseless(ReferenceWave {
            tilt: (16, 0),
            amplitude: 1.0,
        });
        assert!(matches!(simulate_hologram(&u, &spec), Err(Error::CarrierNyquist(_))));
    }

    #[test]
    fn empty_object_gives_flat_intensity() {
        let u = make_phantom(&small(vec![])).unwrap();
        let mut spec = HologramSimSpec::noiseless(ReferenceWave {
            tilt: (6, 3),
            amplitude: 1.3,
        });
        spec.illumination = 0.0;
        let h = simulate_hologram(&u, &spec).unwrap();
        assert!(h.intensity().iter().all(|v| (v - 1.69).abs() < 1e-12));
    }
}
