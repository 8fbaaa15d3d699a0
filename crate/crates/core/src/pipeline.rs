//! End-to-end reconstruction: demodulation, autofocus, weights and MGD.
//!
//! Autofocus and weights are evaluated on the demodulated field, which still
//! carries the unscattered illumination; a weak phase object then shows its
//! lowest amplitude contrast at focus. The optimizer sees the
//! background-subtracted, windowed field projected back onto the NA band.

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AxialBox, Field2D};
use crate::holo::{
    compute_weights, default_contrast_radius, demodulate_ftm, focus_scan, subtract_background, CarrierSpec, FocusScan,
    GaussianWindow, Hologram, WeightVector,
};
use crate::mgd::{run_mgd_with, HistoryRecord, MgdConfig, MgdRun};
use crate::propagation::band_limit;
use crate::tv::TvConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusLadder {
    pub z_min: f64,
    pub z_max: f64,
    pub z_step: f64,
}

impl Default for FocusLadder {
    fn default() -> Self {
        FocusLadder {
            z_min: 0.0,
            z_max: 18.0,
            z_step: 0.75,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionConfig {
    pub window: Option<GaussianWindow>,
    pub contrast_radius_px: Option<usize>,
    pub ladder: FocusLadder,
    pub nz: usize,
    pub dz: f64,
    /// Box center; `None` uses the focus found by the scan.
    pub z_center: Option<f64>,
    pub use_weights: bool,
    pub tv_epsilon: Option<f64>,
    pub mgd: MgdConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            window: None,
            contrast_radius_px: None,
            ladder: FocusLadder::default(),
            nz: 5,
            dz: 0.75,
            z_center: None,
            use_weights: true,
            tv_epsilon: None,
            mgd: MgdConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub demodulated: Field2D,
    /// Data handed to the optimizer.
    pub data: Field2D,
    pub scan: FocusScan,
    pub axial: AxialBox,
    pub weights: Option<WeightVector>,
    pub run: MgdRun,
}

/// `band_limit(subtract_background(d))`.
pub fn prepare_data(d: &Field2D, window: &GaussianWindow) -> Result<Field2D> {
    band_limit(&subtract_background(d, window))
}

pub fn demodulate(h: &Hologram, carrier: &CarrierSpec) -> Result<Field2D> {
    demodulate_ftm(h, carrier)
}

pub fn reconstruct_hologram(
    h: &Hologram,
    carrier: &CarrierSpec,
    cfg: &ReconstructionConfig,
    observer: impl FnMut(&HistoryRecord),
) -> Result<Reconstruction> {
    let d = demodulate(h, carrier)?;
    reconstruct_field(d, cfg, observer)
}

pub fn reconstruct_field(
    demodulated: Field2D,
    cfg: &ReconstructionConfig,
    observer: impl FnMut(&HistoryRecord),
) -> Result<Reconstruction> {
    let grid = *demodulated.grid();
    let radius = cfg.contrast_radius_px.unwrap_or_else(|| default_contrast_radius(&grid)) as i64;
    let scan = focus_scan(
        &demodulated,
        cfg.ladder.z_min,
        cfg.ladder.z_max,
        cfg.ladder.z_step,
        radius,
    )?;
    info!("focus at z = {} um", scan.z_focus);
    let axial = AxialBox::new(cfg.nz, cfg.z_center.unwrap_or(scan.z_focus), cfg.dz)?;

    let weights = if cfg.use_weights {
        let w = compute_weights(&demodulated, &axial, radius)?;
        info!("slice weights {:?}", w.as_slice());
        Some(w)
    } else {
        None
    };
    let window = cfg.window.unwrap_or_else(|| GaussianWindow::default_for(&grid));
    let data = prepare_data(&demodulated, &window)?;
    if data.norm_sqr() == 0.0 {
        return Err(Error::ZeroField);
    }

    let mut mgd = cfg.mgd.clone();
    mgd.weights = weights.clone();
    let mut tv_grid = grid;
    tv_grid.dz = axial.dz;
    let tv = match cfg.tv_epsilon {
        Some(eps) => Some(TvConfig::for_grid(&tv_grid, eps)?),
        None => None,
    };
    let run = run_mgd_with(&data, &axial, tv, &mgd, observer)?;
    Ok(Reconstruction {
        demodulated,
        data,
        scan,
        axial,
        weights,
        run,
    })
}
