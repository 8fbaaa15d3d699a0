//! TOML run configuration.
//!
//! Every key is optional; defaults describe the 40x microscope and a
//! single-cell scene. Unknown keys are rejected and validation failures
//! report the line of the offending key.
//!
//! ```toml
//! seed = 0
//!
//! [grid]
//! nx = 280
//! ny = 280
//! sensor_pitch = 3.45     # um; dx = dy = sensor_pitch / magnification
//! magnification = 40.0
//! wavelength = 0.65
//! na = 0.75
//!
//! [box]
//! nz = 5
//! dz = 0.75
//! z_center = 9.0          # omitted: simulate uses 9.0, reconstruct uses the focus
//!
//! [phantom]
//! scene = "standard"      # "standard", "two-cell" or "custom"
//! [[phantom.cells]]       # only with scene = "custom"
//! center = [0.0, 0.0]
//! radius = 3.5
//! peak_phase = 1.5
//! slices = [1, 3]
//!
//! [hologram]
//! tilt = [70, 70]         # reference tilt, frequency bins
//! mask_radius = 30.0      # bins around the carrier
//! reference_amplitude = 1.0
//! illumination = 1.0
//! # snr_db = 30.0
//! # quantize_bits = 16
//! # input = "hologram.htf"  (or a grayscale .png)
//!
//! [processing]
//! # window_radius_px = 56.0   omitted: 40% of the half-width
//! flat_window = false
//! # contrast_radius_px = 65   omitted: round(65 nx / 280)
//! z_min = 0.0
//! z_max = 18.0
//! z_step = 0.75
//!
//! [tv]
//! # epsilon = 1e-3            omitted: 1e-3 max |u0|
//!
//! [mgd]
//! max_iters = 500
//! theta_stop = 2.8
//! theta_patience = 20
//! noise_amplitude = 0.01
//! weights = true
//! [mgd.schedule]
//! t_init_factor = 0.1
//! decay = 0.5
//! window = 10
//! min_increases = 5
//! floor_factor = 1e-6
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{AxialBox, GridSpec};
use crate::holo::{CarrierSpec, GaussianWindow};
use crate::mgd::{MgdConfig, StepSchedule};
use crate::phantom::{
    scene_reference, standard_scene, two_cell_scene, CellSpec, HologramSimSpec, PhantomSpec, ReferenceWave,
};
use crate::pipeline::{FocusLadder, ReconstructionConfig};

const DEFAULT_Z_CENTER: f64 = 9.0;

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    nx: usize,
    ny: usize,
    sensor_pitch: f64,
    magnification: f64,
    wavelength: f64,
    na: f64,
}

impl Default for RawGrid {
    fn default() -> Self {
        RawGrid {
            nx: 280,
            ny: 280,
            sensor_pitch: 3.45,
            magnification: 40.0,
            wavelength: 0.65,
            na: 0.75,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawBox {
    nz: usize,
    dz: f64,
    z_center: Option<f64>,
}

impl Default for RawBox {
    fn default() -> Self {
        RawBox {
            nz: 5,
            dz: 0.75,
            z_center: None,
        }
    }
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum Scene {
    Standard,
    TwoCell,
    Custom,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPhantom {
    scene: Scene,
    cells: Vec<CellSpec>,
}

impl Default for RawPhantom {
    fn default() -> Self {
        RawPhantom {
            scene: Scene::Standard,
            cells: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawHologram {
    tilt: (i64, i64),
    mask_radius: Option<f64>,
    reference_amplitude: f64,
    illumination: f64,
    snr_db: Option<f64>,
    quantize_bits: Option<u32>,
    input: Option<PathBuf>,
}

impl Default for RawHologram {
    fn default() -> Self {
        let (r, c) = scene_reference();
        RawHologram {
            tilt: r.tilt,
            mask_radius: c.mask_radius,
            reference_amplitude: r.amplitude,
            illumination: 1.0,
            snr_db: None,
            quantize_bits: None,
            input: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawProcessing {
    window_radius_px: Option<f64>,
    flat_window: bool,
    contrast_radius_px: Option<usize>,
    z_min: f64,
    z_max: f64,
    z_step: f64,
}

impl Default for RawProcessing {
    fn default() -> Self {
        let l = FocusLadder::default();
        RawProcessing {
            window_radius_px: None,
            flat_window: false,
            contrast_radius_px: None,
            z_min: l.z_min,
            z_max: l.z_max,
            z_step: l.z_step,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawTv {
    epsilon: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMgd {
    max_iters: usize,
    theta_stop: f64,
    theta_patience: usize,
    t_init: Option<f64>,
    noise_amplitude: f64,
    weights: bool,
    schedule: StepSchedule,
}

impl Default for RawMgd {
    fn default() -> Self {
        let m = MgdConfig::default();
        RawMgd {
            max_iters: m.max_iters,
            theta_stop: m.theta_stop,
            theta_patience: m.theta_patience,
            t_init: m.t_init,
            noise_amplitude: m.noise_amplitude,
            weights: true,
            schedule: m.schedule,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput { dir: "out".into() }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    seed: u64,
    grid: RawGrid,
    #[serde(rename = "box")]
    axial: RawBox,
    phantom: RawPhantom,
    hologram: RawHologram,
    processing: RawProcessing,
    tv: RawTv,
    mgd: RawMgd,
    output: RawOutput,
}

/// Validated configuration for every subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSpec,
    pub nz: usize,
    pub dz: f64,
    pub z_center: Option<f64>,
    pub scene: Scene,
    pub cells: Vec<CellSpec>,
    pub reference: ReferenceWave,
    pub carrier: CarrierSpec,
    pub illumination: f64,
    pub snr_db: Option<f64>,
    pub quantize_bits: Option<u32>,
    pub input: Option<PathBuf>,
    pub reconstruction: ReconstructionConfig,
    pub output_dir: PathBuf,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (or of the section header when the key
/// is absent).
fn locate(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some(k) = key {
                if let Some(rest) = line.strip_prefix(k) {
                    if rest.trim_start().starts_with('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
    }
    header
}

struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    /// Attributes `err` to the first of `keys` named in its message.
    fn wrap(&self, section: &str, keys: &[&str], err: Error) -> Error {
        let message = err.to_string();
        let key = keys.iter().find(|k| message.contains(*k)).copied();
        match locate(self.text, section, key) {
            Some(line) => Error::ConfigAt { line, message },
            None => Error::Config(message),
        }
    }

    fn check(&self, section: &str, key: &str, ok: bool, message: String) -> Result<()> {
        if ok {
            return Ok(());
        }
        Err(match locate(self.text, section, Some(key)) {
            Some(line) => Error::ConfigAt { line, message },
            None => Error::Config(message),
        })
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_in(text, Path::new("."))
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_in(&text, base)
    }

    fn parse_in(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => Error::ConfigAt {
                line: line_of_offset(text, span.start),
                message: e.message().to_string(),
            },
            None => Error::Config(e.message().to_string()),
        })?;
        let loc = Locator { text };

        let g = &raw.grid;
        let grid_keys = ["nx", "ny", "sensor_pitch", "magnification", "wavelength", "na", "dz"];
        loc.check(
            "grid",
            "magnification",
            g.magnification > 0.0,
            format!("magnification must be positive (got {})", g.magnification),
        )?;
        let pitch = g.sensor_pitch / g.magnification;
        let grid = GridSpec::new(
            g.nx,
            g.ny,
            pitch,
            pitch,
            raw.axial.dz,
            g.wavelength,
            g.na,
            g.magnification,
        )
        .map_err(|e| match e.to_string().contains("dz") {
            true => loc.wrap("box", &["dz"], e),
            false => loc.wrap("grid", &grid_keys, e),
        })?;
        loc.check(
            "grid",
            "sensor_pitch",
            g.sensor_pitch > 0.0,
            format!("sensor_pitch must be positive (got {})", g.sensor_pitch),
        )?;

        let b = &raw.axial;
        AxialBox::new(b.nz, b.z_center.unwrap_or(DEFAULT_Z_CENTER), b.dz)
            .map_err(|e| loc.wrap("box", &["nz", "z_center", "dz"], e))?;

        let p = &raw.phantom;
        loc.check(
            "phantom",
            "cells",
            p.scene == Scene::Custom || p.cells.is_empty(),
            "cells are only read with scene = \"custom\"".into(),
        )?;

        let h = &raw.hologram;
        let reference = ReferenceWave {
            tilt: h.tilt,
            amplitude: h.reference_amplitude,
        };
        let mut carrier = reference.carrier();
        carrier.mask_radius = h.mask_radius;
        carrier.validate(&grid).map_err(|e| {
            let key = if e.to_string().contains("mask radius") {
                "mask_radius"
            } else {
                "tilt"
            };
            loc.wrap(
                "hologram",
                &[key],
                Error::Config(e.to_string().replace("mask radius", key)),
            )
        })?;
        loc.check(
            "hologram",
            "reference_amplitude",
            h.reference_amplitude > 0.0 && h.reference_amplitude.is_finite(),
            format!("reference_amplitude must be positive (got {})", h.reference_amplitude),
        )?;
        loc.check(
            "hologram",
            "illumination",
            h.illumination >= 0.0 && h.illumination.is_finite(),
            format!("illumination must be >= 0 (got {})", h.illumination),
        )?;
        if let Some(s) = h.snr_db {
            loc.check(
                "hologram",
                "snr_db",
                s.is_finite(),
                format!("snr_db must be finite (got {s})"),
            )?;
        }
        if let Some(q) = h.quantize_bits {
            loc.check(
                "hologram",
                "quantize_bits",
                (1..=32).contains(&q),
                format!("quantize_bits must be 1..=32 (got {q})"),
            )?;
        }

        let pr = &raw.processing;
        if let Some(w) = pr.window_radius_px {
            loc.check(
                "processing",
                "window_radius_px",
                w > 0.0,
                format!("window_radius_px must be positive (got {w})"),
            )?;
        }
        if let Some(r) = pr.contrast_radius_px {
            loc.check(
                "processing",
                "contrast_radius_px",
                r > 0 && r <= grid.nx.min(grid.ny) / 2,
                format!(
                    "contrast_radius_px must lie in 1..={} (got {r})",
                    grid.nx.min(grid.ny) / 2
                ),
            )?;
        }
        loc.check(
            "processing",
            "z_min",
            pr.z_min >= 0.0,
            format!("z_min must be >= 0 (got {})", pr.z_min),
        )?;
        loc.check(
            "processing",
            "z_max",
            pr.z_max > pr.z_min,
            format!("z_max must exceed z_min (got {})", pr.z_max),
        )?;
        loc.check(
            "processing",
            "z_step",
            pr.z_step > 0.0,
            format!("z_step must be positive (got {})", pr.z_step),
        )?;
        if let Some(eps) = raw.tv.epsilon {
            loc.check(
                "tv",
                "epsilon",
                eps > 0.0 && eps.is_finite(),
                format!("epsilon must be positive (got {eps})"),
            )?;
        }

        let m = &raw.mgd;
        let mgd = MgdConfig {
            max_iters: m.max_iters,
            theta_stop: m.theta_stop,
            theta_patience: m.theta_patience,
            t_init: m.t_init,
            schedule: m.schedule,
            noise_amplitude: m.noise_amplitude,
            weights: None,
            rng_seed: raw.seed,
        };
        mgd.validate().map_err(|e| {
            let message = e.to_string();
            let schedule_keys = ["t_init_factor", "decay", "min_increases", "window", "floor_factor"];
            match schedule_keys.iter().find(|k| message.contains(*k)) {
                Some(k) => match locate(text, "mgd.schedule", Some(k)) {
                    Some(line) => Error::ConfigAt { line, message },
                    None => Error::Config(message),
                },
                None => loc.wrap(
                    "mgd",
                    &["max_iters", "theta_stop", "theta_patience", "t_init", "noise_amplitude"],
                    e,
                ),
            }
        })?;

        let window = if pr.flat_window {
            Some(GaussianWindow::flat())
        } else {
            pr.window_radius_px.map(GaussianWindow::new)
        };
        let reconstruction = ReconstructionConfig {
            window,
            contrast_radius_px: pr.contrast_radius_px,
            ladder: FocusLadder {
                z_min: pr.z_min,
                z_max: pr.z_max,
                z_step: pr.z_step,
            },
            nz: b.nz,
            dz: b.dz,
            z_center: b.z_center,
            use_weights: m.weights,
            tv_epsilon: raw.tv.epsilon,
            mgd,
        };

        let config = RunConfig {
            seed: raw.seed,
            grid,
            nz: b.nz,
            dz: b.dz,
            z_center: b.z_center,
            scene: p.scene,
            cells: p.cells.clone(),
            reference,
            carrier,
            illumination: h.illumination,
            snr_db: h.snr_db,
            quantize_bits: h.quantize_bits,
            input: h.input.as_ref().map(|i| base.join(i)),
            reconstruction,
            output_dir: raw.output.dir,
        };
        config
            .phantom_spec()
            .validate()
            .map_err(|e| loc.wrap("phantom.cells", &["radius", "slices", "phase", "center", "dip"], e))?;
        Ok(config)
    }

    /// Applies a seed override to both the hologram noise and the initial
    /// guess.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.reconstruction.mgd.rng_seed = seed;
    }

    pub fn axial_box(&self) -> Result<AxialBox> {
        AxialBox::new(self.nz, self.z_center.unwrap_or(DEFAULT_Z_CENTER), self.dz)
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        let cells = match self.scene {
            Scene::Standard => standard_scene().cells,
            Scene::TwoCell => two_cell_scene().cells,
            Scene::Custom => self.cells.clone(),
        };
        PhantomSpec {
            cells,
            grid: self.grid,
            axial: self.axial_box().unwrap_or(AxialBox {
                nz: self.nz,
                z_center: DEFAULT_Z_CENTER,
                dz: self.dz,
            }),
        }
    }

    pub fn simulation(&self) -> HologramSimSpec {
        HologramSimSpec {
            reference: self.reference,
            illumination: self.illumination,
            snr_db: self.snr_db,
            quantize_bits: self.quantize_bits,
            seed: self.seed,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("defaults are valid")
    }
}
