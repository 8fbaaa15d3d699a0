//! Command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or file error,
//! 4 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::field::{peripheral_energy_fraction, volume_energy_profile, Field2D, FieldVolume};
use crate::holo::{default_contrast_radius, focus_scan, GaussianWindow, Hologram};
use crate::io::format::{read_stored, write_field, write_volume, Stored};
use crate::io::image::{write_colormap_png, write_gray16_png, write_gray_png};
use crate::io::tables::{write_focus_scan, write_history};
use crate::io::{read_hologram, write_hologram, RunConfig};
use crate::phantom::{make_phantom, simulate_hologram};
use crate::pipeline::{demodulate, prepare_data, reconstruct_field, Reconstruction};
use crate::propagation::propagate;
use crate::unwrap::unwrap_phase;

#[derive(Parser, Debug)]
#[command(
    name = "holotomo",
    version,
    about = "3D complex field reconstruction from a single off-axis hologram"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for hologram noise and the initial guess.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Inverse-contrast slice weighting.
    #[arg(long, global = true, value_enum)]
    pub weights: Option<Switch>,
    /// Iteration cap for mean gradient descent.
    #[arg(long, global = true, value_name = "N")]
    pub max_iters: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Switch {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// PNG files and real, nonnegative HTF1 fields are holograms; anything
    /// else is a demodulated field.
    Auto,
    Hologram,
    Field,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Hologram (.htf or grayscale .png) or demodulated field (.htf);
    /// defaults to `hologram.input` from the config.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub input_kind: InputKind,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the configured phantom and record its hologram.
    Simulate,
    /// Demodulate a hologram and prepare the optimizer input.
    Demodulate(InputArgs),
    /// Amplitude-contrast focus scan.
    Focus(InputArgs),
    /// Full pipeline: demodulate, focus, weights, mean gradient descent.
    Reconstruct(InputArgs),
    /// Print dimensions, norms and per-slice energies of a field file.
    Inspect {
        file: PathBuf,
        /// Back-propagation sweep `z_min:z_max:z_step` rendered as an x-z
        /// amplitude image through the central row (2D fields only).
        #[arg(long, value_name = "RANGE")]
        sweep: Option<String>,
    },
    /// Write amplitude and unwrapped-phase PNGs for every slice of a file.
    Export { file: PathBuf },
}

/// Maps library errors to process exit codes.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ConfigAt { .. } | Error::InvalidParameter(_) => 2,
        Error::InvalidGrid(_)
        | Error::ShapeMismatch { .. }
        | Error::GridMismatch
        | Error::CarrierSeparation(_)
        | Error::CarrierNyquist(_)
        | Error::BadMagic(_)
        | Error::Format(_)
        | Error::Io { .. }
        | Error::Csv(_) => 3,
        Error::NonFinite(_)
        | Error::DegenerateContrast(_)
        | Error::StationaryObjective
        | Error::NonUnitDirection(_)
        | Error::EmptyLadder
        | Error::ZeroField => 4,
    }
}

/// Applies `HOLOTOMO_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("HOLOTOMO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("HOLOTOMO_THREADS must be a positive integer (got {v:?})")))?;
    // a pool that already exists keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut c = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        c.set_seed(s);
    }
    if let Some(w) = g.weights {
        c.reconstruction.use_weights = w == Switch::On;
    }
    if let Some(m) = g.max_iters {
        c.reconstruction.mgd.max_iters = m;
        c.reconstruction.mgd.validate()?;
    }
    if let Some(o) = &g.out {
        c.output_dir = o.clone();
    }
    Ok(c)
}

fn out_dir(c: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&c.output_dir).map_err(|e| Error::io(&c.output_dir, e))?;
    Ok(&c.output_dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

enum Loaded {
    Hologram(Hologram),
    Field(Field2D),
}

fn load_input(args: &InputArgs, c: &RunConfig) -> Result<Loaded> {
    let path = args
        .input
        .clone()
        .or_else(|| c.input.clone())
        .ok_or_else(|| Error::Config("no input: pass --input or set hologram.input".into()))?;
    let png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if png {
        if args.input_kind == InputKind::Field {
            return Err(Error::Format(format!(
                "{}: PNG input is always a hologram",
                path.display()
            )));
        }
        return Ok(Loaded::Hologram(read_hologram(&path, &c.grid)?));
    }
    let f = match read_stored(&path)? {
        Stored::Field(f) => f,
        Stored::Volume(_) => {
            return Err(Error::Format(format!(
                "{}: expected a 2D field, found a volume",
                path.display()
            )))
        }
    };
    let real = f.values().iter().all(|v| v.im == 0.0 && v.re >= 0.0);
    let hologram = match args.input_kind {
        InputKind::Auto => real,
        InputKind::Hologram => true,
        InputKind::Field => false,
    };
    if hologram {
        Ok(Loaded::Hologram(read_hologram(&path, &c.grid)?))
    } else {
        Ok(Loaded::Field(f))
    }
}

fn demodulated(args: &InputArgs, c: &RunConfig) -> Result<Field2D> {
    match load_input(args, c)? {
        Loaded::Hologram(h) => demodulate(&h, &c.carrier),
        Loaded::Field(f) => Ok(f),
    }
}

fn simulate(c: &RunConfig) -> Result<String> {
    let dir = out_dir(c)?;
    let spec = c.phantom_spec();
    let truth = make_phantom(&spec)?;
    let h = simulate_hologram(&truth, &c.simulation())?;
    write_volume(dir.join("truth.htf"), &truth)?;
    write_hologram(dir.join("hologram.htf"), &h)?;
    let scale = write_gray16_png(dir.join("hologram.png"), h.intensity())?;
    Ok(format!(
        "phantom: {} cell(s), {}x{}x{} voxels, box center {} um\nhologram: tilt {:?} bins, 16-bit PNG scale {:.6e} per count\nwrote {}",
        spec.cells.len(),
        spec.grid.nx,
        spec.grid.ny,
        spec.axial.nz,
        spec.axial.z_center,
        c.reference.tilt,
        scale,
        dir.display()
    ))
}

fn demodulate_cmd(args: &InputArgs, c: &RunConfig) -> Result<String> {
    let d = demodulated(args, c)?;
    let window = c
        .reconstruction
        .window
        .unwrap_or_else(|| GaussianWindow::default_for(d.grid()));
    let data = prepare_data(&d, &window)?;
    let dir = out_dir(c)?;
    write_field(dir.join("demodulated.htf"), &d)?;
    write_field(dir.join("data.htf"), &data)?;
    Ok(format!(
        "demodulated norm {:.6e}, prepared data norm {:.6e}\nwrote {}",
        d.norm(),
        data.norm(),
        dir.display()
    ))
}

fn focus_cmd(args: &InputArgs, c: &RunConfig) -> Result<String> {
    let d = demodulated(args, c)?;
    let radius = c
        .reconstruction
        .contrast_radius_px
        .unwrap_or_else(|| default_contrast_radius(d.grid()));
    let l = c.reconstruction.ladder;
    let scan = focus_scan(&d, l.z_min, l.z_max, l.z_step, radius as i64)?;
    let dir = out_dir(c)?;
    write_focus_scan(dir.join("focus_scan.csv"), &scan)?;
    Ok(format!(
        "focus at z = {} um (window radius {} px, {} distances)",
        scan.z_focus,
        radius,
        scan.z_list.len()
    ))
}

fn energy_table(u: &FieldVolume) -> String {
    let e = volume_energy_profile(u);
    let total: f64 = e.iter().sum();
    let mut s = String::from("slice  z_um  energy  fraction\n");
    let ab = u.axial_box();
    for (j, ej) in e.iter().enumerate() {
        let frac = if total > 0.0 { ej / total } else { 0.0 };
        let _ = writeln!(s, "{j}  {}  {ej:.6e}  {frac:.6e}", ab.slice_z(j));
    }
    s
}

fn summary(rec: &Reconstruction) -> String {
    let s = &rec.run.state;
    let mut out = String::new();
    let _ = writeln!(out, "iterations {}", s.iter);
    let _ = writeln!(out, "stop {:?}", rec.run.stop);
    let _ = writeln!(out, "e_d {:.6e}", s.e_d);
    let _ = writeln!(out, "initial_e_d {:.6e}", rec.run.history()[0].e_d);
    let _ = writeln!(out, "theta_final {:.6}", s.theta);
    let max_theta = rec.run.history().iter().map(|r| r.theta).fold(0.0, f64::max);
    let _ = writeln!(out, "theta_max {max_theta:.6}");
    let _ = writeln!(out, "z_focus {}", rec.scan.z_focus);
    let _ = writeln!(out, "z_center {}", rec.axial.z_center);
    match &rec.weights {
        Some(w) => {
            let list: Vec<String> = w.as_slice().iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(out, "weights {}", list.join(" "));
        }
        None => {
            let _ = writeln!(out, "weights off");
        }
    }
    let _ = writeln!(out, "tv_epsilon {:.6e}", rec.run.tv.epsilon);
    let _ = writeln!(
        out,
        "peripheral_energy_fraction {:.6e}",
        peripheral_energy_fraction(&s.guess)
    );
    out.push_str(&energy_table(&s.guess));
    out
}

fn reconstruct_cmd(args: &InputArgs, c: &RunConfig) -> Result<String> {
    let d = demodulated(args, c)?;
    let rec = reconstruct_field(d, &c.reconstruction, |r| {
        if r.iter % 50 == 0 {
            info!("iter {} e_d {:.3e} theta {:.3} t {:.3e}", r.iter, r.e_d, r.theta, r.t);
        }
    })?;
    let dir = out_dir(c)?;
    write_volume(dir.join("volume.htf"), &rec.run.state.guess)?;
    write_history(dir.join("history.csv"), rec.run.history())?;
    write_focus_scan(dir.join("focus_scan.csv"), &rec.scan)?;
    export_volume(dir, &rec.run.state.guess)?;
    let text = summary(&rec);
    write_text(&dir.join("summary.txt"), &text)?;
    Ok(format!("{text}wrote {}", dir.display()))
}

fn phase_map(f: &Field2D) -> Result<Array2<f64>> {
    match unwrap_phase(f) {
        Ok(p) => Ok(p),
        Err(Error::ZeroField) => Ok(Array2::zeros((f.grid().ny, f.grid().nx))),
        Err(e) => Err(e),
    }
}

/// Amplitude PNGs share one gray scale and phase PNGs one color scale.
pub fn export_volume(dir: &Path, u: &FieldVolume) -> Result<()> {
    let amp_max = u.max_abs();
    let slices: Vec<Field2D> = (0..u.nz()).map(|j| u.slice(j)).collect();
    let phases = slices.iter().map(phase_map).collect::<Result<Vec<_>>>()?;
    let lo = phases
        .iter()
        .flat_map(|p| p.iter())
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = phases
        .iter()
        .flat_map(|p| p.iter())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    for (j, (s, p)) in slices.iter().zip(&phases).enumerate() {
        write_gray_png(
            dir.join(format!("slice_{j:02}_amplitude.png")),
            &s.amplitude(),
            0.0,
            amp_max,
        )?;
        write_colormap_png(dir.join(format!("slice_{j:02}_phase.png")), p, lo, hi)?;
    }
    Ok(())
}

fn parse_sweep(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("sweep {s:?}: {e}")))?;
    match parts.as_slice() {
        [a, b, c] if *c > 0.0 && b >= a => Ok((*a, *b, *c)),
        _ => Err(Error::Config(format!(
            "sweep must be z_min:z_max:z_step with z_step > 0 (got {s:?})"
        ))),
    }
}

/// Amplitude through the central row for each back-propagation distance;
/// one image row per distance.
pub fn sweep_image(f: &Field2D, z_min: f64, z_max: f64, z_step: f64) -> Result<Array2<f64>> {
    let count = ((z_max - z_min) / z_step + 1e-9).floor() as usize + 1;
    let g = *f.grid();
    let mut img = Array2::zeros((count, g.nx));
    for (i, mut row) in img.axis_iter_mut(Axis(0)).enumerate() {
        let p = propagate(f, -(z_min + i as f64 * z_step))?;
        row.assign(&p.values().row(g.ny / 2).mapv(|c| c.norm()));
    }
    Ok(img)
}

fn inspect(file: &Path, sweep: Option<&str>, c: &RunConfig) -> Result<String> {
    let stored = read_stored(file)?;
    let g = *stored.grid();
    let mut s = String::new();
    match &stored {
        Stored::Field(f) => {
            let _ = writeln!(s, "kind field2d");
            let _ = writeln!(s, "dims {} x {}", g.nx, g.ny);
            let _ = writeln!(s, "pitch {} x {} um", g.dx, g.dy);
            let _ = writeln!(s, "norm {:.6e}", f.norm());
            let max = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
            let _ = writeln!(s, "max_abs {max:.6e}");
            if let Some(spec) = sweep {
                let (a, b, step) = parse_sweep(spec)?;
                let img = sweep_image(f, a, b, step)?;
                let dir = out_dir(c)?;
                let peak = img.iter().cloned().fold(0.0, f64::max);
                let path = dir.join("sweep_xz.png");
                write_gray_png(&path, &img, 0.0, peak)?;
                let _ = writeln!(s, "sweep {} rows -> {}", img.nrows(), path.display());
            }
        }
        Stored::Volume(u) => {
            if sweep.is_some() {
                return Err(Error::Config("--sweep applies to 2D fields only".into()));
            }
            let _ = writeln!(s, "kind volume");
            let _ = writeln!(s, "dims {} x {} x {}", g.nx, g.ny, u.nz());
            let _ = writeln!(s, "pitch {} x {} x {} um", g.dx, g.dy, g.dz);
            let _ = writeln!(s, "z_center {} um", u.z_center());
            let _ = writeln!(s, "norm {:.6e}", u.norm());
            let _ = writeln!(s, "max_abs {:.6e}", u.max_abs());
            s.push_str(&energy_table(u));
        }
    }
    Ok(s.trim_end().to_string())
}

fn export(file: &Path, c: &RunConfig) -> Result<String> {
    let dir = out_dir(c)?;
    let u = match read_stored(file)? {
        Stored::Volume(u) => u,
        Stored::Field(f) => FieldVolume::from_slices(*f.grid(), 0.0, &[f])?,
    };
    export_volume(dir, &u)?;
    Ok(format!("wrote {} slice image pair(s) to {}", u.nz(), dir.display()))
}

/// Runs one parsed command and returns the text for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    configure_threads()?;
    let c = load_config(&cli.global)?;
    match &cli.command {
        Command::Simulate => simulate(&c),
        Command::Demodulate(a) => demodulate_cmd(a, &c),
        Command::Focus(a) => focus_cmd(a, &c),
        Command::Reconstruct(a) => reconstruct_cmd(a, &c),
        Command::Inspect { file, sweep } => inspect(file, sweep.as_deref(), &c),
        Command::Export { file } => export(file, &c),
    }
}
