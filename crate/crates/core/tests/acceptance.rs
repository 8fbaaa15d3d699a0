//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use holotomo::field::{peripheral_energy_fraction, AxialBox, Field2D, FieldVolume};
use holotomo::holo::{compute_weights, default_contrast_radius, focus_scan, GaussianWindow};
use holotomo::mgd::{c1_gradient, c1_value, run_mgd, MgdConfig};
use holotomo::phantom::{
    detector_field, make_phantom, position_pixel, scene_reference, simulate_hologram, slice_phase, standard_scene,
    two_cell_scene, HologramSimSpec, PhantomSpec,
};
use holotomo::pipeline::{demodulate, reconstruct_hologram, ReconstructionConfig};
use holotomo::propagation::{adjoint_a, band_limit, forward_a, propagate, ForwardModel};
use holotomo::tv::{divergence, gradient, tv_gradient, tv_value_smoothed, Gradient3, TvConfig};
use ndarray::Array3;
use num_complex::Complex64;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn weak_scene() -> PhantomSpec {
    let mut spec = standard_scene();
    spec.cells[0].peak_phase = 0.5;
    spec
}

fn weak_scene_field() -> Field2D {
    let spec = weak_scene();
    let u = make_phantom(&spec).unwrap();
    let (reference, carrier) = scene_reference();
    let h = simulate_hologram(&u, &HologramSimSpec::noiseless(reference)).unwrap();
    demodulate(&h, &carrier).unwrap()
}

fn adjoint_trials() -> Outcome {
    let start = Instant::now();
    let g = grid(32, 0.2);
    let axial = AxialBox::new(3, 6.0, 0.75).unwrap();
    let model = ForwardModel::new(g, axial).unwrap();
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u = random_volume(g, axial, &mut r);
        let v = random_field(g, &mut r);
        let au = model.forward(&u).unwrap();
        let lhs = au.inner(&v);
        let rhs = u.inner(&model.adjoint(&v).unwrap());
        worst = worst.max((lhs - rhs).norm() / (au.norm() * v.norm()));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(5),
        format!("worst {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn unitarity_and_group() -> Outcome {
    let g = grid(128, 0.1);
    let mut r = rng(12);
    let v = band_limit(&random_field(g, &mut r)).unwrap();
    let zs = [-10.0, 0.0, 3.7, 9.0];
    let mut worst: f64 = 0.0;
    for &z in &zs {
        let p = propagate(&v, z).unwrap();
        worst = worst.max((p.norm() - v.norm()).abs() / v.norm());
        worst = worst.max(propagate(&p, -z).unwrap().relative_error(&v));
        for &z2 in &zs {
            let two = propagate(&p, z2).unwrap();
            let once = propagate(&v, z + z2).unwrap();
            worst = worst.max(two.relative_error(&once));
        }
    }
    outcome(worst < 1e-10, format!("worst {worst:.2e}"))
}

fn backprojection_identity() -> Outcome {
    let g = grid(128, 0.1);
    let axial = AxialBox::new(5, 9.0, 0.75).unwrap();
    let mut r = rng(13);
    let v = band_limit(&random_field(g, &mut r)).unwrap();
    let back = adjoint_a(&v, &axial).unwrap().scaled(1.0 / 5.0);
    let err = forward_a(&back).unwrap().relative_error(&v);
    outcome(err < 1e-10, format!("relative error {err:.2e}"))
}

fn tv_checks() -> Outcome {
    let g = grid(6, 0.5);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let mut r = rng(14);
    let u = random_volume(g, axial, &mut r);
    let cfg = TvConfig::for_grid(
        &{
            let mut gg = g;
            gg.dz = axial.dz;
            gg
        },
        1e-3,
    )
    .unwrap();
    let grad = tv_gradient(&u, &cfg);
    let h = 1e-6;
    let mut num = 0.0;
    let mut den = 0.0;
    let n = u.values().len();
    for idx in 0..n {
        for unit in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let mut up = u.values().clone();
            let mut dn = u.values().clone();
            up.as_slice_mut().unwrap()[idx] += unit * h;
            dn.as_slice_mut().unwrap()[idx] -= unit * h;
            let fp = tv_value_smoothed(&FieldVolume::new(*u.grid(), u.z_center(), up).unwrap(), &cfg);
            let fm = tv_value_smoothed(&FieldVolume::new(*u.grid(), u.z_center(), dn).unwrap(), &cfg);
            let fd = (fp - fm) / (2.0 * h);
            let gi = grad.values().as_slice().unwrap()[idx];
            let analytic = if unit.re == 1.0 { gi.re } else { gi.im };
            num += (fd - analytic).powi(2);
            den += analytic * analytic;
        }
    }
    let fd_err = (num / den).sqrt();

    let sp = cfg.spacing;
    let p = Gradient3 {
        x: random_volume(g, axial, &mut r).into_values(),
        y: random_volume(g, axial, &mut r).into_values(),
        z: random_volume(g, axial, &mut r).into_values(),
    };
    let gu = gradient(u.values(), sp);
    let dot = |a: &Array3<Complex64>, b: &Array3<Complex64>| -> Complex64 {
        a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
    };
    let lhs = dot(&gu.x, &p.x) + dot(&gu.y, &p.y) + dot(&gu.z, &p.z);
    let rhs = -dot(u.values(), &divergence(&p, sp));
    let adj_err = (lhs - rhs).norm() / lhs.norm();
    outcome(
        fd_err < 1e-5 && adj_err < 1e-13,
        format!("finite-difference {fd_err:.2e}, adjointness {adj_err:.2e}"),
    )
}

fn c1_finite_differences() -> Outcome {
    let g = grid(16, 0.25);
    let axial = AxialBox::new(3, 4.0, 0.75).unwrap();
    let mut r = rng(15);
    let u = random_volume(g, axial, &mut r);
    let v = random_field(g, &mut r);
    let grad = c1_gradient(&u, &v).unwrap();
    let h = 1e-4;
    let mut num = 0.0;
    let mut den = 0.0;
    for idx in 0..u.values().len() {
        for unit in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let mut up = u.values().clone();
            let mut dn = u.values().clone();
            up.as_slice_mut().unwrap()[idx] += unit * h;
            dn.as_slice_mut().unwrap()[idx] -= unit * h;
            let fp = c1_value(&FieldVolume::new(*u.grid(), u.z_center(), up).unwrap(), &v).unwrap();
            let fm = c1_value(&FieldVolume::new(*u.grid(), u.z_center(), dn).unwrap(), &v).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let gi = grad.values().as_slice().unwrap()[idx];
            let analytic = 2.0 * if unit.re == 1.0 { gi.re } else { gi.im };
            num += (fd - analytic).powi(2);
            den += analytic * analytic;
        }
    }
    let err = (num / den).sqrt();
    outcome(err < 1e-6, format!("relative error {err:.2e}"))
}

fn autofocus() -> Outcome {
    let start = Instant::now();
    let d = weak_scene_field();
    let radius = default_contrast_radius(d.grid()) as i64;
    let scan = focus_scan(&d, 0.0, 18.0, 0.75, radius).unwrap();
    let elapsed = start.elapsed();
    let ok = (scan.z_focus - 9.0).abs() <= 0.75 && scan.is_unimodal() && elapsed < Duration::from_secs(60);
    outcome(
        ok,
        format!(
            "z_focus {} um, unimodal {}, {:.1} s",
            scan.z_focus,
            scan.is_unimodal(),
            elapsed.as_secs_f64()
        ),
    )
}

fn mgd_convergence() -> Outcome {
    let spec = small_scene();
    let u = make_phantom(&spec).unwrap();
    let v = forward_a(&u).unwrap();
    let cfg = MgdConfig {
        max_iters: 500,
        ..MgdConfig::default()
    };
    let run = run_mgd(&v, &spec.axial, None, &cfg).unwrap();
    let h = run.history();
    let e_d = run.state.e_d;
    let max_theta = h.iter().map(|r| r.theta).fold(0.0, f64::max);
    let ok = run.state.iter == 500 && e_d < 1e-6 && max_theta > FRAC_PI_2 && e_d < h[0].e_d;
    outcome(
        ok,
        format!(
            "{} iterations, E_d {e_d:.2e}, max theta {max_theta:.3} rad",
            run.state.iter
        ),
    )
}

fn weighting_effect() -> Outcome {
    let spec = small_scene();
    let u = make_phantom(&spec).unwrap();
    let v = forward_a(&u).unwrap();
    let d = detector_field(&u, 1.0).unwrap();
    let w = compute_weights(&d, &spec.axial, default_contrast_radius(&spec.grid) as i64).unwrap();
    let plain = run_mgd(&v, &spec.axial, None, &MgdConfig::default()).unwrap();
    let weighted = run_mgd(
        &v,
        &spec.axial,
        None,
        &MgdConfig {
            weights: Some(w.clone()),
            ..MgdConfig::default()
        },
    )
    .unwrap();
    let fp = peripheral_energy_fraction(&plain.state.guess);
    let fw = peripheral_energy_fraction(&weighted.state.guess);
    let ok = fw < 0.5 * fp && weighted.state.e_d <= 1e-2;
    outcome(
        ok,
        format!(
            "peripheral fraction {fw:.3e} weighted vs {fp:.3e} unweighted, weighted E_d {:.2e}, weights {:.3?}",
            weighted.state.e_d,
            w.as_slice()
        ),
    )
}

fn ftm_round_trip() -> Outcome {
    let spec = standard_scene();
    let u = make_phantom(&spec).unwrap();
    let (reference, carrier) = scene_reference();
    let h = simulate_hologram(&u, &HologramSimSpec::noiseless(reference)).unwrap();
    let d = demodulate(&h, &carrier).unwrap();
    let truth = band_limit(&detector_field(&u, 1.0).unwrap()).unwrap();
    let err = d.relative_error(&truth);
    outcome(err < 1e-3, format!("relative error {err:.2e}"))
}

fn weight_shape() -> Outcome {
    let d = weak_scene_field();
    let spec = weak_scene();
    let w = compute_weights(&d, &spec.axial, default_contrast_radius(d.grid()) as i64).unwrap();
    let w = w.as_slice();
    let peak = w.iter().cloned().fold(0.0, f64::max);
    let at = w.iter().position(|x| *x == peak).unwrap();
    let rising = w[..=at].windows(2).all(|p| p[1] > p[0]);
    let falling = w[at..].windows(2).all(|p| p[1] < p[0]);
    let asym = (0..w.len())
        .map(|j| (w[j] - w[w.len() - 1 - j]).abs())
        .fold(0.0, f64::max);
    let ok = peak == 1.0 && at == 2 && rising && falling && asym < 1e-2;
    outcome(ok, format!("weights {w:.4?}, asymmetry {asym:.1e}"))
}

fn two_cell_dip() -> Outcome {
    let spec = two_cell_scene();
    let u = make_phantom(&spec).unwrap();
    let (reference, carrier) = scene_reference();
    let h = simulate_hologram(&u, &HologramSimSpec::noiseless(reference)).unwrap();
    let cfg = ReconstructionConfig {
        window: Some(GaussianWindow::flat()),
        ..ReconstructionConfig::default()
    };
    let rec = reconstruct_hologram(&h, &carrier, &cfg, |_| {}).unwrap();
    let g = spec.grid;
    let infected = &spec.cells[1];
    let central = rec.run.state.guess.slice(2);
    let truth = slice_phase(&spec, 2);
    let (cx, cy) = infected.center;
    let search = 0.7 * infected.radius;
    let mut best_rec = ((0, 0), f64::MAX);
    let mut best_truth = ((0, 0), f64::MAX);
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let (x, y) = holotomo::phantom::pixel_position(&g, ix, iy);
            if (x - cx).hypot(y - cy) > search {
                continue;
            }
            let p = central.values()[[iy, ix]].arg();
            if p < best_rec.1 {
                best_rec = ((ix, iy), p);
            }
            if truth[[iy, ix]] < best_truth.1 {
                best_truth = ((ix, iy), truth[[iy, ix]]);
            }
        }
    }
    let dip = infected.dip.unwrap();
    let programmed = position_pixel(&g, dip.center.0, dip.center.1);
    let ((rx, ry), _) = best_rec;
    let ((tx, ty), _) = best_truth;
    let dist = ((rx as f64 - tx as f64).powi(2) + (ry as f64 - ty as f64).powi(2)).sqrt();
    outcome(
        dist <= 3.0,
        format!(
            "reconstructed minimum at ({rx}, {ry}), truth ({tx}, {ty}), programmed ({}, {}), {dist:.2} px apart, E_d {:.2e}",
            programmed.0, programmed.1, rec.run.state.e_d
        ),
    )
}

const CLI_CONFIG: &str = r#"
seed = 11

[grid]
nx = 64
ny = 64
sensor_pitch = 10.0
magnification = 40.0
na = 0.3

[box]
nz = 5
z_center = 6.0

[phantom]
scene = "custom"
[[phantom.cells]]
center = [0.0, 0.0]
radius = 3.0
peak_phase = 0.5
slices = [1, 3]

[hologram]
tilt = [20, 20]
mask_radius = 9.0
snr_db = 30.0

[processing]
z_min = 0.0
z_max = 12.0

[mgd]
max_iters = 60
"#;

fn cli_pipeline(cfg: &Path, out: &Path) -> Result<Vec<u8>, String> {
    let bin = env!("CARGO_BIN_EXE_holotomo");
    let holo = out.join("hologram.htf");
    for args in [
        vec![
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "simulate",
        ],
        vec![
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "reconstruct",
            "--input",
            holo.to_str().unwrap(),
        ],
    ] {
        let o = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
    }
    std::fs::read(out.join("volume.htf")).map_err(|e| e.to_string())
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, CLI_CONFIG).unwrap();
    let runs: Result<Vec<Vec<u8>>, String> = ["a", "b"]
        .iter()
        .map(|d| cli_pipeline(&cfg, &dir.path().join(d)))
        .collect();
    match runs {
        Ok(v) => outcome(
            v[0] == v[1],
            format!("{} vs {} bytes, identical {}", v[0].len(), v[1].len(), v[0] == v[1]),
        ),
        Err(e) => outcome(false, format!("cli failed: {}", e.trim())),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("adjoint correctness", adjoint_trials),
        ("propagation unitarity and group property", unitarity_and_group),
        ("back-projection identity", backprojection_identity),
        ("tv gradient and adjointness", tv_checks),
        ("data-term gradient", c1_finite_differences),
        ("autofocus", autofocus),
        ("mgd convergence", mgd_convergence),
        ("weighting effect", weighting_effect),
        ("ftm round trip", ftm_round_trip),
        ("weight shape", weight_shape),
        ("cli determinism", cli_determinism),
        ("two-cell phase dip", two_cell_dip),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<42} {}  {}",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
