mod common;

use holotomo::field::{AxialBox, Field2D, FieldVolume, GridSpec};
use holotomo::holo::WeightVector;
use holotomo::mgd::{
    angle_theta, c1_gradient, c1_value, make_initial_guess, mgd_step, relative_data_error, run_mgd, unit_direction,
    MgdConfig, MgdState, Problem,
};
use holotomo::propagation::{adjoint_a, band_limit, forward_a};
use holotomo::tv::{tv_gradient, tv_value, tv_value_smoothed, TvConfig};
use ndarray::Array3;
use num_complex::Complex64;

use common::*;

fn setup(n: usize, seed: u64) -> (GridSpec, AxialBox, Field2D) {
    let g = grid(n, 0.25);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let mut r = rng(seed);
    let v = band_limit(&random_field(g, &mut r)).unwrap();
    (g, axial, v)
}

#[test]
fn tv_of_single_voxel() {
    let g = GridSpec::new(4, 4, 1.0, 1.0, 1.0, 0.65, 0.5, 1.0).unwrap();
    let mut vals = Array3::zeros((3, 4, 4));
    vals[[1, 1, 1]] = Complex64::new(1.0, 0.0);
    let u = FieldVolume::new(g, 5.0, vals).unwrap();
    let cfg = TvConfig::new(1e-3, (1.0, 1.0, 1.0)).unwrap();
    let expect = 3.0 + 3f64.sqrt();
    assert!((tv_value(&u, &cfg) - expect).abs() < 1e-14);
}

#[test]
fn tv_directional_derivative() {
    let g = grid(6, 0.4);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let mut r = rng(21);
    let u = random_volume(g, axial, &mut r);
    let w = random_volume(g, axial, &mut r);
    let cfg = TvConfig::new(1e-3, (0.4, 0.4, 0.75)).unwrap();
    let d = 1e-6 * u.norm();
    let plus = FieldVolume::new(g, 5.0, u.values() + &w.values().mapv(|x| x * d)).unwrap();
    let minus = FieldVolume::new(g, 5.0, u.values() - &w.values().mapv(|x| x * d)).unwrap();
    let fd = (tv_value_smoothed(&plus, &cfg) - tv_value_smoothed(&minus, &cfg)) / (2.0 * d);
    let analytic = tv_gradient(&u, &cfg).inner(&w).re;
    assert!((fd - analytic).abs() / analytic.abs() < 1e-5);
}

#[test]
fn tv_zero_only_for_constants() {
    let g = grid(6, 0.4);
    let cfg = TvConfig::new(1e-3, (0.4, 0.4, 0.75)).unwrap();
    let mut vals = Array3::from_elem((3, 6, 6), Complex64::new(2.0, 1.0));
    let u = FieldVolume::new(g, 5.0, vals.clone()).unwrap();
    assert_eq!(tv_value(&u, &cfg), 0.0);
    vals[[2, 5, 5]] += Complex64::new(1e-9, 0.0);
    assert!(tv_value(&FieldVolume::new(g, 5.0, vals).unwrap(), &cfg) > 0.0);
}

#[test]
fn c1_at_back_projection_vanishes() {
    let (_, axial, v) = setup(32, 22);
    let guess = adjoint_a(&v, &axial).unwrap().scaled(1.0 / 3.0);
    assert!(c1_value(&guess, &v).unwrap() < 1e-18 * v.norm_sqr());
}

#[test]
fn c1_of_zero_guess_and_its_gradient() {
    let (g, axial, v) = setup(16, 23);
    let zero = FieldVolume::zeros(g, axial);
    assert!((c1_value(&zero, &v).unwrap() - v.norm_sqr()).abs() < 1e-12 * v.norm_sqr());
    let grad = c1_gradient(&zero, &v).unwrap();
    let expect = adjoint_a(&v, &axial).unwrap().scaled(-1.0);
    assert!(grad.relative_error(&expect) < 1e-14);
    assert_eq!(relative_data_error(&zero, &v).unwrap(), 1.0);
}

#[test]
fn c1_matches_direct_residual_sum() {
    let g = grid(8, 0.25);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let mut r = rng(24);
    let u = random_volume(g, axial, &mut r);
    let v = random_field(g, &mut r);
    let au = forward_a(&u).unwrap();
    let mut direct = 0.0;
    for (a, b) in v.values().iter().zip(au.values().iter()) {
        direct += (a - b).norm_sqr();
    }
    assert!((c1_value(&u, &v).unwrap() - direct).abs() < 1e-12 * direct);
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let g = grid(16, 0.25);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let mut r = rng(25);
    let u = random_volume(g, axial, &mut r);
    let v = forward_a(&u).unwrap();
    assert!(c1_gradient(&u, &v).unwrap().norm() < 1e-12 * u.norm());
    assert!(relative_data_error(&u, &v).unwrap() < 1e-28);
}

#[test]
fn unit_direction_normalizes() {
    let g = grid(8, 0.25);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let mut r = rng(26);
    let u = random_volume(g, axial, &mut r).scaled(37.0);
    let d = unit_direction(&u).unwrap();
    assert!((d.norm() - 1.0).abs() < 1e-12);
    let n = u.values().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for (a, b) in d.values().iter().zip(u.values().iter()) {
        assert!((a - b / n).norm() < 1e-15);
    }
    let again = unit_direction(&d).unwrap();
    assert!(again.relative_error(&d) < 1e-15);
}

#[test]
fn one_step_matches_hand_update() {
    let (g, axial, v) = setup(8, 27);
    let mut r = rng(28);
    let guess = random_volume(g, axial, &mut r);
    let tv = TvConfig::new(1e-3, (0.25, 0.25, 0.75)).unwrap();
    let cfg = MgdConfig {
        t_init: Some(0.1),
        ..MgdConfig::default()
    };
    let problem = Problem::new(v.clone(), axial).unwrap();
    let state = MgdState::new(&problem, guess.clone(), &tv, &cfg).unwrap();

    let g1 = c1_gradient(&guess, &v).unwrap();
    let g2 = tv_gradient(&guess, &tv);
    let (n1, n2) = (g1.norm(), g2.norm());
    let expect = Array3::from_shape_fn(guess.values().dim(), |i| {
        guess.values()[i] - (g1.values()[i] / n1 + g2.values()[i] / n2) * 0.05
    });
    let next = mgd_step(state, &problem, &tv, &cfg).unwrap();
    let expect = FieldVolume::new(g, 5.0, expect).unwrap();
    assert!(next.guess.relative_error(&expect) < 1e-12);
    assert_eq!(next.iter, 1);
    let change = FieldVolume::new(g, 5.0, next.guess.values() - guess.values()).unwrap();
    assert!(change.norm() <= 0.1 * (1.0 + 1e-12));
}

#[test]
fn opposed_directions_leave_guess_unchanged() {
    let (g, axial, v) = setup(8, 29);
    let mut r = rng(30);
    let guess = random_volume(g, axial, &mut r);
    let tv = TvConfig::new(1e-3, (0.25, 0.25, 0.75)).unwrap();
    let cfg = MgdConfig::default();
    let problem = Problem::new(v, axial).unwrap();
    let mut state = MgdState::new(&problem, guess.clone(), &tv, &cfg).unwrap();
    state.d2_hat = state.d1_hat.scaled(-1.0);
    let next = mgd_step(state, &problem, &tv, &cfg).unwrap();
    assert_eq!(next.guess, guess);
}

#[test]
fn theta_bounds_and_unit_directions_along_run() {
    let (_, axial, v) = setup(16, 31);
    let run = run_mgd(
        &v,
        &axial,
        None,
        &MgdConfig {
            max_iters: 30,
            ..MgdConfig::default()
        },
    )
    .unwrap();
    for rec in run.history() {
        assert!((0.0..=std::f64::consts::PI).contains(&rec.theta));
        assert!(rec.e_d >= 0.0);
    }
    assert!((run.state.d1_hat.norm() - 1.0).abs() < 1e-12);
    assert!((run.state.d2_hat.norm() - 1.0).abs() < 1e-12);
    let th = angle_theta(&run.state.d1_hat, &run.state.d2_hat).unwrap();
    assert_eq!(th, run.state.theta);
}

#[test]
fn unit_weights_reproduce_unweighted_run_bitwise() {
    let (_, axial, v) = setup(16, 32);
    let base = MgdConfig {
        max_iters: 25,
        ..MgdConfig::default()
    };
    let a = run_mgd(&v, &axial, None, &base).unwrap();
    let b = run_mgd(
        &v,
        &axial,
        None,
        &MgdConfig {
            weights: Some(WeightVector::ones(3)),
            ..base.clone()
        },
    )
    .unwrap();
    assert_eq!(a.state.guess, b.state.guess);
    assert_eq!(a.history(), b.history());
}

#[test]
fn max_iters_one_takes_one_step() {
    let (_, axial, v) = setup(16, 33);
    let run = run_mgd(
        &v,
        &axial,
        None,
        &MgdConfig {
            max_iters: 1,
            ..MgdConfig::default()
        },
    )
    .unwrap();
    assert_eq!(run.state.iter, 1);
    assert_eq!(run.history().len(), 2);
    assert!(run_mgd(
        &v,
        &axial,
        None,
        &MgdConfig {
            max_iters: 0,
            ..MgdConfig::default()
        }
    )
    .is_err());
}

#[test]
fn initial_guess_properties() {
    let (_, axial, v) = setup(32, 34);
    let clean = make_initial_guess(&v, &axial, 0.0, 0).unwrap();
    assert_eq!(clean, adjoint_a(&v, &axial).unwrap().scaled(1.0 / 3.0));
    assert!(forward_a(&clean).unwrap().relative_error(&v) < 1e-10);
    let a = make_initial_guess(&v, &axial, 0.01, 9).unwrap();
    let b = make_initial_guess(&v, &axial, 0.01, 9).unwrap();
    let c = make_initial_guess(&v, &axial, 0.01, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let rel = a.relative_error(&clean);
    assert!(rel > 0.005 && rel < 0.02, "{rel}");
}

#[test]
fn zero_data_is_rejected() {
    let g = grid(16, 0.25);
    let axial = AxialBox::new(3, 5.0, 0.75).unwrap();
    let zero = Field2D::zeros(g);
    assert!(relative_data_error(&FieldVolume::zeros(g, axial), &zero).is_err());
    assert!(run_mgd(&zero, &axial, None, &MgdConfig::default()).is_err());
}
