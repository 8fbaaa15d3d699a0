//! Mean gradient descent between data fidelity and total variation.
//!
//! Each iteration steps the guess along the bisector of the unit descent
//! directions of the two objectives,
//! `u <- u - t (d1 + d2) / 2`, optionally followed by a per-slice weighting
//! of the guess. No regularization weight is involved: the iteration settles
//! where the two descent directions oppose each other.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Axis, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{AxialBox, Field2D, FieldVolume};
use crate::holo::WeightVector;
use crate::propagation::ForwardModel;
use crate::tv::{tv_gradient, tv_value, TvConfig};

/// Step-size control.
///
/// The first step is `t_init_factor * ||u0||` unless an absolute value is
/// configured. The step is multiplied by `decay` once the data objective has
/// risen in at least `min_increases` of the last `window` iterations, and is
/// never reduced below `floor_factor` times its initial value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepSchedule {
    pub t_init_factor: f64,
    pub decay: f64,
    pub window: usize,
    pub min_increases: usize,
    pub floor_factor: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            t_init_factor: 0.1,
            decay: 0.5,
            window: 10,
            min_increases: 5,
            floor_factor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MgdConfig {
    pub max_iters: usize,
    pub theta_stop: f64,
    /// Consecutive iterations with `theta >= theta_stop` needed to stop.
    pub theta_patience: usize,
    /// Absolute initial step; overrides `schedule.t_init_factor`.
    pub t_init: Option<f64>,
    pub schedule: StepSchedule,
    /// Initial-guess noise relative to the RMS of the back-propagated guess.
    pub noise_amplitude: f64,
    pub weights: Option<WeightVector>,
    pub rng_seed: u64,
}

impl Default for MgdConfig {
    fn default() -> Self {
        MgdConfig {
            max_iters: 500,
            theta_stop: 2.8,
            theta_patience: 20,
            t_init: None,
            schedule: StepSchedule::default(),
            noise_amplitude: 0.01,
            weights: None,
            rng_seed: 0,
        }
    }
}

impl MgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.theta_stop > FRAC_PI_2 && self.theta_stop < PI) {
            return bad(format!("theta_stop must lie in (pi/2, pi) (got {})", self.theta_stop));
        }
        if self.theta_patience < 1 {
            return bad("theta_patience must be >= 1".into());
        }
        if let Some(t) = self.t_init {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t_init must be positive (got {t})"));
            }
        }
        let s = &self.schedule;
        if !(s.t_init_factor > 0.0) {
            return bad(format!("t_init_factor must be positive (got {})", s.t_init_factor));
        }
        if !(s.decay > 0.0 && s.decay <= 1.0) {
            return bad(format!("decay must lie in (0, 1] (got {})", s.decay));
        }
        if s.window == 0 || s.min_increases == 0 || s.min_increases > s.window {
            return bad(format!(
                "need 1 <= min_increases <= window (got {} of {})",
                s.min_increases, s.window
            ));
        }
        if !(s.floor_factor > 0.0 && s.floor_factor <= 1.0) {
            return bad(format!("floor_factor must lie in (0, 1] (got {})", s.floor_factor));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return bad(format!("noise_amplitude must be >= 0 (got {})", self.noise_amplitude));
        }
        Ok(())
    }
}

/// The measured detector field together with the operator that explains it.
#[derive(Clone)]
pub struct Problem {
    model: ForwardModel,
    data: Field2D,
    data_norm_sqr: f64,
}

impl Problem {
    pub fn new(data: Field2D, axial: AxialBox) -> Result<Self> {
        let mut grid = *data.grid();
        grid.dz = axial.dz;
        let model = ForwardModel::new(grid, axial)?;
        let data_norm_sqr = data.norm_sqr();
        if data_norm_sqr == 0.0 {
            return Err(Error::ZeroField);
        }
        Ok(Problem {
            model,
            data,
            data_norm_sqr,
        })
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn data(&self) -> &Field2D {
        &self.data
    }

    pub fn residual(&self, guess: &FieldVolume) -> Result<Field2D> {
        self.data.sub(&self.model.forward(guess)?)
    }

    pub fn c1(&self, guess: &FieldVolume) -> Result<f64> {
        Ok(self.residual(guess)?.norm_sqr())
    }

    /// `-A^H (v - A u)`.
    pub fn c1_gradient(&self, guess: &FieldVolume) -> Result<FieldVolume> {
        Ok(self.model.adjoint(&self.residual(guess)?)?.scaled(-1.0))
    }

    pub fn relative_error(&self, guess: &FieldVolume) -> Result<f64> {
        Ok(self.c1(guess)? / self.data_norm_sqr)
    }
}

fn problem_for(guess: &FieldVolume, v: &Field2D) -> Result<Problem> {
    if !guess.grid().same_lateral(v.grid()) {
        return Err(Error::GridMismatch);
    }
    let mut grid = *v.grid();
    grid.dz = guess.grid().dz;
    let model = ForwardModel::new(grid, guess.axial_box())?;
    Ok(Problem {
        model,
        data_norm_sqr: v.norm_sqr(),
        data: v.clone(),
    })
}

/// `||v - A u||^2`.
pub fn c1_value(guess: &FieldVolume, v: &Field2D) -> Result<f64> {
    problem_for(guess, v)?.c1(guess)
}

pub fn c1_gradient(guess: &FieldVolume, v: &Field2D) -> Result<FieldVolume> {
    problem_for(guess, v)?.c1_gradient(guess)
}

/// `||v - A u||^2 / ||v||^2`.
pub fn relative_data_error(guess: &FieldVolume, v: &Field2D) -> Result<f64> {
    let p = problem_for(guess, v)?;
    if p.data_norm_sqr == 0.0 {
        return Err(Error::ZeroField);
    }
    p.relative_error(guess)
}

/// `g / ||g||` over the whole volume.
pub fn unit_direction(g: &FieldVolume) -> Result<FieldVolume> {
    let n = g.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::StationaryObjective);
    }
    Ok(g.scaled(1.0 / n))
}

/// Angle between the descent directions `-d1` and `-d2`.
pub fn angle_theta(d1: &FieldVolume, d2: &FieldVolume) -> Result<f64> {
    for d in [d1, d2] {
        let n = d.norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitDirection(n));
        }
    }
    Ok(d1.inner(d2).re.clamp(-1.0, 1.0).acos())
}

/// Back-propagated field divided by the slice count, plus seeded complex
/// Gaussian noise with standard deviation `noise_amplitude * rms`.
pub fn make_initial_guess(v: &Field2D, axial: &AxialBox, noise_amplitude: f64, seed: u64) -> Result<FieldVolume> {
    let mut grid = *v.grid();
    grid.dz = axial.dz;
    let model = ForwardModel::new(grid, *axial)?;
    initial_guess_with(&model, v, noise_amplitude, seed)
}

fn initial_guess_with(model: &ForwardModel, v: &Field2D, noise_amplitude: f64, seed: u64) -> Result<FieldVolume> {
    let nz = model.axial_box().nz as f64;
    let mut guess = model.adjoint(v)?.scaled(1.0 / nz);
    if noise_amplitude > 0.0 {
        let rms = (guess.norm_sqr() / guess.values().len() as f64).sqrt();
        let sigma = noise_amplitude * rms / std::f64::consts::SQRT_2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in guess.values_mut().iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *c += Complex64::new(sigma * re, sigma * im);
        }
    }
    Ok(guess)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub c1: f64,
    pub c2: f64,
    pub theta: f64,
    pub e_d: f64,
    pub t: f64,
}

#[derive(Clone, Debug)]
pub struct MgdState {
    pub guess: FieldVolume,
    pub iter: usize,
    pub c1: f64,
    pub c2: f64,
    /// Unit direction of the data-objective gradient at `guess` (zero when
    /// that gradient vanishes).
    pub d1_hat: FieldVolume,
    pub d2_hat: FieldVolume,
    pub t: f64,
    pub theta: f64,
    pub e_d: f64,
    pub history: Vec<HistoryRecord>,
    t_init: f64,
    rises: VecDeque<bool>,
    obtuse_streak: usize,
}

fn direction_or_zero(g: FieldVolume) -> Result<FieldVolume> {
    match unit_direction(&g) {
        Ok(d) => Ok(d),
        Err(Error::StationaryObjective) => Ok(g.scaled(0.0)),
        Err(e) => Err(e),
    }
}

impl MgdState {
    /// Evaluates both objectives and directions at `guess`.
    pub fn new(problem: &Problem, guess: FieldVolume, tv: &TvConfig, cfg: &MgdConfig) -> Result<Self> {
        cfg.validate()?;
        let t = cfg.t_init.unwrap_or(cfg.schedule.t_init_factor * guess.norm());
        let t = if t > 0.0 { t } else { cfg.schedule.t_init_factor };
        let mut state = MgdState {
            d1_hat: guess.scaled(0.0),
            d2_hat: guess.scaled(0.0),
            guess,
            iter: 0,
            c1: 0.0,
            c2: 0.0,
            t,
            theta: FRAC_PI_2,
            e_d: 0.0,
            history: Vec::new(),
            t_init: t,
            rises: VecDeque::new(),
            obtuse_streak: 0,
        };
        state.evaluate(problem, tv)?;
        state.record();
        Ok(state)
    }

    fn evaluate(&mut self, problem: &Problem, tv: &TvConfig) -> Result<()> {
        let residual = problem.residual(&self.guess)?;
        self.c1 = residual.norm_sqr();
        self.e_d = self.c1 / problem.data_norm_sqr;
        self.c2 = tv_value(&self.guess, tv);
        let g1 = problem.model.adjoint(&residual)?.scaled(-1.0);
        let g2 = tv_gradient(&self.guess, tv);
        self.d1_hat = direction_or_zero(g1)?;
        self.d2_hat = direction_or_zero(g2)?;
        self.theta = angle_theta(&self.d1_hat, &self.d2_hat).unwrap_or(FRAC_PI_2);
        Ok(())
    }

    fn record(&mut self) {
        self.history.push(HistoryRecord {
            iter: self.iter,
            c1: self.c1,
            c2: self.c2,
            theta: self.theta,
            e_d: self.e_d,
            t: self.t,
        });
    }

    pub fn last_record(&self) -> &HistoryRecord {
        self.history.last().expect("history starts with the initial record")
    }

    /// Both objectives are stationary: the update is identically zero.
    pub fn is_stationary(&self) -> bool {
        self.d1_hat.norm() == 0.0 && self.d2_hat.norm() == 0.0
    }
}

/// Multiplies every slice `j` of `u` by `w[j]`.
pub fn apply_slice_weights(u: &mut FieldVolume, w: &WeightVector) -> Result<()> {
    if w.len() != u.nz() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} slices",
            w.len(),
            u.nz()
        )));
    }
    for (mut slice, &wj) in u.values_mut().axis_iter_mut(Axis(0)).zip(w.as_slice()) {
        slice.mapv_inplace(|c| c * wj);
    }
    Ok(())
}

/// One iteration: bisector update with the current step, optional slice
/// weighting, then re-evaluation of objectives, directions and step size.
pub fn mgd_step(mut state: MgdState, problem: &Problem, tv: &TvConfig, cfg: &MgdConfig) -> Result<MgdState> {
    let half_t = 0.5 * state.t;
    Zip::from(state.guess.values_mut())
        .and(state.d1_hat.values())
        .and(state.d2_hat.values())
        .for_each(|u, a, b| *u -= (a + b) * half_t);
    if let Some(w) = &cfg.weights {
        apply_slice_weights(&mut state.guess, w)?;
    }

    let previous_c1 = state.c1;
    state.evaluate(problem, tv)?;
    state.iter += 1;

    let s = &cfg.schedule;
    state.rises.push_back(state.c1 > previous_c1);
    if state.rises.len() > s.window {
        state.rises.pop_front();
    }
    if state.rises.len() == s.window && state.rises.iter().filter(|r| **r).count() >= s.min_increases {
        state.t = (state.t * s.decay).max(s.floor_factor * state.t_init);
        state.rises.clear();
    }

    if state.theta >= cfg.theta_stop {
        state.obtuse_streak += 1;
    } else {
        state.obtuse_streak = 0;
    }
    state.record();
    Ok(state)
}

/// Why an optimization run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxIterations,
    OpposedDirections,
    Stationary,
}

#[derive(Clone, Debug)]
pub struct MgdRun {
    pub initial_guess: FieldVolume,
    pub tv: TvConfig,
    pub state: MgdState,
    pub stop: StopReason,
}

impl MgdRun {
    pub fn history(&self) -> &[HistoryRecord] {
        &self.state.history
    }
}

/// Runs from the noisy back-propagated guess until `max_iters`, sustained
/// opposition of the descent directions, or a stationary point. When `tv`
/// is `None` the smoothing is `1e-3 * max |u0|`.
pub fn run_mgd(v: &Field2D, axial: &AxialBox, tv: Option<TvConfig>, cfg: &MgdConfig) -> Result<MgdRun> {
    run_mgd_with(v, axial, tv, cfg, |_| {})
}

pub fn run_mgd_with(
    v: &Field2D,
    axial: &AxialBox,
    tv: Option<TvConfig>,
    cfg: &MgdConfig,
    mut observer: impl FnMut(&HistoryRecord),
) -> Result<MgdRun> {
    cfg.validate()?;
    let problem = Problem::new(v.clone(), *axial)?;
    if let Some(w) = &cfg.weights {
        if w.len() != axial.nz {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} slices",
                w.len(),
                axial.nz
            )));
        }
    }
    let initial_guess = initial_guess_with(&problem.model, v, cfg.noise_amplitude, cfg.rng_seed)?;
    let tv = match tv {
        Some(t) => t,
        None => TvConfig::relative_to(&initial_guess)?,
    };
    let mut state = MgdState::new(&problem, initial_guess.clone(), &tv, cfg)?;
    observer(state.last_record());
    let stop = loop {
        if state.iter >= cfg.max_iters {
            break StopReason::MaxIterations;
        }
        if state.is_stationary() {
            break StopReason::Stationary;
        }
        state = mgd_step(state, &problem, &tv, cfg)?;
        observer(state.last_record());
        if state.obtuse_streak >= cfg.theta_patience {
            break StopReason::OpposedDirections;
        }
    };
    Ok(MgdRun {
        initial_guess,
        tv,
        state,
        stop,
    })
}
