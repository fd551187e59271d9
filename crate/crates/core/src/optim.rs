//! Projected Adam over driver parameters and virtual-leader sequences.
//!
//! Fitting a trajectory optimizes five driver parameters plus one (gap,
//! closing speed) pair per simulation step. Parameters are clamped back
//! into their boxes after every update; the gap sequences are unconstrained
//! (the kernel's gap floor keeps them usable regardless).

use crate::error::{Error, Result};
use crate::idm::IdmParams;
use crate::sim;
use crate::tasks::{nearest_step_indices, reconstruction_loss, FitResult, ObservedTrajectory};

/// Default number of optimization steps per fit.
pub const DEFAULT_STEPS: usize = 500;
/// Learning-rate endpoints of the linear decay schedule.
pub const DEFAULT_LR_START: f64 = 0.1;
pub const DEFAULT_LR_END: f64 = 0.01;
/// Initial value for every virtual-leader gap variable (m).
pub const INIT_GAP: f64 = 10.0;
/// Initial value for every virtual-leader closing-speed variable (m/s).
pub const INIT_CLOSING: f64 = 0.0;

/// Inclusive box constraint for one scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }
}

/// Box constraints for the five optimizable parameters, in the order
/// (a_max, a_pref, t_pref, s_min, v_targ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxConstraints {
    pub a_max: Bounds,
    pub a_pref: Bounds,
    pub t_pref: Bounds,
    pub s_min: Bounds,
    pub v_targ: Bounds,
}

impl Default for BoxConstraints {
    fn default() -> Self {
        BoxConstraints {
            a_max: Bounds { low: 5.0, high: 10.0 },
            a_pref: Bounds { low: 0.1, high: 5.0 },
            t_pref: Bounds { low: 0.1, high: 5.0 },
            s_min: Bounds { low: 1.0, high: 10.0 },
            v_targ: Bounds { low: 20.0, high: 60.0 },
        }
    }
}

impl BoxConstraints {
    pub fn as_array(&self) -> [Bounds; 5] {
        [self.a_max, self.a_pref, self.t_pref, self.s_min, self.v_targ]
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.as_array() {
            if !(b.low.is_finite() && b.high.is_finite() && b.low < b.high) {
                return Err(Error::invalid(format!(
                    "bound [{}, {}] is not a valid interval",
                    b.low, b.high
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &IdmParams) -> bool {
        let [ba, bp, bt, bs, bv] = self.as_array();
        ba.clamp(p.a_max) == p.a_max
            && bp.clamp(p.a_pref) == p.a_pref
            && bt.clamp(p.t_pref) == p.t_pref
            && bs.clamp(p.s_min) == p.s_min
            && bv.clamp(p.v_targ) == p.v_targ
    }
}

/// Componentwise clamp of `values` into `bounds`.
pub fn project(values: &mut [f64], bounds: &[Bounds]) {
    for (v, b) in values.iter_mut().zip(bounds.iter()) {
        *v = b.clamp(*v);
    }
}

/// Linear learning-rate decay from `DEFAULT_LR_START` to `DEFAULT_LR_END`
/// over `total` steps, endpoints included.
pub fn lr_schedule(step: usize, total: usize) -> Result<f64> {
    lr_schedule_between(step, total, DEFAULT_LR_START, DEFAULT_LR_END)
}

pub fn lr_schedule_between(step: usize, total: usize, start: f64, end: f64) -> Result<f64> {
    if total == 0 || step >= total {
        return Err(Error::invalid(format!("step {step} outside schedule of {total}")));
    }
    if total == 1 {
        return Ok(start);
    }
    let frac = step as f64 / (total - 1) as f64;
    Ok(start * (1.0 - frac) + end * frac)
}

/// First- and second-moment accumulators for one flat variable vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction folded into the step size.
pub fn adam_step(state: &mut AdamState, values: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if values.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::invalid("adam state and variable shapes disagree"));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::numerical(None, format!("non-finite gradient at index {i}")));
    }
    state.t += 1;
    let t = state.t as i32;
    let lr_t = lr * (1.0 - state.beta2.powi(t)).sqrt() / (1.0 - state.beta1.powi(t));
    for i in 0..values.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        values[i] -= lr_t * state.m[i] / (state.v[i].sqrt() + state.epsilon);
    }
    Ok(())
}

/// Everything a single fit needs besides the observations.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub dt: f64,
    pub steps: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub boxes: BoxConstraints,
    /// Starting parameter values; `delta` and `a_min` stay fixed.
    pub init: IdmParams,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            dt: 0.1,
            steps: DEFAULT_STEPS,
            lr_start: DEFAULT_LR_START,
            lr_end: DEFAULT_LR_END,
            boxes: BoxConstraints::default(),
            init: IdmParams::default(),
        }
    }
}

impl FitOptions {
    pub fn with_dt(dt: f64) -> Self {
        FitOptions { dt, ..FitOptions::default() }
    }
}

/// How the leader terms of the fitted vehicle are produced.
pub enum LeaderTerms {
    /// One optimizable (gap, closing) pair per step.
    Virtual,
    /// Fixed per-step pairs, e.g. projected from an observed leader.
    Fixed(Vec<(f64, f64)>),
}

fn params_to_vars(p: &IdmParams) -> [f64; 5] {
    [p.a_max, p.a_pref, p.t_pref, p.s_min, p.v_targ]
}

fn vars_to_params(vars: &[f64], template: &IdmParams) -> IdmParams {
    IdmParams {
        a_max: vars[0],
        a_pref: vars[1],
        t_pref: vars[2],
        s_min: vars[3],
        v_targ: vars[4],
        delta: template.delta,
        a_min: template.a_min,
    }
}

/// Fit driver parameters and virtual-leader sequences to one trajectory.
pub fn fit(obs: &ObservedTrajectory, opts: &FitOptions) -> Result<FitResult> {
    fit_with_leader(obs, LeaderTerms::Virtual, opts)
}

/// Fit with an explicit leader-term source; `LeaderTerms::Fixed` optimizes
/// only the five driver parameters.
pub fn fit_with_leader(
    obs: &ObservedTrajectory,
    leader: LeaderTerms,
    opts: &FitOptions,
) -> Result<FitResult> {
    obs.validate()?;
    opts.boxes.validate()?;
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    if opts.steps == 0 {
        return Err(Error::invalid("need at least one optimization step"));
    }

    let obs = obs.normalized();
    let duration = *obs.timestamps.last().unwrap();
    let sim_steps = (duration / opts.dt).ceil() as usize + 1;
    let indices = nearest_step_indices(&obs.timestamps, opts.dt, sim_steps)?;

    let start_speed = ((obs.positions[1] - obs.positions[0])
        / (obs.timestamps[1] - obs.timestamps[0]))
        .max(0.0);

    let (fixed, optimize_sequences) = match leader {
        LeaderTerms::Virtual => (None, true),
        LeaderTerms::Fixed(seq) => {
            if seq.len() != sim_steps {
                return Err(Error::invalid(format!(
                    "fixed leader terms have {} steps, simulation needs {sim_steps}",
                    seq.len()
                )));
            }
            (Some(seq), false)
        }
    };

    let n_vars = if optimize_sequences { 5 + 2 * sim_steps } else { 5 };
    let mut vars = vec![0.0; n_vars];
    vars[..5].copy_from_slice(&params_to_vars(&opts.init));
    let mut gaps: Vec<f64>;
    let mut closings: Vec<f64>;
    match &fixed {
        Some(seq) => {
            gaps = seq.iter().map(|t| t.0).collect();
            closings = seq.iter().map(|t| t.1).collect();
        }
        None => {
            gaps = vec![INIT_GAP; sim_steps];
            closings = vec![INIT_CLOSING; sim_steps];
            vars[5..5 + sim_steps].fill(INIT_GAP);
            vars[5 + sim_steps..].fill(INIT_CLOSING);
        }
    }

    let bounds = opts.boxes.as_array();
    project(&mut vars[..5], &bounds);
    let mut adam = AdamState::new(n_vars);
    let mut grads = vec![0.0; n_vars];
    let mut initial_loss = f64::NAN;
    let mut last_loss = f64::NAN;

    for iter in 0..opts.steps {
        let params = vars_to_params(&vars, &opts.init);
        if optimize_sequences {
            gaps.copy_from_slice(&vars[5..5 + sim_steps]);
            closings.copy_from_slice(&vars[5 + sim_steps..]);
        }
        let buf = sim::rollout_virtual_leader(0.0, start_speed, &params, &gaps, &closings, opts.dt)
            .map_err(|e| at_iteration(e, iter))?;
        let (loss, loss_grad) = reconstruction_loss(&buf.positions, &obs.positions, &indices);
        if !loss.is_finite() {
            return Err(Error::numerical(Some(iter), "non-finite reconstruction loss"));
        }
        if iter == 0 {
            initial_loss = loss;
        }
        last_loss = loss;

        let adj = sim::backward(&buf, &loss_grad).map_err(|e| at_iteration(e, iter))?;
        let pg = adj.d_params[0];
        grads[0] = pg.a_max;
        grads[1] = pg.a_pref;
        grads[2] = pg.t_pref;
        grads[3] = pg.s_min;
        grads[4] = pg.v_targ;
        if optimize_sequences {
            grads[5..5 + sim_steps].copy_from_slice(&adj.d_gaps);
            grads[5 + sim_steps..].copy_from_slice(&adj.d_closings);
        }

        let lr = lr_schedule_between(iter, opts.steps, opts.lr_start, opts.lr_end)?;
        adam_step(&mut adam, &mut vars, &grads, lr).map_err(|e| at_iteration(e, iter))?;
        project(&mut vars[..5], &bounds);
    }

    // Final rollout with the post-update variables.
    let params = vars_to_params(&vars, &opts.init);
    if optimize_sequences {
        gaps.copy_from_slice(&vars[5..5 + sim_steps]);
        closings.copy_from_slice(&vars[5 + sim_steps..]);
    }
    let trajectory =
        sim::rollout_virtual_leader(0.0, start_speed, &params, &gaps, &closings, opts.dt)?;
    let (final_loss, _) = reconstruction_loss(&trajectory.positions, &obs.positions, &indices);
    let residuals: Vec<f64> = indices
        .iter()
        .zip(obs.positions.iter())
        .map(|(&k, &p)| p - trajectory.positions[k])
        .collect();

    Ok(FitResult {
        id: obs.id,
        params,
        trajectory,
        initial_loss,
        final_loss: if final_loss.is_finite() { final_loss } else { last_loss },
        residuals,
        seconds: 0.0,
    })
}

fn at_iteration(e: Error, iter: usize) -> Error {
    match e {
        Error::NumericalFailure { step: None, message } => {
            Error::NumericalFailure { step: Some(iter), message }
        }
        other => other,
    }
}
