//! Multi-vehicle stepping engine: synchronous forward rollouts under Euler
//! integration and the matching reverse-mode backward pass over recorded
//! trajectories.
//!
//! All vehicles advance from the same pre-step snapshot, so the per-step
//! vehicle loop is data-parallel and results do not depend on worker count.
//! The backward pass walks the recorded buffer from the last step to the
//! first, re-deriving kernel partials on the fly; cross-vehicle adjoint flow
//! (a follower's acceleration depends on its leader's state) is folded in a
//! deterministic gather over precomputed follower lists.

use crate::error::{Error, Result};
use crate::idm::{accel_clamped, accel_grad_clamped, IdmParams};
use crate::par;

/// Gap (m) presented to vehicles with no leader. Large enough that the
/// interaction term is negligible, small enough to stay well-conditioned.
pub const FREE_ROAD_GAP: f64 = 1.0e4;

/// One simulation frame for a set of vehicles on a 1-D lane.
///
/// All vectors share the same length. `leader[i]` is the index of the
/// vehicle directly ahead of `i`, or `None` on open road. A `wrap` length
/// turns the lane into a ring: gaps are taken modulo the circumference.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub positions: Vec<f64>,
    pub speeds: Vec<f64>,
    pub lengths: Vec<f64>,
    pub leader: Vec<Option<usize>>,
    pub params: Vec<IdmParams>,
    pub wrap: Option<f64>,
}

impl WorldState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.speeds.len() != n
            || self.lengths.len() != n
            || self.leader.len() != n
            || self.params.len() != n
        {
            return Err(Error::invalid("world state arrays disagree on length"));
        }
        for i in 0..n {
            if !self.positions[i].is_finite() || !self.speeds[i].is_finite() {
                return Err(Error::invalid(format!("non-finite state for vehicle {i}")));
            }
            if self.speeds[i] < 0.0 {
                return Err(Error::invalid(format!("negative speed for vehicle {i}")));
            }
            if self.leader[i] == Some(i) {
                return Err(Error::invalid(format!("vehicle {i} follows itself")));
            }
            if let Some(h) = self.leader[i] {
                if h >= n {
                    return Err(Error::invalid(format!("leader index {h} out of range")));
                }
            }
            self.params[i].validate()?;
        }
        if let Some(c) = self.wrap {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid("ring circumference must be positive"));
            }
        }
        Ok(())
    }
}

#[inline]
fn leader_terms(state: &WorldState, i: usize, held: Option<&[(f64, f64)]>) -> (f64, f64) {
    match state.leader[i] {
        Some(h) => {
            let gap = match state.wrap {
                Some(c) => (state.positions[h] - state.positions[i]).rem_euclid(c) - state.lengths[h],
                None => state.positions[h] - state.positions[i] - state.lengths[h],
            };
            (gap, state.speeds[i] - state.speeds[h])
        }
        None => match held {
            Some(values) => values[i],
            None => (FREE_ROAD_GAP, 0.0),
        },
    }
}

/// Per-vehicle (gap, closing speed) pairs, taken against the leader or the
/// free-road sentinel for leaderless vehicles.
pub fn gather_leader(state: &WorldState) -> Vec<(f64, f64)> {
    par::map_indexed(state.len(), |i| leader_terms(state, i, None))
}

/// Dense per-step record of a rollout, holding everything the backward pass
/// needs: state snapshots, the applied accelerations, and the (gap, closing)
/// pairs each kernel call actually saw.
#[derive(Debug, Clone)]
pub struct TrajectoryBuffer {
    pub steps: usize,
    pub dt: f64,
    pub vehicles: usize,
    /// (steps + 1) x vehicles, row-major by step.
    pub positions: Vec<f64>,
    /// (steps + 1) x vehicles.
    pub speeds: Vec<f64>,
    /// steps x vehicles; acceleration applied at each step.
    pub accels: Vec<f64>,
    /// steps x vehicles; raw gap fed to the kernel (before the floor clamp).
    pub gaps: Vec<f64>,
    /// steps x vehicles; closing speed fed to the kernel.
    pub closings: Vec<f64>,
    pub params: Vec<IdmParams>,
    pub leader: Vec<Option<usize>>,
}

impl TrajectoryBuffer {
    pub fn positions_at(&self, step: usize) -> &[f64] {
        &self.positions[step * self.vehicles..(step + 1) * self.vehicles]
    }

    pub fn speeds_at(&self, step: usize) -> &[f64] {
        &self.speeds[step * self.vehicles..(step + 1) * self.vehicles]
    }

    pub fn accels_at(&self, step: usize) -> &[f64] {
        &self.accels[step * self.vehicles..(step + 1) * self.vehicles]
    }

    /// Position trace of one vehicle across all recorded snapshots.
    pub fn vehicle_positions(&self, vehicle: usize) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| self.positions[k * self.vehicles + vehicle])
            .collect()
    }

    pub fn vehicle_speeds(&self, vehicle: usize) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| self.speeds[k * self.vehicles + vehicle])
            .collect()
    }

    pub fn vehicle_accels(&self, vehicle: usize) -> Vec<f64> {
        (0..self.steps)
            .map(|k| self.accels[k * self.vehicles + vehicle])
            .collect()
    }
}

#[derive(Clone, Copy)]
enum LeaderSource<'a> {
    /// Gaps gathered from the state; leaderless vehicles get the sentinel.
    Gather,
    /// As `Gather`, but leaderless vehicles read a per-vehicle constant pair.
    GatherWithHeld(&'a [(f64, f64)]),
    /// Single-vehicle mode: (gap, closing) come from per-step sequences.
    Sequences { gaps: &'a [f64], closings: &'a [f64] },
}

fn rollout_impl(
    initial: &WorldState,
    steps: usize,
    dt: f64,
    source: LeaderSource<'_>,
) -> Result<TrajectoryBuffer> {
    initial.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let n = initial.len();
    let mut buf = TrajectoryBuffer {
        steps,
        dt,
        vehicles: n,
        positions: vec![0.0; (steps + 1) * n],
        speeds: vec![0.0; (steps + 1) * n],
        accels: vec![0.0; steps * n],
        gaps: vec![0.0; steps * n],
        closings: vec![0.0; steps * n],
        params: initial.params.clone(),
        leader: initial.leader.clone(),
    };
    buf.positions[..n].copy_from_slice(&initial.positions);
    buf.speeds[..n].copy_from_slice(&initial.speeds);

    let mut frame = initial.clone();
    for k in 0..steps {
        let row = k * n;
        {
            let state = &frame;
            let gap_row = &mut buf.gaps[row..row + n];
            let clo_row = &mut buf.closings[row..row + n];
            let acc_row = &mut buf.accels[row..row + n];
            match source {
                LeaderSource::Sequences { gaps, closings } => {
                    par::fill3_indexed(gap_row, clo_row, acc_row, |i| {
                        let (gap, closing) = (gaps[k], closings[k]);
                        let a = accel_clamped(&state.params[i], state.speeds[i], gap, closing, dt);
                        (gap, closing, a)
                    });
                }
                LeaderSource::Gather => {
                    par::fill3_indexed(gap_row, clo_row, acc_row, |i| {
                        let (gap, closing) = leader_terms(state, i, None);
                        let a = accel_clamped(&state.params[i], state.speeds[i], gap, closing, dt);
                        (gap, closing, a)
                    });
                }
                LeaderSource::GatherWithHeld(held) => {
                    par::fill3_indexed(gap_row, clo_row, acc_row, |i| {
                        let (gap, closing) = leader_terms(state, i, Some(held));
                        let a = accel_clamped(&state.params[i], state.speeds[i], gap, closing, dt);
                        (gap, closing, a)
                    });
                }
            }
        }
        if let Some(i) = buf.accels[row..row + n].iter().position(|a| !a.is_finite()) {
            return Err(Error::numerical(
                Some(k),
                format!("non-finite acceleration for vehicle {i}"),
            ));
        }
        let next_row = (k + 1) * n;
        {
            let (pos_head, pos_tail) = buf.positions.split_at_mut(next_row);
            let (spd_head, spd_tail) = buf.speeds.split_at_mut(next_row);
            let pos_prev = &pos_head[row..];
            let spd_prev = &spd_head[row..];
            let acc_row = &buf.accels[row..row + n];
            par::fill2_indexed(&mut pos_tail[..n], &mut spd_tail[..n], |i| {
                (
                    pos_prev[i] + dt * spd_prev[i],
                    // The kernel bound makes v + dt a analytically
                    // non-negative; the floor only swallows rounding dust.
                    (spd_prev[i] + dt * acc_row[i]).max(0.0),
                )
            });
        }
        frame.positions.copy_from_slice(&buf.positions[next_row..next_row + n]);
        frame.speeds.copy_from_slice(&buf.speeds[next_row..next_row + n]);
    }
    Ok(buf)
}

/// Advance every vehicle by one synchronous Euler step.
pub fn step(state: &WorldState, dt: f64) -> Result<WorldState> {
    let buf = rollout_impl(state, 1, dt, LeaderSource::Gather)?;
    let n = state.len();
    let mut next = state.clone();
    next.positions.copy_from_slice(&buf.positions[n..]);
    next.speeds.copy_from_slice(&buf.speeds[n..]);
    Ok(next)
}

/// Roll the world forward `steps` times, recording every intermediate
/// quantity the backward pass needs.
pub fn rollout(initial: &WorldState, steps: usize, dt: f64) -> Result<TrajectoryBuffer> {
    rollout_impl(initial, steps, dt, LeaderSource::Gather)
}

/// Like [`rollout`], but leaderless vehicles read a per-vehicle constant
/// (gap, closing) pair instead of the free-road sentinel. Keeps a fitted
/// virtual leader in effect while real leader links stay dynamic.
pub fn rollout_held_gaps(
    initial: &WorldState,
    held: &[(f64, f64)],
    steps: usize,
    dt: f64,
) -> Result<TrajectoryBuffer> {
    if held.len() != initial.len() {
        return Err(Error::invalid("held gap array length mismatch"));
    }
    rollout_impl(initial, steps, dt, LeaderSource::GatherWithHeld(held))
}

/// Single-vehicle rollout where the leader terms at step k are read from
/// the given sequences instead of a leader vehicle.
pub fn rollout_virtual_leader(
    start_position: f64,
    start_speed: f64,
    params: &IdmParams,
    gaps: &[f64],
    closings: &[f64],
    dt: f64,
) -> Result<TrajectoryBuffer> {
    if gaps.len() != closings.len() {
        return Err(Error::invalid("gap and closing sequences differ in length"));
    }
    let world = WorldState {
        positions: vec![start_position],
        speeds: vec![start_speed],
        lengths: vec![0.0],
        leader: vec![None],
        params: vec![*params],
        wrap: None,
    };
    rollout_impl(&world, gaps.len(), dt, LeaderSource::Sequences { gaps, closings })
}

/// Accumulated gradients with respect to the five optimizable parameters of
/// one vehicle.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamGrads {
    pub a_max: f64,
    pub a_pref: f64,
    pub s_min: f64,
    pub t_pref: f64,
    pub v_targ: f64,
}

/// Result of a full backward sweep: gradients of the scalar loss with
/// respect to initial state, per-vehicle parameters, and every recorded
/// per-step (gap, closing) input.
#[derive(Debug, Clone)]
pub struct AdjointState {
    /// dL / d initial position, per vehicle.
    pub d_position: Vec<f64>,
    /// dL / d initial speed, per vehicle.
    pub d_speed: Vec<f64>,
    pub d_params: Vec<ParamGrads>,
    /// steps x vehicles, same layout as the buffer rows.
    pub d_gaps: Vec<f64>,
    /// steps x vehicles.
    pub d_closings: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct StepTerms {
    lambda_p: f64,
    lambda_v: f64,
    d_gap: f64,
    d_closing: f64,
    grads: ParamGrads,
}

/// Reverse-mode sweep over a recorded rollout.
///
/// `loss_grad` holds dL/d(position) for every recorded snapshot, laid out
/// like the buffer's position array: (steps + 1) x vehicles.
pub fn backward(buffer: &TrajectoryBuffer, loss_grad: &[f64]) -> Result<AdjointState> {
    let n = buffer.vehicles;
    let snapshots = buffer.steps + 1;
    if loss_grad.len() != snapshots * n {
        return Err(Error::invalid(format!(
            "loss gradient has {} entries, expected {}",
            loss_grad.len(),
            snapshots * n
        )));
    }

    // Followers of each vehicle, ascending; fixes the fold order of
    // cross-vehicle contributions regardless of worker count.
    let mut followers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, h) in buffer.leader.iter().enumerate() {
        if let Some(h) = *h {
            followers[h].push(i);
        }
    }

    let dt = buffer.dt;
    let last = buffer.steps * n;
    let mut lambda_p: Vec<f64> = loss_grad[last..last + n].to_vec();
    let mut lambda_v: Vec<f64> = vec![0.0; n];
    let mut adj = AdjointState {
        d_position: vec![0.0; n],
        d_speed: vec![0.0; n],
        d_params: vec![ParamGrads::default(); n],
        d_gaps: vec![0.0; buffer.steps * n],
        d_closings: vec![0.0; buffer.steps * n],
    };

    let mut terms: Vec<StepTerms> = vec![StepTerms::default(); n];
    let mut next_lambda_p = vec![0.0; n];
    let mut next_lambda_v = vec![0.0; n];

    for k in (0..buffer.steps).rev() {
        let row = k * n;

        // Pass 1: per-vehicle kernel partials and own-state adjoint flow.
        {
            let speeds_k = buffer.speeds_at(k);
            let gaps_k = &buffer.gaps[row..row + n];
            let closings_k = &buffer.closings[row..row + n];
            let lambda_p = &lambda_p;
            let lambda_v = &lambda_v;
            par::fill_indexed(&mut terms, |i| {
                let (_, g) = accel_grad_clamped(
                    &buffer.params[i],
                    speeds_k[i],
                    gaps_k[i],
                    closings_k[i],
                    dt,
                );
                let carry = dt * lambda_v[i];
                let d_gap = carry * g.d_gap;
                let d_closing = carry * g.d_closing;
                // With a real leader, gap and closing are functions of the
                // pre-step state: d gap / d own position = -1 and
                // d closing / d own speed = +1. Without one they are free
                // inputs (virtual-leader sequences or the sentinel) and
                // contribute nothing to the state adjoints.
                let (own_gap, own_closing) = if buffer.leader[i].is_some() {
                    (-d_gap, d_closing)
                } else {
                    (0.0, 0.0)
                };
                StepTerms {
                    lambda_p: loss_grad[row + i] + lambda_p[i] + own_gap,
                    lambda_v: dt * lambda_p[i]
                        + lambda_v[i] * (1.0 + dt * g.d_speed)
                        + own_closing,
                    d_gap,
                    d_closing,
                    grads: ParamGrads {
                        a_max: carry * g.d_a_max,
                        a_pref: carry * g.d_a_pref,
                        s_min: carry * g.d_s_min,
                        t_pref: carry * g.d_t_pref,
                        v_targ: carry * g.d_v_targ,
                    },
                }
            });
        }

        // Pass 2: fold follower contributions in fixed index order.
        {
            let terms = &terms;
            let followers = &followers;
            par::fill2_indexed(&mut next_lambda_p, &mut next_lambda_v, |i| {
                let mut lp = terms[i].lambda_p;
                let mut lv = terms[i].lambda_v;
                for &j in &followers[i] {
                    lp += terms[j].d_gap;
                    lv -= terms[j].d_closing;
                }
                (lp, lv)
            });
        }

        par::update_zip(&mut adj.d_params, &terms, |acc, t| {
            acc.a_max += t.grads.a_max;
            acc.a_pref += t.grads.a_pref;
            acc.s_min += t.grads.s_min;
            acc.t_pref += t.grads.t_pref;
            acc.v_targ += t.grads.v_targ;
        });
        par::update_zip(&mut adj.d_gaps[row..row + n], &terms, |slot, t| *slot = t.d_gap);
        par::update_zip(&mut adj.d_closings[row..row + n], &terms, |slot, t| {
            *slot = t.d_closing
        });

        std::mem::swap(&mut lambda_p, &mut next_lambda_p);
        std::mem::swap(&mut lambda_v, &mut next_lambda_v);

        if lambda_p.iter().any(|x| !x.is_finite()) || lambda_v.iter().any(|x| !x.is_finite()) {
            return Err(Error::numerical(Some(k), "non-finite adjoint".to_string()));
        }
    }

    adj.d_position = lambda_p;
    adj.d_speed = lambda_v;
    Ok(adj)
}
