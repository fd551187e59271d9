//! Model-free baselines: linear interpolation plus centered moving-average
//! and symmetric exponential smoothing of the interpolated positions, with
//! speed and acceleration profiles derived by finite differences.

use crate::error::{Error, Result};
use crate::tasks::ObservedTrajectory;

/// Moving-average window (samples) used in the comparisons.
pub const MA_WINDOW: usize = 9;
/// Exponential smoothing width (samples).
pub const EMA_WIDTH: f64 = 5.0;
/// The exponential kernel is truncated this many widths out.
const EMA_TRUNCATE: f64 = 4.0;

/// Uniformly sampled positions with finite-difference profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    pub dt: f64,
    pub positions: Vec<f64>,
    pub speeds: Vec<f64>,
    pub accels: Vec<f64>,
}

impl DenseTrajectory {
    /// Build from positions alone, deriving the profiles.
    pub fn from_positions(dt: f64, positions: Vec<f64>) -> Result<Self> {
        let (speeds, accels) = if positions.len() >= 3 {
            finite_difference_profiles(&positions, dt)?
        } else if positions.len() == 2 {
            let v = (positions[1] - positions[0]) / dt;
            (vec![v, v], vec![0.0, 0.0])
        } else {
            (vec![0.0; positions.len()], vec![0.0; positions.len()])
        };
        Ok(DenseTrajectory { dt, positions, speeds, accels })
    }
}

/// Piecewise-linear position at every multiple of `dt` within the
/// observation window.
pub fn linear_interpolate(obs: &ObservedTrajectory, dt: f64) -> Result<DenseTrajectory> {
    obs.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let obs = obs.normalized();
    let duration = *obs.timestamps.last().unwrap();
    let samples = ((duration / dt) + 1e-9).floor() as usize + 1;
    let mut positions = Vec::with_capacity(samples);
    let mut seg = 0usize;
    for k in 0..samples {
        let t = k as f64 * dt;
        while seg + 2 < obs.timestamps.len() && obs.timestamps[seg + 1] < t {
            seg += 1;
        }
        let (t0, t1) = (obs.timestamps[seg], obs.timestamps[seg + 1]);
        let (p0, p1) = (obs.positions[seg], obs.positions[seg + 1]);
        let alpha = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        positions.push(p0 + alpha * (p1 - p0));
    }
    DenseTrajectory::from_positions(dt, positions)
}

/// Centered mean over an odd window; at the boundaries the window shrinks
/// symmetrically so it always fits.
pub fn moving_average(dense: &DenseTrajectory, window: usize) -> Result<DenseTrajectory> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid("moving-average window must be odd"));
    }
    let n = dense.positions.len();
    let half = window / 2;
    let mut smoothed = Vec::with_capacity(n);
    for i in 0..n {
        let reach = half.min(i).min(n - 1 - i);
        let lo = i - reach;
        let hi = i + reach;
        let sum: f64 = dense.positions[lo..=hi].iter().sum();
        smoothed.push(sum / (hi - lo + 1) as f64);
    }
    DenseTrajectory::from_positions(dense.dt, smoothed)
}

/// Symmetric exponential smoothing: weights exp(-|i-j|/width), normalized,
/// truncated a fixed number of widths out.
pub fn exponential_moving_average(dense: &DenseTrajectory, width: f64) -> Result<DenseTrajectory> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::invalid("smoothing width must be positive"));
    }
    let n = dense.positions.len();
    let reach = (EMA_TRUNCATE * width).ceil() as usize;
    let mut smoothed = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach).min(n - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for j in lo..=hi {
            let w = (-(i.abs_diff(j) as f64) / width).exp();
            acc += w * dense.positions[j];
            norm += w;
        }
        smoothed.push(acc / norm);
    }
    DenseTrajectory::from_positions(dense.dt, smoothed)
}

/// Forward-difference speed and acceleration profiles, last values repeated
/// so every array matches the position count.
pub fn finite_difference_profiles(positions: &[f64], dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if positions.len() < 3 {
        return Err(Error::invalid("need at least 3 positions for profiles"));
    }
    let n = positions.len();
    let mut speeds = Vec::with_capacity(n);
    for w in positions.windows(2) {
        speeds.push((w[1] - w[0]) / dt);
    }
    speeds.push(speeds[n - 2]);
    let mut accels = Vec::with_capacity(n);
    for w in speeds.windows(2).take(n - 1) {
        accels.push((w[1] - w[0]) / dt);
    }
    accels.push(accels[n - 2]);
    Ok((speeds, accels))
}
