//! Trajectory filtering and reconstruction drivers.
//!
//! Both tasks fit the same model to timestamped 1-D position observations;
//! they differ only in observation density and simulation timestep (0.1 s
//! for dense filtering, 1.0 s for sparse reconstruction).

use std::time::Instant;

use crate::error::{Error, Result};
use crate::idm::IdmParams;
use crate::optim::{self, FitOptions};
use crate::par;
use crate::sim::TrajectoryBuffer;

/// Default timestep for filtering dense (10 Hz) observations.
pub const FILTER_DT: f64 = 0.1;
/// Default timestep for reconstructing sparse (>= 1 s) observations.
pub const RECONSTRUCT_DT: f64 = 1.0;

/// Timestamped 1-D position observations for one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTrajectory {
    pub id: u64,
    pub timestamps: Vec<f64>,
    pub positions: Vec<f64>,
}

impl ObservedTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() < 2 {
            return Err(Error::invalid(format!(
                "trajectory {} needs at least 2 observations",
                self.id
            )));
        }
        if self.timestamps.len() != self.positions.len() {
            return Err(Error::invalid(format!(
                "trajectory {} has mismatched timestamp/position counts",
                self.id
            )));
        }
        for w in self.timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::data(format!(
                    "trajectory {} has non-increasing timestamps",
                    self.id
                )));
            }
        }
        if self.timestamps.iter().chain(self.positions.iter()).any(|x| !x.is_finite()) {
            return Err(Error::data(format!("trajectory {} has non-finite values", self.id)));
        }
        Ok(())
    }

    /// Shift so the first observation sits at t = 0, p = 0.
    pub fn normalized(&self) -> Self {
        let t0 = self.timestamps[0];
        let p0 = self.positions[0];
        ObservedTrajectory {
            id: self.id,
            timestamps: self.timestamps.iter().map(|t| t - t0).collect(),
            positions: self.positions.iter().map(|p| p - p0).collect(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.timestamps.last().unwrap() - self.timestamps[0]
    }

    /// Spatial extent, first to last observed position.
    pub fn spatial_length(&self) -> f64 {
        self.positions.last().unwrap() - self.positions[0]
    }
}

/// Output of fitting one trajectory.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub id: u64,
    pub params: IdmParams,
    /// Dense fitted trajectory at the simulation timestep.
    pub trajectory: TrajectoryBuffer,
    /// Reconstruction loss of the very first iterate.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Observed minus fitted position at each observation.
    pub residuals: Vec<f64>,
    /// Wall-clock seconds spent fitting.
    pub seconds: f64,
}

/// Nearest simulation step for each timestamp, ties rounding up.
///
/// Timestamps must be normalized to start at zero; an index beyond
/// `max_step` means the simulation horizon does not cover the data.
pub fn nearest_step_indices(timestamps: &[f64], dt: f64, max_step: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(timestamps.len());
    for &t in timestamps {
        if t < 0.0 {
            return Err(Error::invalid(format!("timestamp {t} precedes the origin")));
        }
        // Mathematical half-up rounding of t/dt; the bias term keeps exact
        // ties (e.g. 0.35/0.1) from landing just below .5 in floats.
        let k = (t / dt + 0.5 + 1e-9).floor() as usize;
        if k > max_step {
            return Err(Error::invalid(format!(
                "timestamp {t} maps to step {k}, beyond horizon {max_step}"
            )));
        }
        out.push(k);
    }
    Ok(out)
}

/// Sum of absolute position residuals at the observed steps, plus its
/// gradient with respect to every dense position.
///
/// The gradient of `|obs - sim|` with respect to the simulated position is
/// `-sign(obs - sim)`, zero at exact agreement.
pub fn reconstruction_loss(
    dense_positions: &[f64],
    obs_positions: &[f64],
    indices: &[usize],
) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; dense_positions.len()];
    for (&k, &obs) in indices.iter().zip(obs_positions.iter()) {
        let residual = obs - dense_positions[k];
        loss += residual.abs();
        grad[k] -= sign(residual);
    }
    (loss, grad)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fit every trajectory in the corpus at the filtering timestep.
pub fn run_filtering(corpus: &[ObservedTrajectory], opts: &FitOptions) -> Result<Vec<FitResult>> {
    run_batch(corpus, opts)
}

/// Fit every trajectory in the corpus at the reconstruction timestep.
pub fn run_reconstruction(
    corpus: &[ObservedTrajectory],
    opts: &FitOptions,
) -> Result<Vec<FitResult>> {
    run_batch(corpus, opts)
}

fn run_batch(corpus: &[ObservedTrajectory], opts: &FitOptions) -> Result<Vec<FitResult>> {
    let results = par::map_indexed(corpus.len(), |i| {
        let start = Instant::now();
        optim::fit(&corpus[i], opts).map(|mut r| {
            r.seconds = start.elapsed().as_secs_f64();
            r
        })
    });
    results.into_iter().collect()
}
