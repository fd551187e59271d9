//! Evaluation criteria for the fitting tasks: positional error rate,
//! acceleration magnitude statistics, the physical-plausibility flag, and
//! corpus-level aggregation with parameter histograms.

use crate::error::{Error, Result};
use crate::idm::IdmParams;
use crate::tasks::{nearest_step_indices, ObservedTrajectory};

/// Any step with |acceleration| above this (m/s^2) marks the trajectory
/// physically implausible; real-world magnitudes rarely pass 3.
pub const IMPLAUSIBLE_ACCEL: f64 = 10.0;

/// Histogram resolution for parameter distributions.
pub const HISTOGRAM_BINS: usize = 20;

/// Per-trajectory evaluation record.
#[derive(Debug, Clone)]
pub struct TrajectoryReport {
    pub id: u64,
    /// Mean |residual| / spatial length, in percent.
    pub pos_error_rate_pct: f64,
    pub accel_abs_mean: f64,
    pub accel_abs_std: f64,
    pub implausible: bool,
    /// Steps with negative derived speed (only baselines can have any).
    pub negative_speed_steps: usize,
    pub seconds: f64,
    /// Fitted parameters when the method produces them.
    pub params: Option<IdmParams>,
}

/// Mean over observations of |observed - dense| divided by the spatial
/// trajectory length, in percent.
pub fn positional_error_rate(
    dense_positions: &[f64],
    dt: f64,
    obs: &ObservedTrajectory,
) -> Result<f64> {
    obs.validate()?;
    let obs = obs.normalized();
    let length = obs.spatial_length();
    if length <= 0.0 {
        return Err(Error::invalid(format!(
            "trajectory {} has no spatial extent",
            obs.id
        )));
    }
    let indices = nearest_step_indices(&obs.timestamps, dt, dense_positions.len() - 1)?;
    let mean_ratio = indices
        .iter()
        .zip(obs.positions.iter())
        .map(|(&k, &p)| (p - dense_positions[k]).abs() / length)
        .sum::<f64>()
        / obs.positions.len() as f64;
    Ok(mean_ratio * 100.0)
}

/// Population mean and standard deviation of |acceleration|.
pub fn acceleration_stats(accels: &[f64]) -> Result<(f64, f64)> {
    if accels.is_empty() {
        return Err(Error::invalid("no accelerations to summarize"));
    }
    let n = accels.len() as f64;
    let mean = accels.iter().map(|a| a.abs()).sum::<f64>() / n;
    let var = accels.iter().map(|a| (a.abs() - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// True iff any step's |acceleration| strictly exceeds the plausibility
/// threshold.
pub fn implausible(accels: &[f64]) -> bool {
    accels.iter().any(|a| a.abs() > IMPLAUSIBLE_ACCEL)
}

/// One histogram of a fitted parameter across the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamHistogram {
    pub name: &'static str,
    /// (bin_low, bin_high, count) triples covering the observed range.
    pub bins: Vec<(f64, f64, usize)>,
}

/// Corpus-level summary: plain means of the per-trajectory values plus
/// parameter histograms over whatever reports carry parameters.
#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub count: usize,
    pub pos_error_rate_pct: f64,
    pub accel_abs_mean: f64,
    pub accel_abs_std: f64,
    pub implausible_rate_pct: f64,
    pub negative_speed_rate_pct: f64,
    pub mean_seconds: f64,
    pub histograms: Vec<ParamHistogram>,
}

pub fn aggregate(reports: &[TrajectoryReport]) -> Result<CorpusSummary> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let n = reports.len() as f64;
    let params: Vec<IdmParams> = reports.iter().filter_map(|r| r.params).collect();
    Ok(CorpusSummary {
        count: reports.len(),
        pos_error_rate_pct: reports.iter().map(|r| r.pos_error_rate_pct).sum::<f64>() / n,
        accel_abs_mean: reports.iter().map(|r| r.accel_abs_mean).sum::<f64>() / n,
        accel_abs_std: reports.iter().map(|r| r.accel_abs_std).sum::<f64>() / n,
        implausible_rate_pct: reports.iter().filter(|r| r.implausible).count() as f64 / n * 100.0,
        negative_speed_rate_pct: reports.iter().filter(|r| r.negative_speed_steps > 0).count()
            as f64
            / n
            * 100.0,
        mean_seconds: reports.iter().map(|r| r.seconds).sum::<f64>() / n,
        histograms: parameter_histograms(&params, HISTOGRAM_BINS),
    })
}

/// Equal-width histograms over the observed range of each parameter.
pub fn parameter_histograms(params: &[IdmParams], bins: usize) -> Vec<ParamHistogram> {
    if params.is_empty() || bins == 0 {
        return Vec::new();
    }
    type Getter = fn(&IdmParams) -> f64;
    let fields: [(&'static str, Getter); 5] = [
        ("a_max", |p| p.a_max),
        ("a_pref", |p| p.a_pref),
        ("t_pref", |p| p.t_pref),
        ("s_min", |p| p.s_min),
        ("v_targ", |p| p.v_targ),
    ];
    fields
        .iter()
        .map(|(name, get)| {
            let values: Vec<f64> = params.iter().map(get).collect();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return ParamHistogram { name, bins: vec![(lo, hi, values.len())] };
            }
            let width = (hi - lo) / bins as f64;
            let mut counts = vec![0usize; bins];
            for v in &values {
                let idx = (((v - lo) / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
            ParamHistogram {
                name,
                bins: counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
                    .collect(),
            }
        })
        .collect()
}
