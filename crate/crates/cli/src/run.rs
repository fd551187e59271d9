//! Task orchestration: drive the library over a corpus or scene and emit
//! the output files.

use std::path::Path;
use std::time::Instant;

use difftraffic::baselines::{
    self, exponential_moving_average, linear_interpolate, moving_average, DenseTrajectory,
};
use difftraffic::error::{Error, Result};
use difftraffic::metrics::{self, TrajectoryReport};
use difftraffic::optim::FitOptions;
use difftraffic::predict::{displacement_metrics, forecast, PredictConfig, SceneSample};
use difftraffic::tasks::{self, FitResult, ObservedTrajectory};

use crate::formats::{
    self, CorpusMetricsDoc, DenseRecord, PredictMetricsDoc, JSON_VERSION,
};

/// Fitted-trajectory report: accelerations come from the recorded kernel
/// outputs, so speeds are non-negative by construction.
fn report_for_fit(result: &FitResult, obs: &ObservedTrajectory, dt: f64) -> Result<TrajectoryReport> {
    let (mean, std) = metrics::acceleration_stats(&result.trajectory.accels)?;
    Ok(TrajectoryReport {
        id: result.id,
        pos_error_rate_pct: metrics::positional_error_rate(&result.trajectory.positions, dt, obs)?,
        accel_abs_mean: mean,
        accel_abs_std: std,
        implausible: metrics::implausible(&result.trajectory.accels),
        negative_speed_steps: result.trajectory.speeds.iter().filter(|&&v| v < 0.0).count(),
        seconds: result.seconds,
        params: Some(result.params),
    })
}

fn report_for_baseline(
    id: u64,
    dense: &DenseTrajectory,
    obs: &ObservedTrajectory,
    seconds: f64,
) -> Result<TrajectoryReport> {
    let (mean, std) = metrics::acceleration_stats(&dense.accels)?;
    Ok(TrajectoryReport {
        id,
        pos_error_rate_pct: metrics::positional_error_rate(&dense.positions, dense.dt, obs)?,
        accel_abs_mean: mean,
        accel_abs_std: std,
        implausible: metrics::implausible(&dense.accels),
        negative_speed_steps: dense.speeds.iter().filter(|&&v| v < 0.0).count(),
        seconds,
        params: None,
    })
}

fn write_corpus_outputs(
    out: &Path,
    task: &str,
    reports: &[TrajectoryReport],
    dense: &[(u64, DenseRecord<'_>)],
    params: &[(u64, difftraffic::IdmParams)],
) -> Result<()> {
    for (id, record) in dense {
        formats::write_dense_csv(out, *id, record)?;
    }
    if reports.is_empty() {
        formats::write_metrics_json(
            out,
            &CorpusMetricsDoc {
                version: JSON_VERSION,
                task: task.to_string(),
                count: 0,
                pos_error_rate_pct: 0.0,
                accel_abs_mean: 0.0,
                accel_abs_std: 0.0,
                implausible_rate_pct: 0.0,
                negative_speed_rate_pct: 0.0,
                mean_seconds: 0.0,
            },
        )?;
        return Ok(());
    }
    let summary = metrics::aggregate(reports)?;
    formats::write_metrics_json(
        out,
        &CorpusMetricsDoc {
            version: JSON_VERSION,
            task: task.to_string(),
            count: summary.count,
            pos_error_rate_pct: summary.pos_error_rate_pct,
            accel_abs_mean: summary.accel_abs_mean,
            accel_abs_std: summary.accel_abs_std,
            implausible_rate_pct: summary.implausible_rate_pct,
            negative_speed_rate_pct: summary.negative_speed_rate_pct,
            mean_seconds: summary.mean_seconds,
        },
    )?;
    if !params.is_empty() {
        formats::write_params_csv(out, params)?;
        formats::write_param_hist_csv(out, &summary.histograms)?;
    }
    Ok(())
}

/// Shared driver for `filter` and `reconstruct`.
pub fn run_fitting_task(
    task: &str,
    input: &Path,
    out: &Path,
    opts: &FitOptions,
) -> Result<()> {
    let corpus = formats::read_trajectories(input)?;
    let results = if task == "filter" {
        tasks::run_filtering(&corpus, opts)?
    } else {
        tasks::run_reconstruction(&corpus, opts)?
    };
    let mut reports = Vec::with_capacity(results.len());
    for (result, obs) in results.iter().zip(corpus.iter()) {
        reports.push(report_for_fit(result, obs, opts.dt)?);
    }
    let dense: Vec<(u64, DenseRecord<'_>)> = results
        .iter()
        .map(|r| {
            (
                r.id,
                DenseRecord {
                    dt: opts.dt,
                    positions: &r.trajectory.positions,
                    speeds: &r.trajectory.speeds,
                    accels: &r.trajectory.accels,
                },
            )
        })
        .collect();
    let params: Vec<(u64, difftraffic::IdmParams)> =
        results.iter().map(|r| (r.id, r.params)).collect();
    write_corpus_outputs(out, task, &reports, &dense, &params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Linear,
    MovingAverage,
    Ema,
}

impl std::str::FromStr for BaselineMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(BaselineMethod::Linear),
            "ma" => Ok(BaselineMethod::MovingAverage),
            "ema" => Ok(BaselineMethod::Ema),
            other => Err(Error::invalid(format!(
                "unknown baseline method {other:?} (expected linear|ma|ema)"
            ))),
        }
    }
}

pub fn run_baseline_task(
    method: BaselineMethod,
    input: &Path,
    out: &Path,
    dt: f64,
) -> Result<()> {
    let corpus = formats::read_trajectories(input)?;
    let mut reports = Vec::with_capacity(corpus.len());
    let mut dense_store: Vec<(u64, DenseTrajectory)> = Vec::with_capacity(corpus.len());
    for obs in &corpus {
        let start = Instant::now();
        let interpolated = linear_interpolate(obs, dt)?;
        let dense = match method {
            BaselineMethod::Linear => interpolated,
            BaselineMethod::MovingAverage => moving_average(&interpolated, baselines::MA_WINDOW)?,
            BaselineMethod::Ema => exponential_moving_average(&interpolated, baselines::EMA_WIDTH)?,
        };
        let seconds = start.elapsed().as_secs_f64();
        reports.push(report_for_baseline(obs.id, &dense, obs, seconds)?);
        dense_store.push((obs.id, dense));
    }
    let task = match method {
        BaselineMethod::Linear => "baseline_linear",
        BaselineMethod::MovingAverage => "baseline_ma",
        BaselineMethod::Ema => "baseline_ema",
    };
    let dense: Vec<(u64, DenseRecord<'_>)> = dense_store
        .iter()
        .map(|(id, d)| {
            (*id, DenseRecord { dt: d.dt, positions: &d.positions, speeds: &d.speeds, accels: &d.accels })
        })
        .collect();
    write_corpus_outputs(out, task, &reports, &dense, &[])
}

pub fn run_predict_task(scene_path: &Path, out: &Path, cfg: &PredictConfig) -> Result<()> {
    let scene: SceneSample = formats::read_scene(scene_path)?;
    let start = Instant::now();
    let result = forecast(&scene, cfg);
    let seconds = start.elapsed().as_secs_f64();

    for agent in &result.agents {
        if let Some(message) = &agent.error {
            eprintln!("warning: agent {}: {message}", agent.id);
        }
    }

    let mut evaluated = 0usize;
    let mut ade_sum = 0.0;
    let mut fde_sum = 0.0;
    let mut misses = 0usize;
    for (agent, track) in result.agents.iter().zip(scene.agents.iter()) {
        if let Some(truth) = &track.future {
            let m = displacement_metrics(&agent.points, truth, cfg.miss_threshold)?;
            evaluated += 1;
            ade_sum += m.min_ade;
            fde_sum += m.min_fde;
            misses += m.miss as usize;
        }
    }

    formats::write_predictions_csv(out, &result)?;
    let fitted: Vec<(u64, difftraffic::IdmParams)> = result
        .agents
        .iter()
        .filter_map(|a| a.params.map(|p| (a.id, p)))
        .collect();
    if !fitted.is_empty() {
        formats::write_params_csv(out, &fitted)?;
    }
    formats::write_metrics_json(
        out,
        &PredictMetricsDoc {
            version: JSON_VERSION,
            task: "predict".to_string(),
            agents: result.agents.len(),
            assigned: result.agents.iter().filter(|a| a.lane.is_some()).count(),
            constant_velocity: result.agents.iter().filter(|a| a.constant_velocity).count(),
            evaluated,
            min_ade_mean: if evaluated > 0 { ade_sum / evaluated as f64 } else { 0.0 },
            min_fde_mean: if evaluated > 0 { fde_sum / evaluated as f64 } else { 0.0 },
            miss_rate_pct: if evaluated > 0 {
                misses as f64 / evaluated as f64 * 100.0
            } else {
                0.0
            },
            mean_seconds: seconds / result.agents.len().max(1) as f64,
        },
    )
}
