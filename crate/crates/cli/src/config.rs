//! Run configuration: defaults, TOML config files, and the merge with
//! command-line flags (flags win).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use difftraffic::error::{Error, Result};
use difftraffic::optim::{Bounds, BoxConstraints, FitOptions};
use difftraffic::predict::{self, PredictConfig};

/// Everything a run can be configured with. Field defaults match the
/// built-in values used when neither the config file nor a flag sets them.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Simulation timestep; tasks pick their own default when unset.
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub lane_threshold: Option<f64>,
    pub miss_threshold: Option<f64>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub bounds: Option<BoundsConfig>,
}

/// `[low, high]` pairs per optimizable parameter.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub a_max: Option<[f64; 2]>,
    pub a_pref: Option<[f64; 2]>,
    pub t_pref: Option<[f64; 2]>,
    pub s_min: Option<[f64; 2]>,
    pub v_targ: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::data(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid("config dt must be positive"));
            }
        }
        if self.steps == Some(0) {
            return Err(Error::invalid("config steps must be at least 1"));
        }
        for (name, value) in
            [("lane_threshold", self.lane_threshold), ("miss_threshold", self.miss_threshold)]
        {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(format!("config {name} must be positive")));
                }
            }
        }
        self.fit_options(0.1)?;
        Ok(())
    }

    /// Fit options for a task whose default timestep is `default_dt`.
    pub fn fit_options(&self, default_dt: f64) -> Result<FitOptions> {
        let mut opts = FitOptions::with_dt(self.dt.unwrap_or(default_dt));
        if let Some(steps) = self.steps {
            opts.steps = steps;
        }
        if let Some(lr) = self.lr_start {
            opts.lr_start = lr;
        }
        if let Some(lr) = self.lr_end {
            opts.lr_end = lr;
        }
        if let Some(bounds) = &self.bounds {
            let mut boxes = BoxConstraints::default();
            let pairs: [(&Option<[f64; 2]>, &mut Bounds); 5] = [
                (&bounds.a_max, &mut boxes.a_max),
                (&bounds.a_pref, &mut boxes.a_pref),
                (&bounds.t_pref, &mut boxes.t_pref),
                (&bounds.s_min, &mut boxes.s_min),
                (&bounds.v_targ, &mut boxes.v_targ),
            ];
            for (source, target) in pairs {
                if let Some([low, high]) = source {
                    *target = Bounds { low: *low, high: *high };
                }
            }
            boxes.validate()?;
            opts.boxes = boxes;
        }
        Ok(opts)
    }

    pub fn predict_config(&self) -> Result<PredictConfig> {
        let fit = self.fit_options(predict::FRAME_DT)?;
        Ok(PredictConfig {
            lane_threshold: self.lane_threshold.unwrap_or(predict::DEFAULT_LANE_THRESHOLD),
            miss_threshold: self.miss_threshold.unwrap_or(predict::DEFAULT_MISS_THRESHOLD),
            agent_length: predict::DEFAULT_AGENT_LENGTH,
            fit,
        })
    }
}
