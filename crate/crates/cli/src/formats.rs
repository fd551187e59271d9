//! File formats: trajectory CSV input, scene JSON input, and the CSV/JSON
//! outputs. All emitted files carry a version marker; floats are written
//! with 17 significant digits so round-trips are bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use difftraffic::error::{Error, Result};
use difftraffic::idm::IdmParams;
use difftraffic::metrics::ParamHistogram;
use difftraffic::predict::{
    AgentTrack, LanePolyline, PredictionResult, SceneSample, FRAME_DT, FUTURE_FRAMES,
    HISTORY_FRAMES,
};
use difftraffic::tasks::ObservedTrajectory;

/// Version marker emitted as the first line of every CSV output.
pub const CSV_VERSION_HEADER: &str = "# difftraffic-v1";
/// Version field of every JSON output.
pub const JSON_VERSION: u64 = 1;

/// 17 significant digits; enough for f64 round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parse the CSV corpus: header `vehicle_id,timestamp_s,position_m`, rows
/// grouped by id and sorted by timestamp. Duplicate timestamps within an id
/// are rejected. `#`-prefixed lines are skipped.
pub fn read_trajectories(path: &Path) -> Result<Vec<ObservedTrajectory>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut groups: Vec<(u64, Vec<(f64, f64)>)> = Vec::new();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut saw_header = false;
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            let header: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if header != ["vehicle_id", "timestamp_s", "position_m"] {
                return Err(Error::data(format!(
                    "line {line_no}: expected header vehicle_id,timestamp_s,position_m"
                )));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::data(format!("line {line_no}: expected 3 fields")));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::data(format!("line {line_no}: bad vehicle id {:?}", fields[0])))?;
        let t: f64 = fields[1]
            .parse()
            .map_err(|_| Error::data(format!("line {line_no}: bad timestamp {:?}", fields[1])))?;
        let p: f64 = fields[2]
            .parse()
            .map_err(|_| Error::data(format!("line {line_no}: bad position {:?}", fields[2])))?;
        let slot = *index.entry(id).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push((t, p));
    }
    if !saw_header {
        return Err(Error::data(format!("{}: missing header line", path.display())));
    }
    if groups.is_empty() {
        eprintln!("warning: {} contains no observations", path.display());
    }
    let mut corpus = Vec::with_capacity(groups.len());
    for (id, mut rows) in groups {
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::data(format!(
                    "vehicle {id}: duplicate timestamp {}",
                    w[1].0
                )));
            }
        }
        corpus.push(ObservedTrajectory {
            id,
            timestamps: rows.iter().map(|r| r.0).collect(),
            positions: rows.iter().map(|r| r.1).collect(),
        });
    }
    Ok(corpus)
}

pub fn write_trajectories(path: &Path, corpus: &[ObservedTrajectory]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CSV_VERSION_HEADER}").unwrap();
    writeln!(out, "vehicle_id,timestamp_s,position_m").unwrap();
    for t in corpus {
        for (ts, p) in t.timestamps.iter().zip(t.positions.iter()) {
            writeln!(out, "{},{},{}", t.id, fmt_f64(*ts), fmt_f64(*p)).unwrap();
        }
    }
    write_file(path, &out)
}

/// One dense trajectory ready for CSV emission. `accels` may be one element
/// shorter than `positions`; the final value is repeated on output.
pub struct DenseRecord<'a> {
    pub dt: f64,
    pub positions: &'a [f64],
    pub speeds: &'a [f64],
    pub accels: &'a [f64],
}

pub fn write_dense_csv(dir: &Path, id: u64, record: &DenseRecord<'_>) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CSV_VERSION_HEADER}").unwrap();
    writeln!(out, "step,time_s,position_m,speed_mps,accel_mps2").unwrap();
    let n = record.positions.len();
    for k in 0..n {
        let a = if k < record.accels.len() {
            record.accels[k]
        } else {
            *record.accels.last().unwrap_or(&0.0)
        };
        writeln!(
            out,
            "{k},{},{},{},{}",
            fmt_f64(k as f64 * record.dt),
            fmt_f64(record.positions[k]),
            fmt_f64(record.speeds[k]),
            fmt_f64(a)
        )
        .unwrap();
    }
    write_file(&dir.join(format!("dense_{id}.csv")), &out)
}

/// Parsed dense CSV: (steps, times, positions, speeds, accels).
pub type DenseRows = (Vec<usize>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

pub fn read_dense_csv(path: &Path) -> Result<DenseRows> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: DenseRows = Default::default();
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("step,") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::data(format!("{}:{}: expected 5 fields", path.display(), line_no + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::data(format!("{}:{}: bad float {s:?}", path.display(), line_no + 1)))
        };
        rows.0.push(
            fields[0]
                .parse()
                .map_err(|_| Error::data(format!("{}:{}: bad step", path.display(), line_no + 1)))?,
        );
        rows.1.push(parse(fields[1])?);
        rows.2.push(parse(fields[2])?);
        rows.3.push(parse(fields[3])?);
        rows.4.push(parse(fields[4])?);
    }
    Ok(rows)
}

/// Fitted parameters per vehicle, in the optimization order.
pub fn write_params_csv(dir: &Path, rows: &[(u64, IdmParams)]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CSV_VERSION_HEADER}").unwrap();
    writeln!(out, "vehicle_id,a_max_mps2,a_pref_mps2,T_pref_s,s_min_m,v_targ_mps").unwrap();
    for (id, p) in rows {
        writeln!(
            out,
            "{id},{},{},{},{},{}",
            fmt_f64(p.a_max),
            fmt_f64(p.a_pref),
            fmt_f64(p.t_pref),
            fmt_f64(p.s_min),
            fmt_f64(p.v_targ)
        )
        .unwrap();
    }
    write_file(&dir.join("params.csv"), &out)
}

pub fn write_param_hist_csv(dir: &Path, histograms: &[ParamHistogram]) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CSV_VERSION_HEADER}").unwrap();
    writeln!(out, "parameter,bin_low,bin_high,count").unwrap();
    for h in histograms {
        for (low, high, count) in &h.bins {
            writeln!(out, "{},{},{},{count}", h.name, fmt_f64(*low), fmt_f64(*high)).unwrap();
        }
    }
    write_file(&dir.join("param_hist.csv"), &out)
}

/// Corpus metrics document for the fitting and baseline tasks.
#[derive(Debug, Serialize, Deserialize)]
pub struct CorpusMetricsDoc {
    pub version: u64,
    pub task: String,
    pub count: usize,
    pub pos_error_rate_pct: f64,
    pub accel_abs_mean: f64,
    pub accel_abs_std: f64,
    pub implausible_rate_pct: f64,
    pub negative_speed_rate_pct: f64,
    pub mean_seconds: f64,
}

/// Scene metrics document for the prediction task.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictMetricsDoc {
    pub version: u64,
    pub task: String,
    pub agents: usize,
    pub assigned: usize,
    pub constant_velocity: usize,
    pub evaluated: usize,
    pub min_ade_mean: f64,
    pub min_fde_mean: f64,
    pub miss_rate_pct: f64,
    pub mean_seconds: f64,
}

pub fn write_metrics_json<T: Serialize>(dir: &Path, doc: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| Error::data(format!("metrics serialization: {e}")))?;
    write_file(&dir.join("metrics.json"), &format!("{text}\n"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    #[serde(default)]
    version: Option<u64>,
    lanes: Vec<LaneDoc>,
    agents: Vec<AgentDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneDoc {
    id: u64,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    id: u64,
    history: Vec<[f64; 2]>,
    #[serde(default)]
    future: Option<Vec<[f64; 2]>>,
}

/// Parse and validate a scene JSON file.
pub fn read_scene(path: &Path) -> Result<SceneSample> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let doc: SceneDoc = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    if let Some(v) = doc.version {
        if v != JSON_VERSION {
            return Err(Error::data(format!("version: expected {JSON_VERSION}, found {v}")));
        }
    }
    let mut lanes = Vec::with_capacity(doc.lanes.len());
    for (i, lane) in doc.lanes.into_iter().enumerate() {
        if lane.points.len() < 2 {
            return Err(Error::data(format!(
                "lanes[{i}].points: a polyline needs at least 2 points"
            )));
        }
        lanes.push(
            LanePolyline::new(lane.id, lane.points)
                .map_err(|e| Error::data(format!("lanes[{i}]: {e}")))?,
        );
    }
    let mut agents = Vec::with_capacity(doc.agents.len());
    for (i, agent) in doc.agents.into_iter().enumerate() {
        if agent.history.len() != HISTORY_FRAMES {
            return Err(Error::data(format!(
                "agents[{i}].history: expected {HISTORY_FRAMES} frames, found {}",
                agent.history.len()
            )));
        }
        if let Some(future) = &agent.future {
            if future.len() != FUTURE_FRAMES {
                return Err(Error::data(format!(
                    "agents[{i}].future: expected {FUTURE_FRAMES} frames, found {}",
                    future.len()
                )));
            }
        }
        agents.push(AgentTrack { id: agent.id, history: agent.history, future: agent.future });
    }
    Ok(SceneSample { lanes, agents })
}

/// Serialize a scene in the input schema (used by generators and tests).
pub fn write_scene(path: &Path, scene: &SceneSample) -> Result<()> {
    #[derive(Serialize)]
    struct LaneOut<'a> {
        id: u64,
        points: &'a [[f64; 2]],
    }
    #[derive(Serialize)]
    struct AgentOut<'a> {
        id: u64,
        history: &'a [[f64; 2]],
        future: &'a Option<Vec<[f64; 2]>>,
    }
    #[derive(Serialize)]
    struct SceneOut<'a> {
        version: u64,
        lanes: Vec<LaneOut<'a>>,
        agents: Vec<AgentOut<'a>>,
    }
    let doc = SceneOut {
        version: JSON_VERSION,
        lanes: scene.lanes.iter().map(|l| LaneOut { id: l.id, points: &l.points }).collect(),
        agents: scene
            .agents
            .iter()
            .map(|a| AgentOut { id: a.id, history: &a.history, future: &a.future })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::data(format!("scene serialization: {e}")))?;
    write_file(path, &format!("{text}\n"))
}

pub fn write_predictions_csv(dir: &Path, result: &PredictionResult) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{CSV_VERSION_HEADER}").unwrap();
    writeln!(out, "agent_id,frame,time_s,x_m,y_m").unwrap();
    for agent in &result.agents {
        for (frame, point) in agent.points.iter().enumerate() {
            let frame = frame + 1;
            writeln!(
                out,
                "{},{frame},{},{},{}",
                agent.id,
                fmt_f64(frame as f64 * FRAME_DT),
                fmt_f64(point[0]),
                fmt_f64(point[1])
            )
            .unwrap();
        }
    }
    write_file(&dir.join("predictions.csv"), &out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Error::data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &x in &[0.1, -3.5e-7, 12345.678901234567, 1.0 / 3.0, 2.0f64.powi(-40)] {
            let parsed: f64 = fmt_f64(x).parse().unwrap();
            assert_eq!(parsed.to_bits(), x.to_bits());
        }
    }
}
