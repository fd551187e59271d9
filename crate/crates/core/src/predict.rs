//! Training-free trajectory forecasting over lane polylines.
//!
//! Agents are assigned to the nearest lane, their 2-D histories projected to
//! arc length, driver parameters fitted on the one-second history, and the
//! joint future rolled out per lane group before mapping back to 2-D.
//!
//! Leader terms during the history fit come from the projected leader
//! history when a leader exists; leaderless agents fit free virtual-leader
//! sequences, and the final fitted (gap, closing) pair is held constant
//! through the future rollout so the inferred equilibrium keeps acting.

use crate::error::{Error, Result};
use crate::idm::IdmParams;
use crate::optim::{self, FitOptions, LeaderTerms};
use crate::par;
use crate::sim::{self, WorldState};
use crate::tasks::ObservedTrajectory;

/// Agents farther than this (m) from every lane stay unassigned.
pub const DEFAULT_LANE_THRESHOLD: f64 = 2.5;
/// Final-displacement threshold (m) for the miss rate.
pub const DEFAULT_MISS_THRESHOLD: f64 = 2.0;
/// History frames per agent, current frame included.
pub const HISTORY_FRAMES: usize = 11;
/// Future frames per agent.
pub const FUTURE_FRAMES: usize = 80;
/// Frame spacing (s); scenes are sampled at 10 Hz.
pub const FRAME_DT: f64 = 0.1;
/// Body length (m) assumed for scene agents, which carry none.
pub const DEFAULT_AGENT_LENGTH: f64 = 4.5;
/// Tolerated backward jitter (m) in projected arc lengths before an agent
/// counts as moving against the lane direction.
const ARC_MONOTONE_SLACK: f64 = 0.25;

/// Lane centerline with cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct LanePolyline {
    pub id: u64,
    pub points: Vec<[f64; 2]>,
    pub cum_lengths: Vec<f64>,
}

impl LanePolyline {
    pub fn new(id: u64, points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(format!("lane {id} needs at least 2 points")));
        }
        let mut cum_lengths = Vec::with_capacity(points.len());
        cum_lengths.push(0.0);
        for w in points.windows(2) {
            let seg = dist(w[0], w[1]);
            if seg <= 0.0 {
                return Err(Error::invalid(format!("lane {id} has a zero-length segment")));
            }
            cum_lengths.push(cum_lengths.last().unwrap() + seg);
        }
        Ok(LanePolyline { id, points, cum_lengths })
    }

    pub fn total_length(&self) -> f64 {
        *self.cum_lengths.last().unwrap()
    }

    /// Inverse arc-length mapping, clamped to the lane extent.
    pub fn point_at_arc_length(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.total_length());
        let seg = match self.cum_lengths.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(i) => i - 1,
        };
        let s0 = self.cum_lengths[seg];
        let s1 = self.cum_lengths[seg + 1];
        let alpha = (s - s0) / (s1 - s0);
        let a = self.points[seg];
        let b = self.points[seg + 1];
        [a[0] + alpha * (b[0] - a[0]), a[1] + alpha * (b[1] - a[1])]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Arc length and lateral distance of the closest point on the lane.
/// Ties across segments resolve to the smaller arc length.
pub fn project_to_lane(point: [f64; 2], lane: &LanePolyline) -> (f64, f64) {
    let mut best_s = 0.0;
    let mut best_d = f64::INFINITY;
    for i in 0..lane.points.len() - 1 {
        let a = lane.points[i];
        let b = lane.points[i + 1];
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len_sq = ab[0] * ab[0] + ab[1] * ab[1];
        let t = (((point[0] - a[0]) * ab[0] + (point[1] - a[1]) * ab[1]) / len_sq).clamp(0.0, 1.0);
        let proj = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let d = dist(point, proj);
        if d < best_d {
            best_d = d;
            best_s = lane.cum_lengths[i] + t * len_sq.sqrt();
        }
    }
    (best_s, best_d)
}

/// One agent's observed track: 2-D history (oldest first, current frame
/// last) and an optional ground-truth future for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub id: u64,
    pub history: Vec<[f64; 2]>,
    pub future: Option<Vec<[f64; 2]>>,
}

/// A forecasting sample: lanes plus agent tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub lanes: Vec<LanePolyline>,
    pub agents: Vec<AgentTrack>,
}

/// Index of the lane minimizing mean lateral distance over the history, or
/// `None` when that minimum exceeds the threshold or the projected arc
/// lengths run against the lane direction.
pub fn assign_lane(
    history: &[[f64; 2]],
    lanes: &[LanePolyline],
    threshold: f64,
) -> Result<Option<usize>> {
    if lanes.is_empty() {
        return Err(Error::invalid("no lanes to assign against"));
    }
    if history.is_empty() {
        return Err(Error::invalid("empty history"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, lane) in lanes.iter().enumerate() {
        let mean_d = history.iter().map(|&p| project_to_lane(p, lane).1).sum::<f64>()
            / history.len() as f64;
        if best.is_none_or(|(_, d)| mean_d < d) {
            best = Some((idx, mean_d));
        }
    }
    let (idx, mean_d) = best.unwrap();
    if mean_d > threshold {
        return Ok(None);
    }
    let arcs: Vec<f64> =
        history.iter().map(|&p| project_to_lane(p, &lanes[idx]).0).collect();
    if arcs.windows(2).any(|w| w[1] < w[0] - ARC_MONOTONE_SLACK) {
        return Ok(None);
    }
    Ok(Some(idx))
}

/// Per-entry leader links for agents on one lane, given (arc length, agent
/// id) pairs. The frontmost agent is leaderless; equal arc lengths break
/// toward the larger id being ahead.
pub fn order_on_lane(entries: &[(f64, u64)]) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        entries[a]
            .0
            .partial_cmp(&entries[b].0)
            .unwrap()
            .then(entries[a].1.cmp(&entries[b].1))
    });
    let mut leader = vec![None; entries.len()];
    for rank in 0..order.len().saturating_sub(1) {
        leader[order[rank]] = Some(order[rank + 1]);
    }
    leader
}

/// Tuning knobs for [`forecast`].
#[derive(Debug, Clone)]
pub struct PredictConfig {
    pub lane_threshold: f64,
    pub miss_threshold: f64,
    pub agent_length: f64,
    pub fit: FitOptions,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            lane_threshold: DEFAULT_LANE_THRESHOLD,
            miss_threshold: DEFAULT_MISS_THRESHOLD,
            agent_length: DEFAULT_AGENT_LENGTH,
            fit: FitOptions::with_dt(FRAME_DT),
        }
    }
}

/// One agent's forecast.
#[derive(Debug, Clone)]
pub struct AgentPrediction {
    pub id: u64,
    /// Lane id the agent was assigned to, if any.
    pub lane: Option<u64>,
    /// Predicted 2-D positions for the future frames.
    pub points: Vec<[f64; 2]>,
    pub params: Option<IdmParams>,
    /// True when the agent fell back to constant-velocity extrapolation.
    pub constant_velocity: bool,
    /// Per-agent failure note; the rest of the scene still completes.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub agents: Vec<AgentPrediction>,
}

fn constant_velocity_points(history: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let last = *history.last().unwrap();
    let step = if history.len() >= 2 {
        let prev = history[history.len() - 2];
        [last[0] - prev[0], last[1] - prev[1]]
    } else {
        [0.0, 0.0]
    };
    (1..=FUTURE_FRAMES)
        .map(|k| [last[0] + k as f64 * step[0], last[1] + k as f64 * step[1]])
        .collect()
}

struct FittedAgent {
    agent_idx: usize,
    arc_now: f64,
    speed_now: f64,
    params: IdmParams,
    held: (f64, f64),
}

/// Forecast every agent in the scene.
pub fn forecast(scene: &SceneSample, cfg: &PredictConfig) -> PredictionResult {
    let mut predictions: Vec<AgentPrediction> = scene
        .agents
        .iter()
        .map(|agent| AgentPrediction {
            id: agent.id,
            lane: None,
            points: constant_velocity_points(&agent.history),
            params: None,
            constant_velocity: true,
            error: None,
        })
        .collect();

    // Lane assignment per agent.
    let mut lane_of: Vec<Option<usize>> = Vec::with_capacity(scene.agents.len());
    for (i, agent) in scene.agents.iter().enumerate() {
        match assign_lane(&agent.history, &scene.lanes, cfg.lane_threshold) {
            Ok(lane) => lane_of.push(lane),
            Err(e) => {
                predictions[i].error = Some(e.to_string());
                lane_of.push(None);
            }
        }
    }

    for (lane_idx, lane) in scene.lanes.iter().enumerate() {
        let members: Vec<usize> = (0..scene.agents.len())
            .filter(|&i| lane_of[i] == Some(lane_idx))
            .collect();
        if members.is_empty() {
            continue;
        }

        // Project every member's history to arc length.
        let arcs: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| {
                scene.agents[i]
                    .history
                    .iter()
                    .map(|&p| project_to_lane(p, lane).0)
                    .collect()
            })
            .collect();
        let entries: Vec<(f64, u64)> = members
            .iter()
            .zip(arcs.iter())
            .map(|(&i, arc)| (*arc.last().unwrap(), scene.agents[i].id))
            .collect();
        let leader_links = order_on_lane(&entries);

        // Fit each member on its one-second history, in parallel.
        let fitted: Vec<std::result::Result<FittedAgent, (usize, String)>> =
            par::map_indexed(members.len(), |m| {
                fit_member(scene, cfg, &members, &arcs, &leader_links, m)
            });

        // Joint rollout of the successfully fitted members.
        let mut ok: Vec<FittedAgent> = Vec::new();
        for result in fitted {
            match result {
                Ok(f) => ok.push(f),
                Err((agent_idx, message)) => predictions[agent_idx].error = Some(message),
            }
        }
        if ok.is_empty() {
            continue;
        }
        let entries_ok: Vec<(f64, u64)> =
            ok.iter().map(|f| (f.arc_now, scene.agents[f.agent_idx].id)).collect();
        let links = order_on_lane(&entries_ok);
        let world = WorldState {
            positions: ok.iter().map(|f| f.arc_now).collect(),
            speeds: ok.iter().map(|f| f.speed_now).collect(),
            lengths: vec![cfg.agent_length; ok.len()],
            leader: links,
            params: ok.iter().map(|f| f.params).collect(),
            wrap: None,
        };
        let held: Vec<(f64, f64)> = ok.iter().map(|f| f.held).collect();
        match sim::rollout_held_gaps(&world, &held, FUTURE_FRAMES, FRAME_DT) {
            Ok(buf) => {
                for (slot, f) in ok.iter().enumerate() {
                    let pred = &mut predictions[f.agent_idx];
                    pred.lane = Some(lane.id);
                    pred.params = Some(f.params);
                    pred.constant_velocity = false;
                    pred.points = (1..=FUTURE_FRAMES)
                        .map(|k| lane.point_at_arc_length(buf.positions[k * ok.len() + slot]))
                        .collect();
                }
            }
            Err(e) => {
                for f in &ok {
                    predictions[f.agent_idx].error = Some(e.to_string());
                }
            }
        }
    }

    PredictionResult { agents: predictions }
}

fn fit_member(
    scene: &SceneSample,
    cfg: &PredictConfig,
    members: &[usize],
    arcs: &[Vec<f64>],
    leader_links: &[Option<usize>],
    m: usize,
) -> std::result::Result<FittedAgent, (usize, String)> {
    let agent_idx = members[m];
    let arc = &arcs[m];
    let frames = arc.len();
    let obs = ObservedTrajectory {
        id: scene.agents[agent_idx].id,
        timestamps: (0..frames).map(|j| j as f64 * FRAME_DT).collect(),
        positions: arc.clone(),
    };
    let speed_now = ((arc[frames - 1] - arc[frames - 2]) / FRAME_DT).max(0.0);

    let leader = match leader_links[m] {
        Some(lm) => {
            let lead_arc = &arcs[lm];
            let lead_speeds = frame_speeds(lead_arc);
            let ego_speeds = frame_speeds(arc);
            let terms: Vec<(f64, f64)> = (0..frames)
                .map(|k| {
                    (
                        lead_arc[k] - arc[k] - cfg.agent_length,
                        ego_speeds[k] - lead_speeds[k],
                    )
                })
                .collect();
            LeaderTerms::Fixed(terms)
        }
        None => LeaderTerms::Virtual,
    };

    let result = optim::fit_with_leader(&obs, leader, &cfg.fit)
        .map_err(|e| (agent_idx, e.to_string()))?;
    // Continuation for a frontmost agent: a virtual leader pinned at the
    // steady-state gap of the fitted parameters, so the inferred kinematic
    // state persists through the future window. The target is a hair above
    // zero because a parked vehicle's softplus floor never reaches it.
    let held = (
        crate::idm::gap_for_acceleration(
            &result.params,
            speed_now,
            FRAME_DT,
            1e-4,
            sim::FREE_ROAD_GAP,
        ),
        0.0,
    );
    Ok(FittedAgent {
        agent_idx,
        arc_now: *arc.last().unwrap(),
        speed_now,
        params: result.params,
        held,
    })
}

/// Forward-difference speeds over projected arc lengths, last repeated.
fn frame_speeds(arc: &[f64]) -> Vec<f64> {
    let mut speeds: Vec<f64> =
        arc.windows(2).map(|w| ((w[1] - w[0]) / FRAME_DT).max(0.0)).collect();
    speeds.push(*speeds.last().unwrap());
    speeds
}

/// Single-mode displacement metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementMetrics {
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss: bool,
}

/// Mean and final L2 error between prediction and ground truth, plus the
/// miss flag at the given final-displacement threshold.
pub fn displacement_metrics(
    prediction: &[[f64; 2]],
    truth: &[[f64; 2]],
    miss_threshold: f64,
) -> Result<DisplacementMetrics> {
    if prediction.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction has {} frames, ground truth {}",
            prediction.len(),
            truth.len()
        )));
    }
    if prediction.is_empty() {
        return Err(Error::invalid("empty prediction"));
    }
    let errors: Vec<f64> =
        prediction.iter().zip(truth.iter()).map(|(&p, &t)| dist(p, t)).collect();
    let min_ade = errors.iter().sum::<f64>() / errors.len() as f64;
    let min_fde = *errors.last().unwrap();
    Ok(DisplacementMetrics { min_ade, min_fde, miss: min_fde > miss_threshold })
}
