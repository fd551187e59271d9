//! Deterministic synthetic worlds, corpora and scenes for tests and
//! benchmarks. Everything is seeded; the same seed always produces the
//! same data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::idm::{accel_clamped, IdmParams};
use crate::predict::{AgentTrack, LanePolyline, SceneSample, FRAME_DT, FUTURE_FRAMES, HISTORY_FRAMES};
use crate::sim::{self, WorldState};
use crate::tasks::ObservedTrajectory;

/// Mean bumper spacing (m) on benchmark rings.
pub const RING_MEAN_SPACING: f64 = 25.0;

/// Speed at which the kernel's raw acceleration is zero for the given gap,
/// found by bisection. Unique because the raw term falls monotonically in
/// speed while the interaction term grows.
pub fn equilibrium_speed(params: &IdmParams, gap: f64) -> f64 {
    let raw = |v: f64| {
        let spacing = crate::idm::softplus(crate::idm::optimal_spacing(params, v, 0.0));
        params.a_max
            * (1.0 - (v / params.v_targ).powf(params.delta) - (spacing / gap).powi(2))
    };
    if raw(0.0) <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, params.v_targ);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if raw(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed ring of `n` identical vehicles, each following the next, the last
/// wrapping to the first. Speeds start at the equilibrium for the ring gap,
/// optionally jittered by `jitter` (fraction of the equilibrium speed).
pub fn ring_world(n: usize, params: IdmParams, jitter: f64, seed: u64) -> WorldState {
    assert!(n >= 2, "a ring needs at least two vehicles");
    let length = 4.5;
    let circumference = n as f64 * RING_MEAN_SPACING;
    let gap = RING_MEAN_SPACING - length;
    let v_eq = equilibrium_speed(&params, gap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speeds: Vec<f64> = (0..n)
        .map(|_| {
            if jitter > 0.0 {
                (v_eq * (1.0 + jitter * (rng.gen::<f64>() * 2.0 - 1.0))).max(0.0)
            } else {
                v_eq
            }
        })
        .collect();
    WorldState {
        positions: (0..n).map(|i| i as f64 * RING_MEAN_SPACING).collect(),
        speeds,
        lengths: vec![length; n],
        leader: (0..n).map(|i| Some((i + 1) % n)).collect(),
        params: vec![params; n],
        wrap: Some(circumference),
    }
}

/// Driver parameters drawn comfortably inside the optimizer boxes.
pub fn random_params_in_boxes(rng: &mut ChaCha8Rng) -> IdmParams {
    IdmParams {
        a_max: Uniform::new(5.5, 9.5).sample(rng),
        a_pref: Uniform::new(0.8, 3.0).sample(rng),
        s_min: Uniform::new(1.5, 6.0).sample(rng),
        t_pref: Uniform::new(0.6, 2.2).sample(rng),
        v_targ: Uniform::new(22.0, 40.0).sample(rng),
        ..IdmParams::default()
    }
}

/// Ground truth for one synthetic trajectory.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub params: IdmParams,
    /// Noise-free positions at every simulation step.
    pub positions: Vec<f64>,
    pub speeds: Vec<f64>,
    pub accels: Vec<f64>,
}

/// Simulate an ego vehicle following a scripted leader with a smoothly
/// varying speed profile, returning the dense ground truth.
pub fn follow_scripted_leader(
    params: &IdmParams,
    initial_gap: f64,
    base_speed: f64,
    steps: usize,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> SyntheticTruth {
    let length = 4.5;
    let amp1 = Uniform::new(0.0, 1.5).sample(rng);
    let amp2 = Uniform::new(0.0, 0.8).sample(rng);
    let period1 = Uniform::new(8.0, 20.0).sample(rng);
    let period2 = Uniform::new(3.0, 7.0).sample(rng);
    let phase1 = Uniform::new(0.0, std::f64::consts::TAU).sample(rng);
    let phase2 = Uniform::new(0.0, std::f64::consts::TAU).sample(rng);
    let lead_speed = |t: f64| -> f64 {
        (base_speed
            + amp1 * (std::f64::consts::TAU * t / period1 + phase1).sin()
            + amp2 * (std::f64::consts::TAU * t / period2 + phase2).sin())
        .max(0.0)
    };

    let mut lead_pos = initial_gap + length;
    let mut ego_pos = 0.0;
    let mut ego_speed = base_speed;
    let mut positions = vec![ego_pos];
    let mut speeds = vec![ego_speed];
    let mut accels = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let lead_v = lead_speed(t);
        let gap = lead_pos - ego_pos - length;
        let a = accel_clamped(params, ego_speed, gap, ego_speed - lead_v, dt);
        ego_pos += dt * ego_speed;
        ego_speed = (ego_speed + dt * a).max(0.0);
        lead_pos += dt * lead_v;
        positions.push(ego_pos);
        speeds.push(ego_speed);
        accels.push(a);
    }
    SyntheticTruth { params: *params, positions, speeds, accels }
}

/// A trajectory corpus with known ground truth: car-following simulations
/// observed at `observe_every` steps with Gaussian position noise.
pub fn noisy_corpus(
    count: usize,
    steps: usize,
    dt: f64,
    observe_every: usize,
    noise_sigma: f64,
    seed: u64,
) -> (Vec<ObservedTrajectory>, Vec<SyntheticTruth>) {
    let mut corpus = Vec::with_capacity(count);
    let mut truths = Vec::with_capacity(count);
    for id in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b9 + id as u64));
        let params = random_params_in_boxes(&mut rng);
        let base_speed = Uniform::new(8.0, 18.0).sample(&mut rng);
        let initial_gap = Uniform::new(15.0, 40.0).sample(&mut rng);
        let truth =
            follow_scripted_leader(&params, initial_gap, base_speed, steps, dt, &mut rng);
        let noise = Normal::new(0.0, noise_sigma).unwrap();
        let mut timestamps = Vec::new();
        let mut observed = Vec::new();
        for k in (0..=steps).step_by(observe_every) {
            timestamps.push(k as f64 * dt);
            let eps = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            observed.push(truth.positions[k] + eps);
        }
        corpus.push(ObservedTrajectory { id: id as u64, timestamps, positions: observed });
        truths.push(truth);
    }
    (corpus, truths)
}

/// Ground truth roles used when composing synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Platoon cruising behind a steady front vehicle.
    Cruise,
    /// Platoon braking to a stop behind a parked front vehicle.
    Queue,
}

/// Build one synthetic scene: a platoon on a straight or gently curved
/// lane, with agent histories and ground-truth futures generated by the
/// engine itself.
pub fn synthetic_scene(kind: SceneKind, agents: usize, curved: bool, seed: u64) -> SceneSample {
    assert!(agents >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = 4.5;

    // Lane geometry: long enough for the fastest cruise over the window.
    let lane_total = 900.0;
    let lane = if curved {
        // Gentle arc: ~700 m radius, sampled every ~15 m.
        let radius = Uniform::new(600.0, 900.0).sample(&mut rng);
        let points: Vec<[f64; 2]> = (0..=60)
            .map(|i| {
                let s = i as f64 / 60.0 * lane_total;
                let theta = s / radius;
                [radius * theta.sin(), radius * (1.0 - theta.cos())]
            })
            .collect();
        LanePolyline::new(1, points).unwrap()
    } else {
        LanePolyline::new(1, vec![[0.0, 0.0], [lane_total, 0.0]]).unwrap()
    };

    // Per-agent true parameters and platoon placement, front to back.
    let params: Vec<IdmParams> = (0..agents).map(|_| random_params_in_boxes(&mut rng)).collect();
    let (front_speed, front_held) = match kind {
        SceneKind::Cruise => {
            let v = Uniform::new(8.0, 16.0).sample(&mut rng);
            // Steady virtual leader at the equilibrium gap for this speed.
            let gap = equilibrium_gap(&params[0], v);
            (v, (gap, 0.0))
        }
        SceneKind::Queue => {
            // Parked close behind a virtual obstruction.
            (0.0, (1.0, 0.0))
        }
    };

    let mut positions = Vec::with_capacity(agents);
    let mut speeds = Vec::with_capacity(agents);
    let front_pos = 500.0;
    positions.push(front_pos);
    speeds.push(front_speed);
    for i in 1..agents {
        let speed = match kind {
            SceneKind::Cruise => front_speed,
            SceneKind::Queue => Uniform::new(0.0, 3.0).sample(&mut rng),
        };
        let gap = match kind {
            SceneKind::Cruise => equilibrium_gap(&params[i], speed),
            SceneKind::Queue => {
                Uniform::new(1.02, 1.3).sample(&mut rng) * equilibrium_gap(&params[i], speed)
            }
        };
        positions.push(positions[i - 1] - gap - length);
        speeds.push(speed);
    }

    // Leaders: each follows the one placed before it; the front is held.
    let world = WorldState {
        positions: positions.clone(),
        speeds: speeds.clone(),
        lengths: vec![length; agents],
        leader: (0..agents).map(|i| if i == 0 { None } else { Some(i - 1) }).collect(),
        params: params.clone(),
        wrap: None,
    };
    let mut held = vec![(0.0, 0.0); agents];
    held[0] = front_held;

    // History window plus future window in one rollout.
    let total_steps = (HISTORY_FRAMES - 1) + FUTURE_FRAMES;
    let buf = sim::rollout_held_gaps(&world, &held, total_steps, FRAME_DT)
        .expect("synthetic platoon rollout");

    let tracks: Vec<AgentTrack> = (0..agents)
        .map(|i| {
            let arc = buf.vehicle_positions(i);
            let history: Vec<[f64; 2]> = arc[..HISTORY_FRAMES]
                .iter()
                .map(|&s| lane.point_at_arc_length(s))
                .collect();
            let future: Vec<[f64; 2]> = arc[HISTORY_FRAMES..]
                .iter()
                .map(|&s| lane.point_at_arc_length(s))
                .collect();
            AgentTrack { id: i as u64 + 1, history, future: Some(future) }
        })
        .collect();

    SceneSample { lanes: vec![lane], agents: tracks }
}

/// Gap at which the kernel's raw acceleration vanishes for the given speed.
pub fn equilibrium_gap(params: &IdmParams, speed: f64) -> f64 {
    let spacing = crate::idm::softplus(crate::idm::optimal_spacing(params, speed, 0.0));
    let free = 1.0 - (speed / params.v_targ).powf(params.delta);
    if free <= 0.0 {
        return sim::FREE_ROAD_GAP;
    }
    spacing / free.sqrt()
}
