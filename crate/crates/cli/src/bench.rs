//! Ring-road throughput harness: forward and backward milliseconds per
//! step across a sweep of worker counts, plus a state checksum that must
//! not depend on the worker count.

use std::time::Instant;

use difftraffic::error::Result;
use difftraffic::idm::IdmParams;
use difftraffic::sim::{backward, rollout};
use difftraffic::synth::ring_world;

use crate::formats::CSV_VERSION_HEADER;

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub vehicles: usize,
    pub steps: usize,
    /// Maximum worker count of the sweep.
    pub max_threads: usize,
    /// Initial-speed jitter as a fraction of the ring equilibrium speed.
    pub jitter: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub vehicles: usize,
    pub threads: usize,
    pub steps: usize,
    pub forward_ms_per_step: f64,
    pub backward_ms_per_step: f64,
    /// FNV-1a over the final positions and speeds; thread-count invariant.
    pub state_checksum: u64,
}

/// Worker counts to measure: powers of two up to the cap, plus the cap.
pub fn thread_sweep(max: usize) -> Vec<usize> {
    let mut sweep = Vec::new();
    let mut t = 1;
    while t < max {
        sweep.push(t);
        t *= 2;
    }
    sweep.push(max.max(1));
    sweep.dedup();
    sweep
}

fn fnv1a(hash: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *hash ^= b as u64;
        *hash = hash.wrapping_mul(0x100000001b3);
    }
}

fn measure(args: &BenchArgs, threads: usize) -> Result<BenchRow> {
    let world = ring_world(args.vehicles, IdmParams::default(), args.jitter, args.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        let start = Instant::now();
        let buf = rollout(&world, args.steps, 0.1)?;
        let forward = start.elapsed().as_secs_f64();

        // Quadratic pull toward a fixed offset of every recorded position.
        let grad: Vec<f64> = buf.positions.iter().map(|p| 2.0 * (p - 1.0)).collect();
        let start = Instant::now();
        let adj = backward(&buf, &grad)?;
        let backward_s = start.elapsed().as_secs_f64();
        debug_assert!(adj.d_speed.iter().all(|g| g.is_finite()));

        let mut checksum = 0xcbf29ce484222325u64;
        let last = buf.steps * buf.vehicles;
        for x in &buf.positions[last..] {
            fnv1a(&mut checksum, &x.to_le_bytes());
        }
        for x in &buf.speeds[last..] {
            fnv1a(&mut checksum, &x.to_le_bytes());
        }

        Ok(BenchRow {
            vehicles: args.vehicles,
            threads,
            steps: args.steps,
            forward_ms_per_step: forward * 1e3 / args.steps as f64,
            backward_ms_per_step: backward_s * 1e3 / args.steps as f64,
            state_checksum: checksum,
        })
    })
}

/// Run the sweep and return one row per worker count.
pub fn run(args: &BenchArgs) -> Result<Vec<BenchRow>> {
    thread_sweep(args.max_threads).into_iter().map(|t| measure(args, t)).collect()
}

pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_VERSION_HEADER);
    out.push('\n');
    out.push_str("vehicles,threads,steps,forward_ms_per_step,backward_ms_per_step,state_checksum\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:016x}\n",
            r.vehicles, r.threads, r.steps, r.forward_ms_per_step, r.backward_ms_per_step, r.state_checksum
        ));
    }
    out
}
