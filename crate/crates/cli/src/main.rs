use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use difftraffic::error::Error;
use difftraffic::tasks::{FILTER_DT, RECONSTRUCT_DT};
use difftraffic_cli::bench::{self, BenchArgs};
use difftraffic_cli::config::RunConfig;
use difftraffic_cli::run::{self, BaselineMethod};

/// Differentiable car-following simulation: trajectory filtering,
/// reconstruction, prediction, baselines and a throughput benchmark.
#[derive(Parser)]
#[command(name = "difftraffic", version, about)]
struct Cli {
    /// TOML configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the seeded parts of the pipeline (benchmark jitter).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap the worker count for all parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit physically valid trajectories to dense noisy observations.
    Filter {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulation timestep in seconds.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Reconstruct dense trajectories from sparse observations.
    Reconstruct {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run a model-free baseline over the same corpus format.
    Baseline {
        /// linear, ma or ema.
        #[arg(long)]
        method: String,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Forecast agent futures over lane polylines from a scene file.
    Predict {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lane_threshold: Option<f64>,
        #[arg(long)]
        miss_threshold: Option<f64>,
    },
    /// Measure forward/backward step cost on a ring road.
    Bench {
        #[arg(long)]
        vehicles: usize,
        #[arg(long)]
        steps: usize,
        /// Maximum worker count of the sweep.
        #[arg(long)]
        threads: Option<usize>,
        /// Initial-speed jitter fraction.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalFailure { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn required(path: Option<PathBuf>, fallback: Option<PathBuf>, what: &str) -> Result<PathBuf, Error> {
    path.or(fallback)
        .ok_or_else(|| Error::invalid(format!("missing required --{what} (or config entry)")))
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(threads) = cli.threads {
        config.threads = Some(threads);
    }
    if let Some(threads) = config.threads {
        if threads == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }

    match cli.command {
        Command::Filter { input, out, dt } => {
            if let Some(dt) = dt {
                config.dt = Some(dt);
            }
            let input = required(input, config.input.clone(), "input")?;
            let out = required(out, config.out.clone(), "out")?;
            let opts = config.fit_options(FILTER_DT)?;
            run::run_fitting_task("filter", &input, &out, &opts)
        }
        Command::Reconstruct { input, out, dt } => {
            if let Some(dt) = dt {
                config.dt = Some(dt);
            }
            let input = required(input, config.input.clone(), "input")?;
            let out = required(out, config.out.clone(), "out")?;
            let opts = config.fit_options(RECONSTRUCT_DT)?;
            run::run_fitting_task("reconstruct", &input, &out, &opts)
        }
        Command::Baseline { method, input, out, dt } => {
            let method: BaselineMethod = method.parse()?;
            if let Some(dt) = dt {
                config.dt = Some(dt);
            }
            let input = required(input, config.input.clone(), "input")?;
            let out = required(out, config.out.clone(), "out")?;
            let dt = config.dt.unwrap_or(FILTER_DT);
            run::run_baseline_task(method, &input, &out, dt)
        }
        Command::Predict { scene, out, lane_threshold, miss_threshold } => {
            if let Some(t) = lane_threshold {
                config.lane_threshold = Some(t);
            }
            if let Some(t) = miss_threshold {
                config.miss_threshold = Some(t);
            }
            let scene = required(scene, config.input.clone(), "scene")?;
            let out = required(out, config.out.clone(), "out")?;
            let cfg = config.predict_config()?;
            run::run_predict_task(&scene, &out, &cfg)
        }
        Command::Bench { vehicles, steps, threads, jitter } => {
            if vehicles < 2 {
                return Err(Error::invalid("bench needs at least 2 vehicles"));
            }
            if steps == 0 {
                return Err(Error::invalid("bench needs at least 1 step"));
            }
            let max_threads = threads
                .or(config.threads)
                .unwrap_or_else(|| {
                    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
                });
            let args = BenchArgs {
                vehicles,
                steps,
                max_threads,
                jitter,
                seed: config.seed.unwrap_or(0),
            };
            let rows = bench::run(&args)?;
            print!("{}", bench::render_csv(&rows));
            Ok(())
        }
    }
}
