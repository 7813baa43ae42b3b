//! Command-line front end: single solves, sweeps, baseline comparisons,
//! state validation, and channel dumps.
//!
//! Data goes to stdout and the output directory; logs go to stderr. Exit
//! codes are stable: 0 success, 1 infeasible, 2 config/usage error,
//! 3 iteration cap, 4 I/O error, 5 internal failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use abcn_core::bcd::{self, TerminationReason};
use abcn_core::bench::{self, BenchPowerRule, SweepSpec};
use abcn_core::channel::{frequency_response, sample_taps};
use abcn_core::config::ConfigFile;
use abcn_core::metrics;
use abcn_core::solvers::SubproblemStatus;
use abcn_core::stateio;

const EXIT_OK: u8 = 0;
const EXIT_INFEASIBLE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ITERATION_CAP: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_INTERNAL: u8 = 5;

/// Environment variable naming the default output root.
const OUT_ROOT_ENV: &str = "ABCN_OUT_ROOT";

#[derive(Parser)]
#[command(name = "abcn", version, about = "Max-min backscatter network designer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Config file path, or a preset name (fig3, fig4).
    #[arg(long, short = 'c')]
    config: String,
    /// Channel realization seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: $ABCN_OUT_ROOT/<subcommand> or runs/<subcommand>).
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
    /// Scenario overrides, key=value, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Verbosity; repeat for per-solver dumps.
    #[arg(long, short = 'v', action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one channel realization and run the joint optimizer.
    Solve(CommonArgs),
    /// Run the sweeps defined in the config's [experiment] section.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        /// Let the baseline spend the full power budget.
        #[arg(long)]
        bench_full_power: bool,
    },
    /// Compare the joint design against the equal-allocation baseline on one
    /// realization.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Let the baseline spend the full power budget.
        #[arg(long)]
        bench_full_power: bool,
    },
    /// Check a saved allocation state against every constraint.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Allocation state CSV produced by `solve`.
        #[arg(long)]
        state: PathBuf,
    },
    /// Write taps and frequency responses for one realization as CSV.
    DumpChannels(CommonArgs),
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, String> {
    raw.iter()
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| format!("override '{pair}' is not of the form key=value"))
        })
        .collect()
}

fn out_dir(common: &CommonArgs, subcommand: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| {
        let root = std::env::var(OUT_ROOT_ENV).unwrap_or_else(|_| "runs".to_string());
        Path::new(&root).join(subcommand)
    })
}

fn log(common: &CommonArgs, message: &str) {
    if common.verbose > 0 {
        eprintln!("abcn: {message}");
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<abcn_core::Error> for Failure {
    fn from(err: abcn_core::Error) -> Self {
        let code = match &err {
            abcn_core::Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Failure::new(code, err.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::new(EXIT_IO, err.to_string())
    }
}

fn load_config(common: &CommonArgs) -> Result<ConfigFile, Failure> {
    let overrides = parse_overrides(&common.set).map_err(|m| Failure::new(EXIT_CONFIG, m))?;
    Ok(ConfigFile::load(&common.config, &overrides)?)
}

fn write_solver_traces(dir: &Path, trace: &bcd::SolveTrace) -> Result<(), Failure> {
    let mut csv = String::from("iteration,q,q_after_time,q_after_reflection,q_lower_bound,wall_ms\n");
    for it in &trace.iterations {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            it.iteration, it.q, it.q_after_time, it.q_after_reflection, it.q_lower_bound, it.wall_ms
        ));
    }
    std::fs::write(dir.join("iterations.csv"), csv)?;
    Ok(())
}

/// Debug dump (`-vv`): re-solve each block at the final state and record the
/// solvers' own progress traces.
fn write_block_traces(
    dir: &Path,
    config: &abcn_core::ScenarioConfig,
    grid: &abcn_core::FrequencyGrid,
    state: &abcn_core::AllocationState,
) -> Result<(), Failure> {
    use abcn_core::solvers::{self, TracePoint};
    let dump = |name: &str, points: &[TracePoint]| -> Result<(), Failure> {
        let mut csv = String::from("iteration,objective,residual\n");
        for p in points {
            csv.push_str(&format!("{},{},{}\n", p.iteration, p.objective, p.residual));
        }
        std::fs::write(dir.join(format!("block_{name}.csv")), csv)?;
        Ok(())
    };
    let time = solvers::solve_time_allocation(grid, config, &state.alpha, &state.p);
    dump("time", &time.trace)?;
    let reflection = solvers::solve_reflection(grid, config, &state.tau, &state.p);
    dump("reflection", &reflection.trace)?;
    let power = solvers::solve_power_sco(grid, config, &state.tau, &state.alpha, &state.p);
    dump("power", &power.trace)?;
    Ok(())
}

fn run_solve(common: &CommonArgs) -> Result<u8, Failure> {
    let file = load_config(common)?;
    let config = file.scenario;
    let dir = out_dir(common, "solve");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join("resolved_config.toml"),
        toml::to_string_pretty(&config).map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?,
    )?;

    log(common, &format!("sampling channels with seed {}", common.seed));
    let taps = sample_taps(&config, common.seed);
    let grid = frequency_response(&taps, config.n)?;
    let init = bcd::default_init(&grid, &config);
    let trace = bcd::optimize(&grid, &config, init);

    let json = serde_json::to_string_pretty(&trace).map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?;
    std::fs::write(dir.join("trace.json"), &json)?;
    std::fs::write(dir.join("final_state.csv"), stateio::state_to_csv(&trace.final_state))?;
    if common.verbose > 0 {
        write_solver_traces(&dir, &trace)?;
    }
    if common.verbose > 1 {
        write_block_traces(&dir, &config, &grid, &trace.final_state)?;
    }
    println!("{json}");
    if let Some(warning) = &trace.warning {
        eprintln!("abcn: warning: {warning}");
    }
    Ok(match trace.termination_reason {
        TerminationReason::Converged => EXIT_OK,
        TerminationReason::Infeasible => EXIT_INFEASIBLE,
        TerminationReason::IterationCap => EXIT_ITERATION_CAP,
        TerminationReason::MonotonicityViolation | TerminationReason::SolverFailure => EXIT_INTERNAL,
    })
}

fn run_sweep(common: &CommonArgs, jobs: Option<usize>, bench_full_power: bool) -> Result<u8, Failure> {
    if let Some(jobs) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?;
    }
    let file = load_config(common)?;
    let experiment = file
        .experiment
        .clone()
        .ok_or_else(|| Failure::new(EXIT_CONFIG, "config has no [experiment] section"))?;
    if experiment.sweeps.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "config defines no sweeps"));
    }
    let dir = out_dir(common, "sweep");
    std::fs::create_dir_all(&dir)?;
    let rule = if bench_full_power || experiment.bench_full_power {
        BenchPowerRule::FullBudget
    } else {
        BenchPowerRule::SlotAverage
    };

    for sweep in &experiment.sweeps {
        let base = file.scenario_for_sweep(sweep)?;
        let spec = SweepSpec {
            label: sweep.name.clone(),
            base,
            var: sweep.var,
            values: sweep.values.clone(),
            realizations: experiment.realizations,
            base_seed: experiment.base_seed,
            bench_rule: rule,
        };
        log(common, &format!("running sweep '{}' ({} points x {} realizations)", spec.label, spec.values.len(), spec.realizations));
        let records = bench::run_sweep(&spec);
        let rows = bench::aggregate(&records);
        std::fs::write(dir.join(format!("{}_runs.csv", spec.label)), bench::runs_csv(&records))?;
        std::fs::write(dir.join(format!("{}_agg.csv", spec.label)), bench::aggregate_csv(&rows))?;
        let echo = serde_json::to_string_pretty(&spec).map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?;
        std::fs::write(dir.join(format!("{}_spec.json", spec.label)), echo)?;
        println!("{}", serde_json::json!({ "sweep": spec.label, "aggregate": rows }));
    }
    Ok(EXIT_OK)
}

fn run_bench(common: &CommonArgs, bench_full_power: bool) -> Result<u8, Failure> {
    let file = load_config(common)?;
    let config = file.scenario;
    let taps = sample_taps(&config, common.seed);
    let grid = frequency_response(&taps, config.n)?;
    let rule = if bench_full_power { BenchPowerRule::FullBudget } else { BenchPowerRule::SlotAverage };
    let bench_result = bench::solve_benchmark_with_rule(&grid, &config, rule);
    let trace = bcd::optimize(&grid, &config, bcd::default_init(&grid, &config));
    let summary = serde_json::json!({
        "seed": common.seed,
        "benchmark": bench_result,
        "joint": {
            "q": trace.final_state.q,
            "termination_reason": trace.termination_reason,
            "iterations": trace.iterations.len(),
        },
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?);
    let joint_ok = trace.termination_reason == TerminationReason::Converged;
    let bench_ok = bench_result.status == SubproblemStatus::Optimal;
    Ok(if joint_ok || bench_ok { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn run_validate(common: &CommonArgs, state_path: &Path) -> Result<u8, Failure> {
    let file = load_config(common)?;
    let config = file.scenario;
    let text = std::fs::read_to_string(state_path)?;
    let state = stateio::state_from_csv(&text)?;
    if state.tau.len() != config.m || state.p.ncols() != config.n {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!(
                "state has {} devices x {} subcarriers but the scenario expects {} x {}",
                state.tau.len(),
                state.p.ncols(),
                config.m,
                config.n
            ),
        ));
    }
    let taps = sample_taps(&config, common.seed);
    let grid = frequency_response(&taps, config.n)?;
    let report = metrics::check_feasibility(&state, &grid, &config);
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::new(EXIT_INTERNAL, e.to_string()))?);
    Ok(if report.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn run_dump_channels(common: &CommonArgs) -> Result<u8, Failure> {
    let file = load_config(common)?;
    let config = file.scenario;
    let dir = out_dir(common, "dump-channels");
    std::fs::create_dir_all(&dir)?;
    let taps = sample_taps(&config, common.seed);
    let grid = frequency_response(&taps, config.n)?;
    let csv = stateio::channels_to_csv(&taps, &grid);
    std::fs::write(dir.join("channels.csv"), &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(common) => run_solve(common),
        Command::Sweep { common, jobs, bench_full_power } => run_sweep(common, *jobs, *bench_full_power),
        Command::Bench { common, bench_full_power } => run_bench(common, *bench_full_power),
        Command::Validate { common, state } => run_validate(common, state),
        Command::DumpChannels(common) => run_dump_channels(common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("abcn: error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
