//! Equal-allocation baseline and the seeded Monte Carlo sweep harness.
//!
//! The baseline fixes a uniform time split and flat subcarrier power, then
//! optimizes a single reflection coefficient shared by every device. The
//! sweep harness runs the joint design and the baseline over seeded channel
//! realizations for each value of a swept scenario scalar, writing per-run
//! and aggregate CSVs whose bytes depend only on the sweep definition.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bcd::{default_init, optimize, TerminationReason};
use crate::channel::{frequency_response, sample_taps, FrequencyGrid};
use crate::config::{ScenarioConfig, SweepVar};
use crate::metrics::{self, AllocationState};
use crate::solvers::SubproblemStatus;
use ndarray::Array2;

/// Tolerance of the baseline's reflection bisection.
const ALPHA_TOL: f64 = 1e-9;

/// How the baseline spends its power budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchPowerRule {
    /// Flat `p_bar / (m n)` per subcarrier: equal power per slot sample,
    /// which under the uniform time split consumes `p_bar / m` in total.
    SlotAverage,
    /// Flat `p_bar / n` per subcarrier, consuming the whole budget.
    FullBudget,
}

/// Baseline outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub alpha_common: f64,
    pub objective: f64,
    pub status: SubproblemStatus,
    pub iterations: usize,
}

fn benchmark_state(config: &ScenarioConfig, rule: BenchPowerRule, alpha: f64) -> AllocationState {
    let m = config.m;
    let p_flat = match rule {
        BenchPowerRule::SlotAverage => config.p_bar / (m * config.n) as f64,
        BenchPowerRule::FullBudget => config.p_bar / config.n as f64,
    };
    AllocationState {
        tau: vec![1.0 / m as f64; m],
        alpha: vec![alpha; m],
        p: Array2::from_elem((m, config.n), p_flat),
        q: 0.0,
    }
}

/// Optimizes the common reflection coefficient of the equal-allocation
/// baseline. The min-throughput rises with the shared coefficient while the
/// user-rate and energy constraints only tighten, so the optimum is the
/// largest feasible value, found by bisection.
pub fn solve_benchmark(grid: &FrequencyGrid, config: &ScenarioConfig) -> BenchmarkResult {
    solve_benchmark_with_rule(grid, config, BenchPowerRule::SlotAverage)
}

pub fn solve_benchmark_with_rule(
    grid: &FrequencyGrid,
    config: &ScenarioConfig,
    rule: BenchPowerRule,
) -> BenchmarkResult {
    let feasible = |alpha: f64| -> bool {
        let state = benchmark_state(config, rule, alpha);
        let lu = metrics::lu_throughput(&state, grid, config);
        if lu < config.lu_rate_min {
            return false;
        }
        (0..config.m).all(|i| metrics::harvested_energy(&state, grid, config, i) >= config.e_min[i])
    };
    let objective_at = |alpha: f64| -> f64 {
        let state = benchmark_state(config, rule, alpha);
        metrics::min_bd_throughput(&state, grid, config)
    };

    if !feasible(0.0) {
        return BenchmarkResult {
            alpha_common: 0.0,
            objective: 0.0,
            status: SubproblemStatus::Infeasible,
            iterations: 0,
        };
    }
    if feasible(1.0) {
        return BenchmarkResult {
            alpha_common: 1.0,
            objective: objective_at(1.0),
            status: SubproblemStatus::Optimal,
            iterations: 0,
        };
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = 0;
    while hi - lo > ALPHA_TOL && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    BenchmarkResult {
        alpha_common: lo,
        objective: objective_at(lo),
        status: SubproblemStatus::Optimal,
        iterations,
    }
}

/// One sweep: a base scenario, the swept scalar, its values, and the seeded
/// realization plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub label: String,
    pub base: ScenarioConfig,
    pub var: SweepVar,
    pub values: Vec<f64>,
    pub realizations: usize,
    pub base_seed: u64,
    pub bench_rule: BenchPowerRule,
}

/// One (value, realization) outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub label: String,
    pub sweep_var: String,
    pub value: f64,
    pub value_index: usize,
    pub realization: usize,
    pub seed: u64,
    pub joint_q: Option<f64>,
    pub bench_q: Option<f64>,
    pub iterations: usize,
    pub joint_feasible: bool,
    pub bench_feasible: bool,
}

/// Aggregate over the realizations of one sweep value. Means are taken over
/// the runs where both designs are feasible; `n_feasible` counts them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub value: f64,
    pub mean_joint_q: f64,
    pub mean_bench_q: f64,
    pub n_feasible: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut x = z;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Channel seed of realization `r`: `splitmix64(base ^ splitmix64(r + 1))`.
///
/// The seed depends only on the realization index, so every sweep value sees
/// the same channel draws (paired comparisons across the curve) and
/// extending the value list or the realization count never reshuffles
/// existing runs.
pub fn derive_seed(base_seed: u64, realization: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(realization.wrapping_add(1)))
}

/// Runs one sweep. Realizations execute in parallel; records are ordered by
/// `(value_index, realization)` regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Vec<ExperimentRecord> {
    let configs: Vec<ScenarioConfig> = spec
        .values
        .iter()
        .map(|&v| {
            let mut c = spec.base.clone();
            spec.var.apply(&mut c, v);
            c
        })
        .collect();
    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for vi in 0..spec.values.len() {
        for r in 0..spec.realizations {
            jobs.push((vi, r));
        }
    }
    let mut records: Vec<ExperimentRecord> = jobs
        .par_iter()
        .map(|&(vi, r)| {
            let config = &configs[vi];
            let seed = derive_seed(spec.base_seed, r as u64);
            let taps = sample_taps(config, seed);
            let grid = frequency_response(&taps, config.n).expect("path counts fit the grid");

            let trace = optimize(&grid, config, default_init(&grid, config));
            let joint_feasible = matches!(
                trace.termination_reason,
                TerminationReason::Converged | TerminationReason::IterationCap
            ) && metrics::check_feasibility(&trace.final_state, &grid, config).feasible;
            let bench = solve_benchmark_with_rule(&grid, config, spec.bench_rule);
            let bench_feasible = bench.status == SubproblemStatus::Optimal;
            ExperimentRecord {
                label: spec.label.clone(),
                sweep_var: spec.var.key().to_string(),
                value: spec.values[vi],
                value_index: vi,
                realization: r,
                seed,
                joint_q: joint_feasible.then_some(trace.final_state.q),
                bench_q: bench_feasible.then_some(bench.objective),
                iterations: trace.iterations.len(),
                joint_feasible,
                bench_feasible,
            }
        })
        .collect();
    records.sort_by_key(|rec| (rec.value_index, rec.realization));
    records
}

/// Per-value means over the runs where both designs were feasible.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = Vec::new();
    let mut index: Vec<(usize, f64)> = records.iter().map(|r| (r.value_index, r.value)).collect();
    index.sort_by_key(|pair| pair.0);
    index.dedup_by_key(|pair| pair.0);
    for (vi, value) in index {
        let both: Vec<&ExperimentRecord> = records
            .iter()
            .filter(|r| r.value_index == vi && r.joint_feasible && r.bench_feasible)
            .collect();
        let n = both.len();
        let (mut joint, mut bench) = (0.0, 0.0);
        for rec in &both {
            joint += rec.joint_q.unwrap_or(0.0);
            bench += rec.bench_q.unwrap_or(0.0);
        }
        rows.push(AggregateRow {
            value,
            mean_joint_q: if n > 0 { joint / n as f64 } else { f64::NAN },
            mean_bench_q: if n > 0 { bench / n as f64 } else { f64::NAN },
            n_feasible: n,
        });
    }
    rows
}

/// Per-run CSV: `sweep_var,value,seed,joint_q,bench_q,iters,joint_feasible,bench_feasible`.
pub fn runs_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("sweep_var,value,seed,joint_q,bench_q,iters,joint_feasible,bench_feasible\n");
    for r in records {
        let joint = r.joint_q.map(|q| q.to_string()).unwrap_or_default();
        let bench = r.bench_q.map(|q| q.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.sweep_var, r.value, r.seed, joint, bench, r.iterations, r.joint_feasible, r.bench_feasible
        ));
    }
    out
}

/// Aggregate CSV: `value,mean_joint_q,mean_bench_q,n_feasible`.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("value,mean_joint_q,mean_bench_q,n_feasible\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.value, row.mean_joint_q, row.mean_bench_q, row.n_feasible
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scenario() -> (ScenarioConfig, FrequencyGrid) {
        let mut config = ScenarioConfig::default_scenario();
        config.n = 16;
        config.refresh_noise_power();
        let taps = sample_taps(&config, 55);
        let grid = frequency_response(&taps, config.n).unwrap();
        (config, grid)
    }

    #[test]
    fn slack_constraints_give_full_reflection() {
        let (mut config, grid) = scenario();
        config.lu_rate_min = 0.0;
        config.e_min = vec![0.0, 0.0];
        let result = solve_benchmark(&grid, &config);
        assert_eq!(result.status, SubproblemStatus::Optimal);
        assert_eq!(result.alpha_common, 1.0);
    }

    #[test]
    fn binding_energy_matches_closed_form_inversion() {
        let (mut config, grid) = scenario();
        config.lu_rate_min = 0.0;
        // Each harvest is affine and decreasing in the shared coefficient:
        // E_i(alpha) = E_i(0) - alpha * (E_i(0) - E_i(1)). Choose requirements
        // so device 0 binds at alpha = 0.6 and device 1 at 0.9; the optimum
        // is then exactly 0.6.
        let state0 = benchmark_state(&config, BenchPowerRule::SlotAverage, 0.0);
        let state1 = benchmark_state(&config, BenchPowerRule::SlotAverage, 1.0);
        let e_at = |state: &AllocationState, i: usize| metrics::harvested_energy(state, &grid, &config, i);
        let bind_at = |i: usize, alpha: f64| e_at(&state0, i) - alpha * (e_at(&state0, i) - e_at(&state1, i));
        config.e_min = vec![bind_at(0, 0.6), bind_at(1, 0.9)];
        let result = solve_benchmark(&grid, &config);
        assert_eq!(result.status, SubproblemStatus::Optimal);
        assert_relative_eq!(result.alpha_common, 0.6, epsilon = 1e-8);
    }

    #[test]
    fn impossible_requirement_is_infeasible() {
        let (mut config, grid) = scenario();
        config.e_min = vec![1.0, 1.0];
        let result = solve_benchmark(&grid, &config);
        assert_eq!(result.status, SubproblemStatus::Infeasible);
    }

    #[test]
    fn joint_design_from_benchmark_point_never_loses() {
        let (mut config, grid) = scenario();
        config.lu_rate_min = 0.3;
        config.e_min = vec![1e-6, 1e-6];
        let bench = solve_benchmark(&grid, &config);
        assert_eq!(bench.status, SubproblemStatus::Optimal);
        let mut init = benchmark_state(&config, BenchPowerRule::SlotAverage, bench.alpha_common);
        init.q = metrics::min_bd_throughput(&init, &grid, &config);
        let trace = optimize(&grid, &config, init);
        assert!(trace.converged);
        assert!(
            trace.final_state.q >= bench.objective - 1e-6,
            "joint {} < benchmark {}",
            trace.final_state.q,
            bench.objective
        );
    }

    #[test]
    fn seed_derivation_is_stable_and_value_independent() {
        assert_eq!(derive_seed(42, 0), derive_seed(42, 0));
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        assert_ne!(derive_seed(42, 0), derive_seed(43, 0));
        // Frozen values guard the documented formula against accidental change.
        assert_eq!(derive_seed(42, 0), 9129838320742759465);
        assert_eq!(derive_seed(42, 7), 14486435440272157817);
    }

    #[test]
    fn single_point_sweep_is_deterministic() {
        let (mut config, _) = scenario();
        config.lu_rate_min = 0.2;
        config.e_min = vec![1e-6, 1e-6];
        let spec = SweepSpec {
            label: "unit".into(),
            base: config,
            var: SweepVar::LuRateMin,
            values: vec![0.2],
            realizations: 1,
            base_seed: 5,
            bench_rule: BenchPowerRule::SlotAverage,
        };
        let a = run_sweep(&spec);
        let b = run_sweep(&spec);
        assert_eq!(a.len(), 1);
        assert_eq!(runs_csv(&a), runs_csv(&b));
        assert_eq!(a[0].seed, derive_seed(5, 0));
    }

    #[test]
    fn aggregate_means_cover_only_mutually_feasible_runs() {
        let records = vec![
            ExperimentRecord {
                label: "x".into(),
                sweep_var: "lu_rate_min".into(),
                value: 1.0,
                value_index: 0,
                realization: 0,
                seed: 1,
                joint_q: Some(0.4),
                bench_q: Some(0.2),
                iterations: 3,
                joint_feasible: true,
                bench_feasible: true,
            },
            ExperimentRecord {
                label: "x".into(),
                sweep_var: "lu_rate_min".into(),
                value: 1.0,
                value_index: 0,
                realization: 1,
                seed: 2,
                joint_q: None,
                bench_q: Some(0.3),
                iterations: 1,
                joint_feasible: false,
                bench_feasible: true,
            },
        ];
        let rows = aggregate(&records);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n_feasible, 1);
        assert_relative_eq!(rows[0].mean_joint_q, 0.4);
        assert_relative_eq!(rows[0].mean_bench_q, 0.2);
    }
}
