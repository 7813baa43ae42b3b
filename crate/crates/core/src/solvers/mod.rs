//! Exact solvers for the three per-block subproblems.
//!
//! Each block of the outer loop freezes the other two variable groups and
//! maximizes the min-throughput objective over its own:
//!
//! * [`solve_time_allocation`] — time shares, a small linear program,
//! * [`solve_reflection`] — reflection coefficients, bisection on the
//!   objective with closed-form inversion of the per-device rate,
//! * [`solve_power_sco`] — subcarrier powers against the concave surrogate
//!   of the user-rate constraint, a log-barrier interior-point method.

mod lp;
mod power;
mod reflection;
mod time_alloc;

pub use lp::{solve_lp_max, LpSolution, LpStatus};
pub use power::{sco_lower_bound, solve_power_sco};
pub use reflection::solve_reflection;
pub use time_alloc::solve_time_allocation;

use serde::{Deserialize, Serialize};

use crate::channel::LinkPowers;
use crate::config::ScenarioConfig;

/// Outcome class of one subproblem solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// One progress sample of an iterative solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

/// Result of one block solve. `variables` is the block's decision array.
#[derive(Debug, Clone)]
pub struct SubproblemResult<T> {
    pub variables: T,
    /// Optimal objective (the surrogate objective for the power block).
    pub objective: f64,
    pub status: SubproblemStatus,
    pub iterations: usize,
    /// Largest constraint violation of the returned point (negative when
    /// strictly interior).
    pub max_residual: f64,
    /// Certified distance to the block optimum, when the method provides one.
    pub certified_gap: Option<f64>,
    /// Per-iteration progress, for debug dumps.
    pub trace: Vec<TracePoint>,
}

impl<T> SubproblemResult<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SubproblemStatus::Optimal
    }
}

/// Frozen-block coefficients shared by the three solvers.
///
/// With powers `p` and reflections `alpha` frozen, the per-device rate is
/// `tau_m * rate_coeff_m`, the user rate is `sum_m tau_m * lu_coeff_m`, the
/// harvested energy of device `m` is `sum_r energy_coeff[m][r] * tau_r`, and
/// the consumed power is `sum_m power_coeff_m * tau_m`.
pub(crate) struct TimeCoefficients {
    pub rate: Vec<f64>,
    pub lu: Vec<f64>,
    pub energy: Vec<Vec<f64>>,
    pub power: Vec<f64>,
}

pub(crate) fn time_coefficients(
    powers: &LinkPowers,
    config: &ScenarioConfig,
    alpha: &[f64],
    p: &ndarray::Array2<f64>,
) -> TimeCoefficients {
    let m = config.m;
    let n = config.n as f64;
    let sigma2 = config.noise_power();
    let inv_ln_base = 1.0 / config.log_base.ln();

    let rate = (0..m)
        .map(|i| {
            let s: f64 = (0..config.n).map(|k| powers.fg2[[i, k]] * p[[i, k]]).sum();
            (1.0 + alpha[i] * s / sigma2).ln() * inv_ln_base / n
        })
        .collect();
    let lu = (0..m)
        .map(|i| {
            let s: f64 = (0..config.n)
                .map(|k| {
                    let pw = p[[i, k]];
                    (1.0 + powers.h2[k] * pw / (alpha[i] * powers.fv2[[i, k]] * pw + sigma2)).ln()
                })
                .sum();
            s * inv_ln_base / n
        })
        .collect();
    let energy = (0..m)
        .map(|i| {
            (0..m)
                .map(|r| {
                    let share = if r == i { 1.0 - alpha[i] } else { 1.0 };
                    let s: f64 = (0..config.n).map(|k| powers.f2[[i, k]] * p[[r, k]]).sum();
                    config.eta * share * s
                })
                .collect()
        })
        .collect();
    let power = (0..m).map(|i| p.row(i).sum()).collect();
    TimeCoefficients { rate, lu, energy, power }
}
