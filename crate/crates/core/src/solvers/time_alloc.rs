//! Time-share block: a linear program over `(tau, q)`.
//!
//! With reflections and powers frozen, each per-device rate is
//! `tau_m * rate_coeff_m`, the user rate and harvested energies are linear in
//! `tau`, and so are the power and frame-time budgets. Maximizing the
//! epigraph variable `q` under those constraints is a small LP solved
//! exactly in-repo.

use ndarray::Array2;

use crate::channel::FrequencyGrid;
use crate::config::ScenarioConfig;

use super::lp::{solve_lp_max, LpStatus};
use super::{time_coefficients, SubproblemResult, SubproblemStatus, TracePoint};

/// Optimizes the time shares for frozen `(alpha, p)`. Variables in the
/// result are the `tau` vector; the objective is the achieved `q`.
pub fn solve_time_allocation(
    grid: &FrequencyGrid,
    config: &ScenarioConfig,
    alpha_fix: &[f64],
    p_fix: &Array2<f64>,
) -> SubproblemResult<Vec<f64>> {
    let m = config.m;
    let powers = grid.powers();
    let coeff = time_coefficients(&powers, config, alpha_fix, p_fix);

    // Variables x = (tau_0 .. tau_{m-1}, q), all non-negative. The objective
    // is non-negative at any feasible point, so q >= 0 loses nothing.
    let nvars = m + 1;
    let mut c = vec![0.0; nvars];
    c[m] = 1.0;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();

    // q - tau_i * rate_i <= 0 for every device.
    for i in 0..m {
        let mut row = vec![0.0; nvars];
        row[i] = -coeff.rate[i];
        row[m] = 1.0;
        rows.push(row);
        rhs.push(0.0);
    }
    // User rate: sum_i lu_i tau_i >= lu_rate_min.
    let mut row = vec![0.0; nvars];
    for i in 0..m {
        row[i] = -coeff.lu[i];
    }
    rows.push(row);
    rhs.push(-config.lu_rate_min);
    // Energy per device: sum_r energy[i][r] tau_r >= e_min_i.
    for i in 0..m {
        let mut row = vec![0.0; nvars];
        for r in 0..m {
            row[r] = -coeff.energy[i][r];
        }
        rows.push(row);
        rhs.push(-config.e_min[i]);
    }
    // Power budget: sum_i power_i tau_i <= p_bar.
    let mut row = vec![0.0; nvars];
    for i in 0..m {
        row[i] = coeff.power[i];
    }
    rows.push(row);
    rhs.push(config.p_bar);
    // Frame time: sum tau_i <= 1.
    rows.push({
        let mut row = vec![0.0; nvars];
        for i in 0..m {
            row[i] = 1.0;
        }
        row
    });
    rhs.push(1.0);

    let sol = solve_lp_max(&c, &rows, &rhs);
    let status = match sol.status {
        LpStatus::Optimal => SubproblemStatus::Optimal,
        LpStatus::Infeasible => SubproblemStatus::Infeasible,
        // The feasible set lies inside the simplex and q <= max rate, so an
        // unbounded report can only be numerical.
        LpStatus::Unbounded | LpStatus::IterationLimit => SubproblemStatus::NumericalFailure,
    };
    let tau = sol.x[..m].to_vec();
    let q = sol.objective;
    let max_residual = if status == SubproblemStatus::Optimal {
        rows.iter()
            .zip(&rhs)
            .map(|(row, &b)| row.iter().zip(&sol.x).map(|(a, x)| a * x).sum::<f64>() - b)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NAN
    };
    let trace = vec![TracePoint { iteration: sol.iterations, objective: q, residual: max_residual }];
    SubproblemResult {
        variables: tau,
        objective: q,
        status,
        iterations: sol.iterations,
        max_residual,
        certified_gap: None,
        trace,
    }
}
