//! Reflection block: bisection on the objective with closed-form inversion.
//!
//! With time shares and powers frozen, each device's rate is strictly
//! increasing in its own reflection coefficient, while the user rate and the
//! harvested energies are decreasing in every coefficient. For a trial
//! objective `q` the componentwise-smallest reflection vector that reaches it
//! is available in closed form, so feasibility of `q` reduces to checking
//! the user-rate and energy constraints at that vector, and the feasibility
//! indicator is monotone in `q`. The supremum feasible `q` is found by
//! bisection.

use ndarray::Array2;

use crate::channel::{FrequencyGrid, LinkPowers};
use crate::config::ScenarioConfig;

use super::{SubproblemResult, SubproblemStatus, TracePoint};

/// Absolute tolerance on the bisected objective.
const Q_TOL: f64 = 1e-9;
/// Reflection values may exceed the box by this much before a trial
/// objective is declared unreachable.
const ALPHA_TOL: f64 = 1e-12;

struct ReflectionProblem<'a> {
    config: &'a ScenarioConfig,
    powers: &'a LinkPowers,
    tau: &'a [f64],
    p: &'a Array2<f64>,
    /// `sum_k |F G|^2 P_mk / sigma2` per device.
    snr_slope: Vec<f64>,
    /// Energy with zero reflection and the slope removed per unit alpha:
    /// `E_m(alpha) = energy_base_m - energy_drop_m * alpha_m`.
    energy_base: Vec<f64>,
    energy_drop: Vec<f64>,
}

impl<'a> ReflectionProblem<'a> {
    fn new(
        config: &'a ScenarioConfig,
        powers: &'a LinkPowers,
        tau: &'a [f64],
        p: &'a Array2<f64>,
    ) -> Self {
        let m = config.m;
        let sigma2 = config.noise_power();
        let snr_slope = (0..m)
            .map(|i| (0..config.n).map(|k| powers.fg2[[i, k]] * p[[i, k]]).sum::<f64>() / sigma2)
            .collect();
        let mut energy_base = vec![0.0; m];
        let mut energy_drop = vec![0.0; m];
        for i in 0..m {
            let own: f64 = (0..config.n).map(|k| powers.f2[[i, k]] * p[[i, k]]).sum();
            let cross: f64 = (0..m)
                .filter(|&r| r != i)
                .map(|r| {
                    tau[r] * (0..config.n).map(|k| powers.f2[[i, k]] * p[[r, k]]).sum::<f64>()
                })
                .sum();
            energy_base[i] = config.eta * (tau[i] * own + cross);
            energy_drop[i] = config.eta * tau[i] * own;
        }
        ReflectionProblem { config, powers, tau, p, snr_slope, energy_base, energy_drop }
    }

    /// Smallest reflection for device `i` that achieves rate `q`, or `None`
    /// when no value in `[0, 1]` does.
    fn min_alpha(&self, i: usize, q: f64) -> Option<f64> {
        if q <= 0.0 {
            return Some(0.0);
        }
        if self.tau[i] <= 0.0 || self.snr_slope[i] <= 0.0 {
            return None;
        }
        // Invert tau/n * log_b(1 + alpha * slope) = q.
        let exponent = q * self.config.n as f64 / self.tau[i] * self.config.log_base.ln();
        if exponent > 700.0 {
            return None;
        }
        let alpha = (exponent.exp() - 1.0) / self.snr_slope[i];
        (alpha <= 1.0 + ALPHA_TOL).then(|| alpha.min(1.0))
    }

    fn lu_rate(&self, alpha: &[f64]) -> f64 {
        let sigma2 = self.config.noise_power();
        let inv_ln_base = 1.0 / self.config.log_base.ln();
        let mut total = 0.0;
        for i in 0..self.config.m {
            if self.tau[i] == 0.0 {
                continue;
            }
            let mut slot = 0.0;
            for k in 0..self.config.n {
                let pw = self.p[[i, k]];
                let interference = alpha[i] * self.powers.fv2[[i, k]] * pw;
                slot += (1.0 + self.powers.h2[k] * pw / (interference + sigma2)).ln();
            }
            total += self.tau[i] * slot * inv_ln_base;
        }
        total / self.config.n as f64
    }

    fn constraints_hold(&self, alpha: &[f64]) -> bool {
        for i in 0..self.config.m {
            if self.energy_base[i] - self.energy_drop[i] * alpha[i] < self.config.e_min[i] {
                return false;
            }
        }
        self.lu_rate(alpha) >= self.config.lu_rate_min
    }

    /// The minimal reflection vector for `q`, when every device can reach it.
    fn alphas_for(&self, q: f64) -> Option<Vec<f64>> {
        (0..self.config.m).map(|i| self.min_alpha(i, q)).collect()
    }

    fn feasible(&self, q: f64) -> Option<Vec<f64>> {
        let alpha = self.alphas_for(q)?;
        self.constraints_hold(&alpha).then_some(alpha)
    }

    fn rate(&self, i: usize, alpha: f64) -> f64 {
        self.tau[i] / self.config.n as f64 * (1.0 + alpha * self.snr_slope[i]).ln()
            / self.config.log_base.ln()
    }
}

/// Optimizes the reflection coefficients for frozen `(tau, p)`.
pub fn solve_reflection(
    grid: &FrequencyGrid,
    config: &ScenarioConfig,
    tau_fix: &[f64],
    p_fix: &Array2<f64>,
) -> SubproblemResult<Vec<f64>> {
    let m = config.m;
    let powers = grid.powers();
    let problem = ReflectionProblem::new(config, &powers, tau_fix, p_fix);

    let mut trace = Vec::new();
    let infeasible = |iterations: usize, trace: Vec<TracePoint>| SubproblemResult {
        variables: vec![0.0; m],
        objective: 0.0,
        status: SubproblemStatus::Infeasible,
        iterations,
        max_residual: f64::NAN,
        certified_gap: None,
        trace,
    };

    // Devices with no slot time cannot carry rate; their coefficient is
    // reported as zero (the most constraint-friendly choice).
    let zero_slot: Vec<usize> = (0..m).filter(|&i| tau_fix[i] <= 0.0).collect();
    let normalize = |mut alpha: Vec<f64>| {
        for &i in &zero_slot {
            alpha[i] = 0.0;
        }
        alpha
    };

    // The per-device rates all rise with the full-reflection corner, so when
    // the user-rate and energy constraints tolerate it the corner is optimal.
    let ones = vec![1.0; m];
    if problem.constraints_hold(&ones) {
        let q = (0..m).map(|i| problem.rate(i, 1.0)).fold(f64::INFINITY, f64::min);
        return SubproblemResult {
            variables: normalize(ones),
            objective: q.max(0.0),
            status: SubproblemStatus::Optimal,
            iterations: 0,
            max_residual: 0.0,
            certified_gap: Some(0.0),
            trace,
        };
    }

    // Zero reflection is the most permissive point for the constraints; if it
    // fails there is no feasible reflection at all.
    let Some(mut best_alpha) = problem.feasible(0.0) else {
        return infeasible(0, trace);
    };
    let mut lo = 0.0;
    // Upper bound: the best min-rate any reflection could deliver.
    let mut hi = (0..m).map(|i| problem.rate(i, 1.0)).fold(f64::INFINITY, f64::min);
    if hi <= 0.0 {
        // Some device has no usable slot or link; the objective is pinned at
        // zero and zero reflection is as good as any.
        return SubproblemResult {
            variables: normalize(best_alpha),
            objective: 0.0,
            status: SubproblemStatus::Optimal,
            iterations: 0,
            max_residual: 0.0,
            certified_gap: Some(0.0),
            trace,
        };
    }

    let mut iterations = 0;
    while hi - lo > Q_TOL && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        match problem.feasible(mid) {
            Some(alpha) => {
                best_alpha = alpha;
                lo = mid;
            }
            None => hi = mid,
        }
        iterations += 1;
        trace.push(TracePoint { iteration: iterations, objective: lo, residual: hi - lo });
    }

    SubproblemResult {
        variables: normalize(best_alpha),
        objective: lo,
        status: SubproblemStatus::Optimal,
        iterations,
        max_residual: -(hi - lo),
        certified_gap: Some(hi - lo),
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{frequency_response, sample_taps};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn scenario(m: usize, n: usize, sigma2: f64) -> (ScenarioConfig, FrequencyGrid) {
        let mut config = ScenarioConfig::default_scenario();
        config.m = m;
        config.n = n;
        config.l_f = n.min(2);
        config.l_g = n.min(2);
        config.l_h = n.min(2);
        config.l_v = n.min(2);
        config.d_fap_bd = vec![2.5; m];
        config.d_bd_lu = vec![15.0; m];
        config.e_min = vec![0.0; m];
        config.lu_rate_min = 0.0;
        config.sigma2 = sigma2;
        let taps = sample_taps(&config, 21);
        let grid = frequency_response(&taps, n).unwrap();
        (config, grid)
    }

    #[test]
    fn slack_constraints_drive_alpha_to_the_corner() {
        let (config, grid) = scenario(2, 4, 1e-8);
        let tau = vec![0.5, 0.5];
        let p = Array2::from_elem((2, 4), 0.05);
        let result = solve_reflection(&grid, &config, &tau, &p);
        assert_eq!(result.status, SubproblemStatus::Optimal);
        assert_eq!(result.variables, vec![1.0, 1.0]);
        assert!(result.objective > 0.0);
    }

    #[test]
    fn impossible_energy_requirement_is_infeasible() {
        let (mut config, grid) = scenario(2, 4, 1e-8);
        config.e_min = vec![1.0, 1.0];
        let tau = vec![0.5, 0.5];
        let p = Array2::from_elem((2, 4), 0.05);
        let result = solve_reflection(&grid, &config, &tau, &p);
        assert_eq!(result.status, SubproblemStatus::Infeasible);
    }

    #[test]
    fn zero_slot_time_pins_the_objective_at_zero() {
        let (config, grid) = scenario(2, 4, 1e-8);
        let tau = vec![0.0, 1.0];
        let p = Array2::from_elem((2, 4), 0.05);
        let result = solve_reflection(&grid, &config, &tau, &p);
        assert_eq!(result.status, SubproblemStatus::Optimal);
        assert_eq!(result.objective, 0.0);
        assert_eq!(result.variables[0], 0.0);
    }

    /// 2-D grid search over the alpha box with both coupling constraints.
    fn grid_search(
        config: &ScenarioConfig,
        grid: &FrequencyGrid,
        tau: &[f64],
        p: &Array2<f64>,
    ) -> f64 {
        let powers = grid.powers();
        let problem = ReflectionProblem::new(config, &powers, tau, p);
        let steps = 1000usize;
        // Separable pieces: rates and energies depend on own alpha only; the
        // user rate is a sum of per-device terms.
        let mut best = f64::NEG_INFINITY;
        let r0: Vec<f64> = (0..=steps).map(|i| problem.rate(0, i as f64 / steps as f64)).collect();
        let r1: Vec<f64> = (0..=steps).map(|i| problem.rate(1, i as f64 / steps as f64)).collect();
        let lu_parts = |dev: usize, alpha: f64| {
            let sigma2 = config.noise_power();
            let mut slot = 0.0;
            for k in 0..config.n {
                let pw = p[[dev, k]];
                let interference = alpha * powers.fv2[[dev, k]] * pw;
                slot += (1.0 + powers.h2[k] * pw / (interference + sigma2)).ln();
            }
            tau[dev] * slot / config.log_base.ln() / config.n as f64
        };
        let lu0: Vec<f64> = (0..=steps).map(|i| lu_parts(0, i as f64 / steps as f64)).collect();
        let lu1: Vec<f64> = (0..=steps).map(|i| lu_parts(1, i as f64 / steps as f64)).collect();
        let energy_ok = |dev: usize, alpha: f64| {
            problem.energy_base[dev] - problem.energy_drop[dev] * alpha >= config.e_min[dev]
        };
        for i in 0..=steps {
            let a0 = i as f64 / steps as f64;
            if !energy_ok(0, a0) {
                continue;
            }
            for j in 0..=steps {
                let a1 = j as f64 / steps as f64;
                if !energy_ok(1, a1) {
                    continue;
                }
                if lu0[i] + lu1[j] < config.lu_rate_min {
                    continue;
                }
                best = best.max(r0[i].min(r1[j]));
            }
        }
        best
    }

    #[test]
    fn matches_two_dimensional_grid_search() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..8 {
            let (mut config, grid) = scenario(2, 4, 2e-8);
            let tau = vec![0.3 + 0.3 * rng.random::<f64>(), 0.2 + 0.3 * rng.random::<f64>()];
            let p = Array2::from_shape_fn((2, 4), |_| 0.02 + 0.2 * rng.random::<f64>());
            // Pick a user-rate floor that actually binds: a slice of the
            // zero-reflection rate.
            let powers = grid.powers();
            let problem = ReflectionProblem::new(&config, &powers, &tau, &p);
            let max_lu = problem.lu_rate(&vec![0.0, 0.0]);
            config.lu_rate_min = 0.85 * max_lu;
            // And an energy floor below the zero-reflection harvest.
            let problem = ReflectionProblem::new(&config, &powers, &tau, &p);
            config.e_min = (0..2).map(|i| 0.6 * problem.energy_base[i]).collect();

            let result = solve_reflection(&grid, &config, &tau, &p);
            assert_eq!(result.status, SubproblemStatus::Optimal, "trial {trial}");
            let best = grid_search(&config, &grid, &tau, &p);
            assert!(
                (result.objective - best).abs() <= 2e-3,
                "trial {trial}: bisection {} vs grid {}",
                result.objective,
                best
            );
        }
    }

    /// The feasibility indicator must be monotone: any objective below a
    /// feasible one is feasible.
    #[test]
    fn feasibility_indicator_is_monotone_in_q() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (mut config, grid) = scenario(2, 8, 2e-8);
        let tau = vec![0.4, 0.4];
        let p = Array2::from_shape_fn((2, 8), |_| 0.02 + 0.1 * rng.random::<f64>());
        let powers = grid.powers();
        let problem = ReflectionProblem::new(&config, &powers, &tau, &p);
        config.lu_rate_min = 0.9 * problem.lu_rate(&vec![0.0, 0.0]);
        let problem = ReflectionProblem::new(&config, &powers, &tau, &p);
        let q_max = (0..2).map(|i| problem.rate(i, 1.0)).fold(f64::INFINITY, f64::min);
        for _ in 0..200 {
            let qa = rng.random::<f64>() * q_max;
            let qb = rng.random::<f64>() * qa;
            if problem.feasible(qa).is_some() {
                assert!(problem.feasible(qb).is_some(), "q = {qb} infeasible but {qa} feasible");
            }
        }
    }

    #[test]
    fn binding_user_rate_comes_out_tight() {
        // Interferers sit close to the user so the reflections genuinely
        // cost user rate.
        let (mut config, _) = scenario(2, 8, 2e-8);
        config.d_bd_lu = vec![0.3, 0.3];
        let taps = sample_taps(&config, 21);
        let grid = frequency_response(&taps, config.n).unwrap();
        let tau = vec![0.45, 0.45];
        let p = Array2::from_elem((2, 8), 0.05);
        let powers = grid.powers();
        let problem = ReflectionProblem::new(&config, &powers, &tau, &p);
        config.lu_rate_min = 0.98 * problem.lu_rate(&vec![0.0, 0.0]);
        let result = solve_reflection(&grid, &config, &tau, &p);
        assert_eq!(result.status, SubproblemStatus::Optimal);
        assert!(result.variables.iter().all(|&a| a < 1.0));
        // At the optimum the user-rate constraint binds to bisection accuracy.
        let problem = ReflectionProblem::new(&config, &powers, &tau, &p);
        let lu = problem.lu_rate(&result.variables);
        assert_relative_eq!(lu, config.lu_rate_min, max_relative = 1e-5);
    }
}
