//! Closed-form throughput and energy metrics, and constraint checking.
//!
//! All operations are pure functions of an [`AllocationState`], a
//! [`FrequencyGrid`], and the scenario parameters. Rates use the configured
//! logarithm base (2 by default, giving bps/Hz); harvested energy is per unit
//! frame.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::channel::FrequencyGrid;
use crate::config::ScenarioConfig;

/// Absolute tolerance on signed constraint slacks.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Floor applied to logarithm arguments.
const LOG_FLOOR: f64 = 1e-300;

/// One candidate allocation: per-device time shares and reflection
/// coefficients, the per-slot subcarrier power matrix, and the current
/// min-throughput objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationState {
    /// Backscatter time portion per device.
    pub tau: Vec<f64>,
    /// Power reflection coefficient per device.
    pub alpha: Vec<f64>,
    /// Subcarrier transmit power per slot, `m x n` watts.
    pub p: Array2<f64>,
    /// Minimum per-device throughput of this allocation.
    pub q: f64,
}

/// Signed slack per constraint family; non-negative means satisfied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintResiduals {
    /// Per-device rate minus the objective `q`.
    pub bd_rate: Vec<f64>,
    /// User throughput minus its requirement.
    pub lu_rate: f64,
    /// Harvested energy minus its requirement, per device.
    pub energy: Vec<f64>,
    /// Unused share of the total power budget.
    pub power_budget: f64,
    /// Unused share of the frame time.
    pub time_budget: f64,
    /// Worst distance of any subcarrier power from the `[0, p_peak]` box.
    pub power_box: f64,
    /// Smallest time share.
    pub tau_nonneg: f64,
    /// Worst distance of any reflection coefficient from `[0, 1]`.
    pub alpha_box: f64,
}

impl ConstraintResiduals {
    /// The tightest (most violated) slack across every family.
    pub fn min(&self) -> f64 {
        let vecs = self.bd_rate.iter().chain(self.energy.iter()).copied();
        let scalars = [
            self.lu_rate,
            self.power_budget,
            self.time_budget,
            self.power_box,
            self.tau_nonneg,
            self.alpha_box,
        ];
        vecs.chain(scalars).fold(f64::INFINITY, f64::min)
    }

    /// Names of the families violated beyond `tol`.
    pub fn violated(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.bd_rate.iter().any(|&r| r < -tol) {
            out.push("bd_rate".to_string());
        }
        if self.lu_rate < -tol {
            out.push("lu_rate".to_string());
        }
        if self.energy.iter().any(|&r| r < -tol) {
            out.push("energy".to_string());
        }
        if self.power_budget < -tol {
            out.push("power_budget".to_string());
        }
        if self.time_budget < -tol {
            out.push("time_budget".to_string());
        }
        if self.power_box < -tol {
            out.push("power_box".to_string());
        }
        if self.tau_nonneg < -tol {
            out.push("tau_nonneg".to_string());
        }
        if self.alpha_box < -tol {
            out.push("alpha_box".to_string());
        }
        out
    }
}

/// Full evaluation of an allocation against every constraint family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Throughput per device.
    pub bd_throughputs: Vec<f64>,
    /// Legacy-user throughput.
    pub lu_throughput: f64,
    /// Harvested energy per device.
    pub harvested: Vec<f64>,
    /// Time-weighted transmit power actually consumed.
    pub power_used: f64,
    pub residuals: ConstraintResiduals,
    /// Violated family names at [`FEASIBILITY_TOL`].
    pub violated: Vec<String>,
    pub feasible: bool,
}

fn log_b(x: f64, inv_ln_base: f64) -> f64 {
    x.max(LOG_FLOOR).ln() * inv_ln_base
}

/// Energy harvested by device `m` across the whole frame: its own slot
/// contributes the unreflected share `(1 - alpha_m)`, every other slot is
/// absorbed in full.
pub fn harvested_energy(
    state: &AllocationState,
    grid: &FrequencyGrid,
    config: &ScenarioConfig,
    m: usize,
) -> f64 {
    assert!(m < config.m, "device index {m} out of range for m = {}", config.m);
    let mut total = 0.0;
    for k in 0..config.n {
        let f2 = grid.f[[m, k]].norm_sqr();
        let mut slot_sum = state.tau[m] * state.p[[m, k]] * (1.0 - state.alpha[m]);
        for r in 0..config.m {
            if r != m {
                slot_sum += state.tau[r] * state.p[[r, k]];
            }
        }
        total += f2 * slot_sum;
    }
    config.eta * total
}

/// Decoding SNR of device `m` at the AP.
pub fn bd_snr(state: &AllocationState, grid: &FrequencyGrid, config: &ScenarioConfig, m: usize) -> f64 {
    let sigma2 = config.noise_power();
    debug_assert!(sigma2 > 0.0);
    let sum: f64 = (0..config.n)
        .map(|k| grid.f[[m, k]].norm_sqr() * grid.g[[m, k]].norm_sqr() * state.p[[m, k]])
        .sum();
    state.alpha[m] / sigma2 * sum
}

/// Throughput of device `m`, `tau_m / n * log(1 + snr_m)`.
pub fn bd_throughput(
    state: &AllocationState,
    grid: &FrequencyGrid,
    config: &ScenarioConfig,
    m: usize,
) -> f64 {
    let gamma = bd_snr(state, grid, config, m);
    state.tau[m] / config.n as f64 * log_b(1.0 + gamma, 1.0 / config.log_base.ln())
}

/// Total throughput of the legacy user with the backscatter reflections
/// treated as interference.
pub fn lu_throughput(state: &AllocationState, grid: &FrequencyGrid, config: &ScenarioConfig) -> f64 {
    let sigma2 = config.noise_power();
    let inv_ln_base = 1.0 / config.log_base.ln();
    let mut total = 0.0;
    for m in 0..config.m {
        if state.tau[m] == 0.0 {
            continue;
        }
        let mut slot = 0.0;
        for k in 0..config.n {
            let p = state.p[[m, k]];
            let signal = grid.h[k].norm_sqr() * p;
            let interference = state.alpha[m] * grid.f[[m, k]].norm_sqr() * grid.v[[m, k]].norm_sqr() * p;
            slot += log_b(1.0 + signal / (interference + sigma2), inv_ln_base);
        }
        total += state.tau[m] * slot;
    }
    total / config.n as f64
}

/// The max-min objective: the smallest per-device throughput.
pub fn min_bd_throughput(state: &AllocationState, grid: &FrequencyGrid, config: &ScenarioConfig) -> f64 {
    (0..config.m)
        .map(|m| bd_throughput(state, grid, config, m))
        .fold(f64::INFINITY, f64::min)
}

/// Evaluates every constraint family at the state's own objective value and
/// reports signed slacks.
pub fn check_feasibility(
    state: &AllocationState,
    grid: &FrequencyGrid,
    config: &ScenarioConfig,
) -> ConstraintReport {
    let bd_throughputs: Vec<f64> = (0..config.m).map(|m| bd_throughput(state, grid, config, m)).collect();
    let lu = lu_throughput(state, grid, config);
    let harvested: Vec<f64> = (0..config.m).map(|m| harvested_energy(state, grid, config, m)).collect();
    let power_used: f64 = (0..config.m)
        .map(|m| state.tau[m] * state.p.row(m).sum())
        .sum();

    let power_box = state
        .p
        .iter()
        .map(|&p| p.min(config.p_peak - p))
        .fold(f64::INFINITY, f64::min);
    let residuals = ConstraintResiduals {
        bd_rate: bd_throughputs.iter().map(|r| r - state.q).collect(),
        lu_rate: lu - config.lu_rate_min,
        energy: harvested.iter().zip(&config.e_min).map(|(e, req)| e - req).collect(),
        power_budget: config.p_bar - power_used,
        time_budget: 1.0 - state.tau.iter().sum::<f64>(),
        power_box,
        tau_nonneg: state.tau.iter().copied().fold(f64::INFINITY, f64::min),
        alpha_box: state
            .alpha
            .iter()
            .map(|&a| a.min(1.0 - a))
            .fold(f64::INFINITY, f64::min),
    };
    let violated = residuals.violated(FEASIBILITY_TOL);
    let feasible = violated.is_empty();
    ConstraintReport {
        bd_throughputs,
        lu_throughput: lu,
        harvested,
        power_used,
        residuals,
        violated,
        feasible,
    }
}
