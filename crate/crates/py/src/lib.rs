//! Python bindings: scenario setup, channel sampling, metric evaluation,
//! and the joint/baseline optimizers.

use ndarray::Array2;
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use abcn_core::bcd;
use abcn_core::bench;
use abcn_core::channel::{self, ChannelTapSet, FrequencyGrid};
use abcn_core::config::{ConfigFile, ScenarioConfig};
use abcn_core::metrics::{self, AllocationState};

fn value_error(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Scenario parameters. Construct from a preset name or TOML text, then
/// adjust the common experiment knobs through the setters.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    /// The default two-device scenario.
    #[new]
    fn new() -> Self {
        PyScenario { inner: ScenarioConfig::default_scenario() }
    }

    /// Loads the scenario table of a preset (`fig3`, `fig4`) or a config file.
    #[staticmethod]
    fn load(spec: &str) -> PyResult<Self> {
        let file = ConfigFile::load(spec, &[]).map_err(value_error)?;
        Ok(PyScenario { inner: file.scenario })
    }

    /// Parses a scenario from config-file TOML text.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let file = ConfigFile::from_toml(text, &[]).map_err(value_error)?;
        Ok(PyScenario { inner: file.scenario })
    }

    fn to_toml(&self) -> PyResult<String> {
        toml::to_string_pretty(&self.inner).map_err(value_error)
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }

    #[getter]
    fn get_lu_rate_min(&self) -> f64 {
        self.inner.lu_rate_min
    }

    #[setter]
    fn set_lu_rate_min(&mut self, value: f64) -> PyResult<()> {
        self.inner.lu_rate_min = value;
        self.inner.validate().map_err(value_error)
    }

    #[getter]
    fn get_snr_bar_db(&self) -> f64 {
        self.inner.snr_bar_db
    }

    /// Setting the SNR re-derives the noise power.
    #[setter]
    fn set_snr_bar_db(&mut self, value: f64) -> PyResult<()> {
        self.inner.snr_bar_db = value;
        self.inner.refresh_noise_power();
        self.inner.validate().map_err(value_error)
    }

    #[getter]
    fn get_e_min(&self) -> Vec<f64> {
        self.inner.e_min.clone()
    }

    /// A scalar requirement applied to every device.
    #[setter]
    fn set_e_min(&mut self, value: f64) -> PyResult<()> {
        self.inner.e_min = vec![value; self.inner.m];
        self.inner.validate().map_err(value_error)
    }

    #[getter]
    fn get_p_peak(&self) -> f64 {
        self.inner.p_peak
    }

    #[setter]
    fn set_p_peak(&mut self, value: f64) -> PyResult<()> {
        self.inner.p_peak = value;
        self.inner.validate().map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(m={}, n={}, snr_bar_db={}, lu_rate_min={})",
            self.inner.m, self.inner.n, self.inner.snr_bar_db, self.inner.lu_rate_min
        )
    }
}

/// One sampled channel realization: taps plus per-subcarrier responses.
#[pyclass(name = "Channels")]
struct PyChannels {
    taps: ChannelTapSet,
    grid: FrequencyGrid,
    seed: u64,
}

#[pymethods]
impl PyChannels {
    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    /// `|H_k|^2` per subcarrier.
    fn direct_gains(&self) -> Vec<f64> {
        self.grid.h.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `|F_{m,k}|^2 |G_{m,k}|^2` per device and subcarrier.
    fn roundtrip_gains(&self) -> Vec<Vec<f64>> {
        let powers = self.grid.powers();
        (0..self.grid.num_devices())
            .map(|m| (0..self.grid.num_subcarriers()).map(|k| powers.fg2[[m, k]]).collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Channels(m={}, n={}, seed={})",
            self.grid.num_devices(),
            self.grid.num_subcarriers(),
            self.seed
        )
    }
}

/// A resource allocation: time shares, reflection coefficients, and the
/// power matrix, plus its min-throughput objective.
#[pyclass(name = "Allocation", from_py_object)]
#[derive(Clone)]
struct PyAllocation {
    inner: AllocationState,
}

#[pymethods]
impl PyAllocation {
    #[new]
    fn new(tau: Vec<f64>, alpha: Vec<f64>, p: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = tau.len();
        if alpha.len() != m || p.len() != m {
            return Err(PyValueError::new_err("tau, alpha and p must agree on the device count"));
        }
        let n = p.first().map(Vec::len).unwrap_or(0);
        if p.iter().any(|row| row.len() != n) {
            return Err(PyValueError::new_err("power rows must have equal length"));
        }
        let flat: Vec<f64> = p.into_iter().flatten().collect();
        let p = Array2::from_shape_vec((m, n), flat).map_err(value_error)?;
        Ok(PyAllocation { inner: AllocationState { tau, alpha, p, q: 0.0 } })
    }

    #[getter]
    fn tau(&self) -> Vec<f64> {
        self.inner.tau.clone()
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.alpha.clone()
    }

    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        (0..self.inner.p.nrows()).map(|i| self.inner.p.row(i).to_vec()).collect()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q
    }

    fn __repr__(&self) -> String {
        format!("Allocation(m={}, q={})", self.inner.tau.len(), self.inner.q)
    }
}

/// History of one optimize run.
#[pyclass(name = "Trace")]
struct PyTrace {
    inner: bcd::SolveTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn termination_reason(&self) -> String {
        format!("{:?}", self.inner.termination_reason)
    }

    /// Objective values starting at the initial state, one entry per pass.
    fn q_sequence(&self) -> Vec<f64> {
        self.inner.q_sequence()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations.len()
    }

    #[getter]
    fn final_allocation(&self) -> PyAllocation {
        PyAllocation { inner: self.inner.final_state.clone() }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(converged={}, passes={}, q={})",
            self.inner.converged,
            self.inner.iterations.len(),
            self.inner.final_state.q
        )
    }
}

/// Draws one seeded channel realization for the scenario.
#[pyfunction]
fn sample_channels(scenario: &PyScenario, seed: u64) -> PyResult<PyChannels> {
    let taps = channel::sample_taps(&scenario.inner, seed);
    let grid = channel::frequency_response(&taps, scenario.inner.n).map_err(value_error)?;
    Ok(PyChannels { taps, grid, seed })
}

/// Noise variance implied by the scenario's target receive SNR.
#[pyfunction]
fn noise_power(scenario: &PyScenario) -> f64 {
    channel::noise_power_from_snr(&scenario.inner)
}

/// The channel seed used for realization `r` of a seeded experiment.
#[pyfunction]
fn derive_seed(base_seed: u64, realization: u64) -> u64 {
    bench::derive_seed(base_seed, realization)
}

/// Equal-share starting allocation.
#[pyfunction]
fn default_init(scenario: &PyScenario, channels: &PyChannels) -> PyAllocation {
    PyAllocation { inner: bcd::default_init(&channels.grid, &scenario.inner) }
}

/// Runs the joint block-coordinate optimizer from the default start (or a
/// caller-provided one).
#[pyfunction]
#[pyo3(signature = (scenario, channels, init=None))]
fn optimize(scenario: &PyScenario, channels: &PyChannels, init: Option<PyAllocation>) -> PyTrace {
    let start = init
        .map(|a| a.inner)
        .unwrap_or_else(|| bcd::default_init(&channels.grid, &scenario.inner));
    PyTrace { inner: bcd::optimize(&channels.grid, &scenario.inner, start) }
}

/// Optimizes the equal-allocation baseline's shared reflection coefficient.
/// Returns `(alpha_common, objective, status)`.
#[pyfunction]
fn solve_benchmark(scenario: &PyScenario, channels: &PyChannels) -> (f64, f64, String) {
    let result = bench::solve_benchmark(&channels.grid, &scenario.inner);
    (result.alpha_common, result.objective, format!("{:?}", result.status))
}

#[pyfunction]
fn bd_throughput(
    scenario: &PyScenario,
    channels: &PyChannels,
    allocation: &PyAllocation,
    device: usize,
) -> PyResult<f64> {
    if device >= scenario.inner.m {
        return Err(PyIndexError::new_err(format!("device {device} out of range")));
    }
    Ok(metrics::bd_throughput(&allocation.inner, &channels.grid, &scenario.inner, device))
}

#[pyfunction]
fn lu_throughput(scenario: &PyScenario, channels: &PyChannels, allocation: &PyAllocation) -> f64 {
    metrics::lu_throughput(&allocation.inner, &channels.grid, &scenario.inner)
}

#[pyfunction]
fn harvested_energy(
    scenario: &PyScenario,
    channels: &PyChannels,
    allocation: &PyAllocation,
    device: usize,
) -> PyResult<f64> {
    if device >= scenario.inner.m {
        return Err(PyIndexError::new_err(format!("device {device} out of range")));
    }
    Ok(metrics::harvested_energy(&allocation.inner, &channels.grid, &scenario.inner, device))
}

#[pyfunction]
fn min_bd_throughput(scenario: &PyScenario, channels: &PyChannels, allocation: &PyAllocation) -> f64 {
    metrics::min_bd_throughput(&allocation.inner, &channels.grid, &scenario.inner)
}

/// Evaluates every constraint family; returns a dict with the signed slacks.
#[pyfunction]
fn check_feasibility<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    channels: &PyChannels,
    allocation: &PyAllocation,
) -> PyResult<Bound<'py, PyDict>> {
    let report = metrics::check_feasibility(&allocation.inner, &channels.grid, &scenario.inner);
    let out = PyDict::new(py);
    out.set_item("feasible", report.feasible)?;
    out.set_item("violated", report.violated.clone())?;
    out.set_item("bd_throughputs", report.bd_throughputs.clone())?;
    out.set_item("lu_throughput", report.lu_throughput)?;
    out.set_item("harvested", report.harvested.clone())?;
    out.set_item("power_used", report.power_used)?;
    let residuals = PyDict::new(py);
    residuals.set_item("bd_rate", report.residuals.bd_rate.clone())?;
    residuals.set_item("lu_rate", report.residuals.lu_rate)?;
    residuals.set_item("energy", report.residuals.energy.clone())?;
    residuals.set_item("power_budget", report.residuals.power_budget)?;
    residuals.set_item("time_budget", report.residuals.time_budget)?;
    residuals.set_item("power_box", report.residuals.power_box)?;
    residuals.set_item("tau_nonneg", report.residuals.tau_nonneg)?;
    residuals.set_item("alpha_box", report.residuals.alpha_box)?;
    out.set_item("residuals", residuals)?;
    out.set_item("min_residual", report.residuals.min())?;
    Ok(out)
}

/// Writes the taps and frequency responses of a realization as CSV text.
#[pyfunction]
fn channels_csv(channels: &PyChannels) -> String {
    abcn_core::stateio::channels_to_csv(&channels.taps, &channels.grid)
}

#[pymodule]
fn abcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyChannels>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(sample_channels, m)?)?;
    m.add_function(wrap_pyfunction!(noise_power, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(default_init, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(solve_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(bd_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(lu_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(harvested_energy, m)?)?;
    m.add_function(wrap_pyfunction!(min_bd_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(check_feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(channels_csv, m)?)?;
    Ok(())
}
