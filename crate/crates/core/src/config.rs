//! Scenario parameters, config-file loading, and the shipped presets.
//!
//! Config files are TOML with a `[scenario]` table whose keys mirror the
//! [`ScenarioConfig`] field names, plus an optional `[experiment]` table
//! consumed by the sweep harness (see [`crate::bench`]). The `fig3` and
//! `fig4` presets encode the default two-device scenario and its standard
//! sweeps; they can be referenced by name wherever a config path is accepted.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Built-in preset: LU-rate sweep for the default two-device scenario.
pub const PRESET_FIG3: &str = include_str!("../presets/fig3.toml");
/// Built-in preset: SNR sweeps across energy-requirement and peak-power curve families.
pub const PRESET_FIG4: &str = include_str!("../presets/fig4.toml");

/// All scalar parameters describing one network scenario.
///
/// Distances are in meters, powers in watts, energies in joules per unit
/// frame (the frame duration is normalized to one second), rates in bps/Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of backscatter devices.
    pub m: usize,
    /// Number of OFDM subcarriers.
    pub n: usize,
    /// Cyclic-prefix length in samples. Carried for configuration fidelity;
    /// no symbol-level processing consumes it.
    pub n_cp: usize,
    /// Path count of each AP→device forward link.
    pub l_f: usize,
    /// Path count of each device→AP backward link.
    pub l_g: usize,
    /// Path count of the AP→user direct link.
    pub l_h: usize,
    /// Path count of each device→user interference link.
    pub l_v: usize,
    /// AP-to-device distance per device, meters.
    pub d_fap_bd: Vec<f64>,
    /// AP-to-user distance, meters.
    pub d_fap_lu: f64,
    /// Device-to-user distance per device, meters.
    pub d_bd_lu: Vec<f64>,
    /// Energy-harvesting efficiency in [0, 1].
    pub eta: f64,
    /// Total transmit power budget across all slots, watts.
    pub p_bar: f64,
    /// Per-subcarrier peak power, watts.
    pub p_peak: f64,
    /// Minimum harvested energy per device, joules per unit frame.
    pub e_min: Vec<f64>,
    /// Minimum legacy-user throughput, bps/Hz.
    pub lu_rate_min: f64,
    /// Target average receive SNR at the AP, dB. Determines the noise power.
    pub snr_bar_db: f64,
    /// Noise variance. Derived from `snr_bar_db` when absent from the config
    /// file; may be pinned explicitly for tests and what-if runs.
    #[serde(default)]
    pub sigma2: f64,
    /// Convergence threshold on the outer objective.
    pub epsilon: f64,
    /// Logarithm base for all rate expressions (2 for bps/Hz, e for nats).
    #[serde(default = "default_log_base")]
    pub log_base: f64,
    /// Per-path decay factor of the exponential power-delay profile.
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_log_base() -> f64 {
    2.0
}

fn default_rho() -> f64 {
    (-1.0f64).exp()
}

impl ScenarioConfig {
    /// The default two-device scenario shared by both presets.
    pub fn default_scenario() -> Self {
        let mut file: ConfigFile = toml::from_str(PRESET_FIG3).expect("embedded preset parses");
        if file.scenario.sigma2 <= 0.0 {
            file.scenario.refresh_noise_power();
        }
        file.scenario
    }

    /// Recomputes `sigma2` from `snr_bar_db` and the configured power-delay
    /// profile. Call after mutating `snr_bar_db`.
    pub fn refresh_noise_power(&mut self) {
        self.sigma2 = crate::channel::noise_power_from_snr(self);
    }

    /// Noise variance at the receivers.
    pub fn noise_power(&self) -> f64 {
        self.sigma2
    }

    /// Validates all invariants, returning the first violation found.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be strictly positive, got {v}")))
            }
        }
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        for (name, l) in [("l_f", self.l_f), ("l_g", self.l_g), ("l_h", self.l_h), ("l_v", self.l_v)] {
            if l == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.d_fap_bd.len() != self.m || self.d_bd_lu.len() != self.m || self.e_min.len() != self.m {
            return Err(Error::Config(format!(
                "d_fap_bd, d_bd_lu and e_min must each have m = {} entries",
                self.m
            )));
        }
        for &d in self.d_fap_bd.iter().chain(self.d_bd_lu.iter()) {
            positive("distance", d)?;
        }
        positive("d_fap_lu", self.d_fap_lu)?;
        positive("p_bar", self.p_bar)?;
        positive("p_peak", self.p_peak)?;
        positive("sigma2", self.sigma2)?;
        positive("epsilon", self.epsilon)?;
        positive("rho", self.rho)?;
        for &e in &self.e_min {
            if e < 0.0 || !e.is_finite() {
                return Err(Error::Config(format!("e_min entries must be non-negative, got {e}")));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        if self.lu_rate_min < 0.0 || !self.lu_rate_min.is_finite() {
            return Err(Error::Config(format!(
                "lu_rate_min must be non-negative, got {}",
                self.lu_rate_min
            )));
        }
        if !self.snr_bar_db.is_finite() {
            return Err(Error::Config("snr_bar_db must be finite".into()));
        }
        if self.log_base <= 1.0 || !self.log_base.is_finite() {
            return Err(Error::Config(format!("log_base must exceed 1, got {}", self.log_base)));
        }
        Ok(())
    }
}

/// Which scenario scalar a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "lu_rate_min")]
    LuRateMin,
    #[serde(rename = "snr_bar_db")]
    SnrBarDb,
    #[serde(rename = "e_min")]
    EMin,
    #[serde(rename = "p_peak")]
    PPeak,
}

impl SweepVar {
    pub fn key(&self) -> &'static str {
        match self {
            SweepVar::LuRateMin => "lu_rate_min",
            SweepVar::SnrBarDb => "snr_bar_db",
            SweepVar::EMin => "e_min",
            SweepVar::PPeak => "p_peak",
        }
    }

    /// Applies a swept value onto a scenario. `e_min` broadcasts the scalar
    /// to every device; `snr_bar_db` re-derives the noise power.
    pub fn apply(&self, config: &mut ScenarioConfig, value: f64) {
        match self {
            SweepVar::LuRateMin => config.lu_rate_min = value,
            SweepVar::SnrBarDb => {
                config.snr_bar_db = value;
                config.refresh_noise_power();
            }
            SweepVar::EMin => config.e_min = vec![value; config.m],
            SweepVar::PPeak => config.p_peak = value,
        }
    }
}

/// One sweep: a named curve varying a single scenario scalar over a value list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSection {
    pub name: String,
    pub var: SweepVar,
    pub values: Vec<f64>,
    /// Optional per-curve scenario overrides applied before the sweep value.
    #[serde(default)]
    pub set: Option<toml::Table>,
}

/// The `[experiment]` table of a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub realizations: usize,
    pub base_seed: u64,
    /// Give the equal-allocation baseline the full power budget instead of
    /// the per-slot average rule.
    #[serde(default)]
    pub bench_full_power: bool,
    #[serde(default, rename = "sweep")]
    pub sweeps: Vec<SweepSection>,
}

/// A parsed config file: scenario plus optional experiment definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigFile {
    pub scenario: ScenarioConfig,
    pub experiment: Option<ExperimentSection>,
}

impl ConfigFile {
    /// Parses a config from TOML text, applying `key=value` overrides to the
    /// scenario table. Overrides must name existing scenario keys; a scalar
    /// override of an array key broadcasts.
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut root: toml::Table =
            toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        if !overrides.is_empty() {
            let scenario = root
                .get_mut("scenario")
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| Error::Parse("config is missing a [scenario] table".into()))?;
            for (key, raw) in overrides {
                let value = parse_override_value(key, raw)?;
                merge_key(scenario, key, value)?;
            }
        }
        let file: ConfigFile = root
            .try_into()
            .map_err(|e| Error::Parse(format!("config: {e}")))?;
        let mut file = file;
        if file.scenario.sigma2 <= 0.0 {
            file.scenario.refresh_noise_power();
        }
        file.scenario.validate()?;
        if let Some(exp) = &file.experiment {
            if exp.realizations == 0 {
                return Err(Error::Config("experiment.realizations must be at least 1".into()));
            }
            for sweep in &exp.sweeps {
                if sweep.values.is_empty() {
                    return Err(Error::Config(format!("sweep '{}' has an empty value list", sweep.name)));
                }
            }
        }
        Ok(file)
    }

    /// Loads a config by preset name (`fig3`, `fig4`) or file path.
    pub fn load(spec: &str, overrides: &[(String, String)]) -> Result<Self> {
        let text = match spec {
            "fig3" => PRESET_FIG3.to_string(),
            "fig4" => PRESET_FIG4.to_string(),
            path => std::fs::read_to_string(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{path}: {e}"))))?,
        };
        Self::from_toml(&text, overrides)
    }

    /// The scenario with a curve's `set` overrides folded in.
    pub fn scenario_for_sweep(&self, sweep: &SweepSection) -> Result<ScenarioConfig> {
        let Some(set) = &sweep.set else {
            return Ok(self.scenario.clone());
        };
        let mut table: toml::Table = toml::Table::try_from(self.scenario.clone())
            .map_err(|e| Error::Parse(format!("scenario serialize: {e}")))?;
        for (key, value) in set {
            merge_key(&mut table, key, value.clone())?;
        }
        let mut scenario: ScenarioConfig = table
            .try_into()
            .map_err(|e| Error::Parse(format!("sweep '{}' overrides: {e}", sweep.name)))?;
        // A curve override of the SNR or the profile invalidates the derived noise power.
        if (set.contains_key("snr_bar_db") || set.contains_key("rho")) && !set.contains_key("sigma2") {
            scenario.refresh_noise_power();
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

fn parse_override_value(key: &str, raw: &str) -> Result<toml::Value> {
    let snippet = format!("v = {raw}");
    let parsed: toml::Table = toml::from_str(&snippet)
        .or_else(|_| toml::from_str(&format!("v = \"{raw}\"")))
        .map_err(|e| Error::Parse(format!("override {key}={raw}: {e}")))?;
    Ok(parsed["v"].clone())
}

/// Writes `value` into `table[key]`, enforcing that the key already exists
/// (overrides may not invent parameters) and broadcasting scalars onto
/// array-valued keys.
fn merge_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let Some(existing) = table.get(key) else {
        return Err(Error::Config(format!("override references unknown config key '{key}'")));
    };
    let value = match (existing, &value) {
        (toml::Value::Array(prev), toml::Value::Float(_) | toml::Value::Integer(_)) => {
            toml::Value::Array(vec![value; prev.len()])
        }
        _ => value,
    };
    table.insert(key.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        let fig3 = ConfigFile::from_toml(PRESET_FIG3, &[]).unwrap();
        assert_eq!(fig3.scenario.m, 2);
        assert_eq!(fig3.scenario.n, 64);
        assert!(fig3.scenario.sigma2 > 0.0);
        let exp = fig3.experiment.unwrap();
        assert_eq!(exp.realizations, 100);
        assert_eq!(exp.sweeps.len(), 1);
        assert_eq!(exp.sweeps[0].values, vec![0.5, 1.0, 1.5, 2.0]);

        let fig4 = ConfigFile::from_toml(PRESET_FIG4, &[]).unwrap();
        let exp = fig4.experiment.unwrap();
        assert_eq!(exp.sweeps.len(), 5);
        for sweep in &exp.sweeps {
            assert_eq!(sweep.var, SweepVar::SnrBarDb);
            assert_eq!(sweep.values, vec![10.0, 15.0, 20.0, 25.0]);
            fig4.scenario.validate().unwrap();
        }
    }

    #[test]
    fn overrides_must_reference_existing_keys() {
        let err = ConfigFile::from_toml(PRESET_FIG3, &[("bogus".into(), "1.0".into())]).unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
    }

    #[test]
    fn scalar_override_broadcasts_to_arrays() {
        let file =
            ConfigFile::from_toml(PRESET_FIG3, &[("e_min".into(), "5.0e-5".into())]).unwrap();
        assert_eq!(file.scenario.e_min, vec![5.0e-5, 5.0e-5]);
    }

    #[test]
    fn override_changes_scalar() {
        let file = ConfigFile::from_toml(PRESET_FIG3, &[("lu_rate_min".into(), "100".into())]).unwrap();
        assert_eq!(file.scenario.lu_rate_min, 100.0);
    }

    #[test]
    fn validation_rejects_bad_eta() {
        let mut config = ScenarioConfig::default_scenario();
        config.eta = 1.5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn sweep_set_override_applies() {
        let fig4 = ConfigFile::from_toml(PRESET_FIG4, &[]).unwrap();
        let exp = fig4.experiment.as_ref().unwrap();
        let low_energy = exp.sweeps.iter().find(|s| s.set.is_some()).unwrap();
        let scenario = fig4.scenario_for_sweep(low_energy).unwrap();
        assert_ne!(scenario.e_min, fig4.scenario.e_min);
    }
}
