//! Seeded multipath channel generation and per-subcarrier frequency responses.
//!
//! Four link families connect the nodes: `forward` (AP to device),
//! `backward` (device to AP), `direct` (AP to user), and `interference`
//! (device to user). Each link is an independent Rayleigh multipath channel
//! whose per-path mean power follows an exponentially decaying profile
//! anchored at a first-path gain of `1e-3 * d^-2` for a link of `d` meters.
//!
//! Sampling is a pure function of `(config, seed)`. Every `(link, device)`
//! pair draws from its own counter-based RNG stream, so tap values do not
//! depend on sampling order and realizations can be generated in parallel.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::config::ScenarioConfig;
use crate::{Error, Result};

/// Reference first-path channel power gain at 1 m.
const FIRST_PATH_GAIN: f64 = 1.0e-3;

/// Stream codes for the per-link RNG split: `stream = code << 32 | device`.
const STREAM_FORWARD: u64 = 1;
const STREAM_BACKWARD: u64 = 2;
const STREAM_DIRECT: u64 = 3;
const STREAM_INTERFERENCE: u64 = 4;

/// Time-domain multipath taps for the four link families.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTapSet {
    /// AP→device taps, `m x l_f`.
    pub forward: Array2<Complex64>,
    /// Device→AP taps, `m x l_g`.
    pub backward: Array2<Complex64>,
    /// AP→user taps, `l_h`.
    pub direct: Array1<Complex64>,
    /// Device→user taps, `m x l_v`.
    pub interference: Array2<Complex64>,
}

/// Per-subcarrier complex frequency responses of all links.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    /// AP→device response, `m x n`.
    pub f: Array2<Complex64>,
    /// Device→AP response, `m x n`.
    pub g: Array2<Complex64>,
    /// AP→user response, `n`.
    pub h: Array1<Complex64>,
    /// Device→user response, `m x n`.
    pub v: Array2<Complex64>,
}

/// Magnitude-squared link gains consumed by the metric and solver layers.
#[derive(Debug, Clone)]
pub struct LinkPowers {
    /// `|F|^2`, `m x n`.
    pub f2: Array2<f64>,
    /// `|F|^2 |G|^2`, `m x n`.
    pub fg2: Array2<f64>,
    /// `|H|^2`, `n`.
    pub h2: Array1<f64>,
    /// `|F V|^2`, `m x n`.
    pub fv2: Array2<f64>,
}

impl FrequencyGrid {
    pub fn num_devices(&self) -> usize {
        self.f.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.f.ncols()
    }

    /// Precomputes the squared-magnitude combinations used by every metric.
    pub fn powers(&self) -> LinkPowers {
        let f2 = self.f.mapv(|c| c.norm_sqr());
        let fg2 = &f2 * &self.g.mapv(|c| c.norm_sqr());
        let h2 = self.h.mapv(|c| c.norm_sqr());
        let fv2 = &f2 * &self.v.mapv(|c| c.norm_sqr());
        LinkPowers { f2, fg2, h2, fv2 }
    }
}

/// Mean power of path `l` for a link at distance `d` under decay factor `rho`.
pub fn path_power(d: f64, l: usize, rho: f64) -> f64 {
    FIRST_PATH_GAIN * d.powi(-2) * rho.powi(l as i32)
}

fn link_rng(seed: u64, code: u64, device: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((code << 32) | device);
    rng
}

/// One circularly-symmetric complex Gaussian draw of mean power `power`,
/// via Box–Muller on two uniform draws, variance split equally across the
/// real and imaginary parts.
fn complex_gaussian(rng: &mut ChaCha8Rng, power: f64) -> Complex64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let u2: f64 = rng.random::<f64>();
    let radius = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(radius * theta.cos(), radius * theta.sin()) * (power / 2.0).sqrt()
}

fn sample_link(rng: &mut ChaCha8Rng, d: f64, paths: usize, rho: f64) -> Vec<Complex64> {
    (0..paths).map(|l| complex_gaussian(rng, path_power(d, l, rho))).collect()
}

/// Draws one complete channel realization. Identical `(config, seed)` inputs
/// yield bit-identical output.
pub fn sample_taps(config: &ScenarioConfig, seed: u64) -> ChannelTapSet {
    let m = config.m;
    let mut forward = Array2::zeros((m, config.l_f));
    let mut backward = Array2::zeros((m, config.l_g));
    let mut interference = Array2::zeros((m, config.l_v));
    for dev in 0..m {
        let mut rng = link_rng(seed, STREAM_FORWARD, dev as u64);
        for (l, tap) in sample_link(&mut rng, config.d_fap_bd[dev], config.l_f, config.rho)
            .into_iter()
            .enumerate()
        {
            forward[[dev, l]] = tap;
        }
        let mut rng = link_rng(seed, STREAM_BACKWARD, dev as u64);
        for (l, tap) in sample_link(&mut rng, config.d_fap_bd[dev], config.l_g, config.rho)
            .into_iter()
            .enumerate()
        {
            backward[[dev, l]] = tap;
        }
        let mut rng = link_rng(seed, STREAM_INTERFERENCE, dev as u64);
        for (l, tap) in sample_link(&mut rng, config.d_bd_lu[dev], config.l_v, config.rho)
            .into_iter()
            .enumerate()
        {
            interference[[dev, l]] = tap;
        }
    }
    let mut rng = link_rng(seed, STREAM_DIRECT, 0);
    let direct = Array1::from_vec(sample_link(&mut rng, config.d_fap_lu, config.l_h, config.rho));
    ChannelTapSet { forward, backward, direct, interference }
}

/// N-point frequency response of each link: row `m`, bin `k` holds
/// `sum_l taps[m, l] * exp(-j 2 pi k l / n)`.
pub fn frequency_response(taps: &ChannelTapSet, n: usize) -> Result<FrequencyGrid> {
    for (name, len) in [
        ("forward", taps.forward.ncols()),
        ("backward", taps.backward.ncols()),
        ("direct", taps.direct.len()),
        ("interference", taps.interference.ncols()),
    ] {
        if len > n {
            return Err(Error::DimensionMismatch(format!(
                "{name} path count {len} exceeds subcarrier count {n}"
            )));
        }
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut scratch = vec![Complex64::ZERO; n];

    let mut transform_rows = |rows: &Array2<Complex64>| -> Array2<Complex64> {
        let m = rows.nrows();
        let mut out = Array2::zeros((m, n));
        for (i, row) in rows.rows().into_iter().enumerate() {
            scratch.fill(Complex64::ZERO);
            for (l, tap) in row.iter().enumerate() {
                scratch[l] = *tap;
            }
            fft.process(&mut scratch);
            for (k, value) in scratch.iter().enumerate() {
                out[[i, k]] = *value;
            }
        }
        out
    };

    let f = transform_rows(&taps.forward);
    let g = transform_rows(&taps.backward);
    let v = transform_rows(&taps.interference);
    let mut h_buf = vec![Complex64::ZERO; n];
    for (l, tap) in taps.direct.iter().enumerate() {
        h_buf[l] = *tap;
    }
    fft.process(&mut h_buf);
    let h = Array1::from_vec(h_buf);
    Ok(FrequencyGrid { f, g, h, v })
}

/// Noise variance implied by the configured average receive SNR at the AP,
/// `sigma2 = p_bar * sum_l E[|g_1l|^2] E[|f_1l|^2] / gamma_bar`, using the
/// analytic per-path powers of the first device's links (forward and
/// backward draws are independent, so the expectation factors).
pub fn noise_power_from_snr(config: &ScenarioConfig) -> f64 {
    let gamma_bar = 10f64.powf(config.snr_bar_db / 10.0);
    let d = config.d_fap_bd[0];
    let paths = config.l_f.min(config.l_g);
    let mean_product: f64 = (0..paths)
        .map(|l| path_power(d, l, config.rho) * path_power(d, l, config.rho))
        .sum();
    config.p_bar * mean_product / gamma_bar
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn test_config() -> ScenarioConfig {
        ScenarioConfig::default_scenario()
    }

    /// Direct double-loop evaluation of the transform definition.
    fn naive_response(taps: &[Complex64], n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                taps.iter()
                    .enumerate()
                    .map(|(l, tap)| {
                        let angle = -2.0 * std::f64::consts::PI * (k * l) as f64 / n as f64;
                        tap * Complex64::new(angle.cos(), angle.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = test_config();
        let a = sample_taps(&config, 0xDEADBEEF);
        let b = sample_taps(&config, 0xDEADBEEF);
        assert_eq!(a, b);
        let c = sample_taps(&config, 0xDEADBEF0);
        assert_ne!(a, c);
    }

    #[test]
    fn first_path_power_matches_distance_law() {
        let config = test_config();
        let draws = 100_000;
        let mut mean = 0.0;
        for seed in 0..draws {
            let taps = sample_taps(&config, seed);
            mean += taps.forward[[0, 0]].norm_sqr();
        }
        mean /= draws as f64;
        let expected = FIRST_PATH_GAIN * 2.5f64.powi(-2); // 1.6e-4
        assert!(
            (mean - expected).abs() <= 0.02 * expected,
            "empirical first-path power {mean:.6e} vs expected {expected:.6e}"
        );
    }

    #[test]
    fn path_decay_ratio_matches_rho() {
        let config = test_config();
        let draws = 100_000;
        let (mut p0, mut p1) = (0.0, 0.0);
        for seed in 0..draws {
            let taps = sample_taps(&config, seed);
            p0 += taps.forward[[0, 0]].norm_sqr();
            p1 += taps.forward[[0, 1]].norm_sqr();
        }
        let ratio = p1 / p0;
        assert!(
            (ratio - config.rho).abs() <= 0.02 * config.rho,
            "empirical decay ratio {ratio:.5} vs rho {:.5}",
            config.rho
        );
    }

    #[test]
    fn flat_channel_from_single_tap() {
        let mut taps = sample_taps(&test_config(), 1);
        taps.forward = Array2::zeros((2, 1));
        taps.forward[[0, 0]] = Complex64::new(1.0, 0.0);
        taps.forward[[1, 0]] = Complex64::new(1.0, 0.0);
        let grid = frequency_response(&taps, 64).unwrap();
        for k in 0..64 {
            assert_relative_eq!(grid.f[[0, k]].re, 1.0, epsilon = 1e-12);
            assert_relative_eq!(grid.f[[0, k]].im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pure_delay_has_unit_modulus_linear_phase() {
        let mut taps = sample_taps(&test_config(), 1);
        taps.forward = Array2::zeros((2, 4));
        taps.forward[[0, 1]] = Complex64::new(1.0, 0.0);
        let n = 64;
        let grid = frequency_response(&taps, n).unwrap();
        for k in 0..n {
            let expected = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64);
            assert_relative_eq!(grid.f[[0, k]].re, expected.re, epsilon = 1e-12);
            assert_relative_eq!(grid.f[[0, k]].im, expected.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_matches_direct_summation() {
        let config = test_config();
        let taps = sample_taps(&config, 7);
        let grid = frequency_response(&taps, config.n).unwrap();
        for dev in 0..config.m {
            let row: Vec<Complex64> = taps.forward.row(dev).to_vec();
            let expected = naive_response(&row, config.n);
            for k in 0..config.n {
                assert!((grid.f[[dev, k]] - expected[k]).norm() < 1e-12);
            }
        }
        let expected_h = naive_response(&taps.direct.to_vec(), config.n);
        for k in 0..config.n {
            assert!((grid.h[k] - expected_h[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_paths_beyond_subcarriers() {
        let config = test_config();
        let taps = sample_taps(&config, 3);
        let err = frequency_response(&taps, 4).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn noise_power_definition_at_unit_snr() {
        let mut config = test_config();
        config.snr_bar_db = 0.0;
        config.p_bar = 1.0;
        let s: f64 = (0..4)
            .map(|l| path_power(2.5, l, config.rho) * path_power(2.5, l, config.rho))
            .sum();
        assert_relative_eq!(noise_power_from_snr(&config), s, max_relative = 1e-14);
    }

    #[test]
    fn noise_power_inverse_in_snr() {
        let mut config = test_config();
        config.snr_bar_db = 10.0;
        let a = noise_power_from_snr(&config);
        config.snr_bar_db = 10.0 + 10.0 * 2f64.log10();
        let b = noise_power_from_snr(&config);
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn noise_power_matches_closed_form_geometric_series() {
        // Independent route: the per-path product powers form a geometric
        // series with ratio rho^2, so the sum has a closed form.
        let config = test_config();
        assert_eq!(config.snr_bar_db, 20.0);
        let first = FIRST_PATH_GAIN * 2.5f64.powi(-2);
        let r = config.rho * config.rho;
        let series = first * first * (1.0 - r.powi(4)) / (1.0 - r);
        let expected = config.p_bar * series / 100.0;
        assert_relative_eq!(noise_power_from_snr(&config), expected, max_relative = 1e-12);
        assert_relative_eq!(config.sigma2, expected, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn transform_is_linear_in_taps(scale_re in -3.0f64..3.0, scale_im in -3.0f64..3.0, seed in 0u64..1000) {
            let config = test_config();
            let taps = sample_taps(&config, seed);
            let scale = Complex64::new(scale_re, scale_im);
            let mut scaled = taps.clone();
            scaled.forward.mapv_inplace(|c| c * scale);
            let grid = frequency_response(&taps, 16).unwrap();
            let grid_scaled = frequency_response(&scaled, 16).unwrap();
            for (orig, s) in grid.f.iter().zip(grid_scaled.f.iter()) {
                prop_assert!((orig * scale - s).norm() < 1e-12);
            }
        }

        #[test]
        fn transform_preserves_energy(seed in 0u64..1000) {
            // Average subcarrier power equals total tap power.
            let config = test_config();
            let taps = sample_taps(&config, seed);
            let n = config.n;
            let grid = frequency_response(&taps, n).unwrap();
            for dev in 0..config.m {
                let freq_energy: f64 = (0..n).map(|k| grid.f[[dev, k]].norm_sqr()).sum::<f64>() / n as f64;
                let tap_energy: f64 = taps.forward.row(dev).iter().map(|c| c.norm_sqr()).sum();
                prop_assert!((freq_energy - tap_energy).abs() < 1e-10 * (1.0 + tap_energy));
            }
        }
    }
}
