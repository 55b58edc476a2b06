//! Monte Carlo BER estimation over full particle simulations.

use serde::{Deserialize, Serialize};

use super::analytical::{ber_analytical, optimal_threshold};
use super::detect::{bit_errors, detect};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::trial_seed;
use crate::scenarios::config::{DetectorMode, ScenarioConfig};
use crate::scenarios::{detector_for, Simulation};
use crate::trace::SignalKind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerEstimate {
    pub errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `errors` out of `n` trials.
pub fn wilson_interval(errors: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = errors as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors >= n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

impl BerEstimate {
    pub fn from_counts(errors: u64, bits: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, bits, Z95);
        Self {
            errors,
            bits,
            ber: if bits == 0 { 0.0 } else { errors as f64 / bits as f64 },
            ci_low,
            ci_high,
        }
    }
}

/// Runs `n_trials` independent simulations of `scenario`, each with a fresh
/// random bit sequence of `bits_per_trial` bits, and counts decoding errors.
///
/// Trial `i` runs under seed `trial_seed(rng_seed, i)`, so the estimate is
/// the same for any thread count. The pilot bit, when enabled, is not counted.
pub fn ber_monte_carlo(scenario: &ScenarioConfig, n_trials: usize, bits_per_trial: usize, rng_seed: u64) -> Result<BerEstimate> {
    if n_trials == 0 {
        return Err(Error::domain("n_trials must be >= 1"));
    }
    let mut cfg = scenario.clone();
    cfg.frame.bits = None;
    cfg.frame.random_bits = Some(bits_per_trial);
    cfg.validate()?;
    let skip = usize::from(cfg.frame.pilot);
    let per_trial: Vec<Result<(u64, u64)>> = par::map_indexed(n_trials, |i| {
        let sim = Simulation::new(&cfg, trial_seed(rng_seed, i as u64))?;
        let raw = sim.run(None)?;
        let (_, detector) = detector_for(&cfg, &raw.trace, &raw.frame)?;
        let decoded = detect(&raw.trace, &detector)?;
        let errors = bit_errors(raw.frame.bits(), &decoded, skip) as u64;
        Ok((errors, (raw.frame.len() - skip.min(raw.frame.len())) as u64))
    });
    let (mut errors, mut bits) = (0, 0);
    for r in per_trial {
        let (e, b) = r?;
        errors += e;
        bits += b;
    }
    Ok(BerEstimate::from_counts(errors, bits))
}

/// One point of a BER sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub power_density: f64,
    pub n_sys: u64,
    pub rx_power_class: String,
    pub ber_mc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ber_analytical: f64,
    /// Count threshold used by both estimates.
    pub threshold: u64,
    pub bits: u64,
}

/// The config of one sweep point: TX power, molecule count and RX power
/// substituted, and a count detector at the model-optimal threshold.
pub fn sweep_point(base: &ScenarioConfig, tx_power: f64, n_sys: u64, rx_power: Option<f64>) -> Result<(ScenarioConfig, u64, f64)> {
    let mut cfg = base.clone();
    cfg.n_sys = n_sys;
    let tx = cfg.tx_index().ok_or_else(|| Error::config("device", "sweep needs a tx device"))?;
    cfg.devices[tx].power_density_w_per_m2 = tx_power;
    if let Some(p) = rx_power {
        let rx = cfg.rx_index().ok_or_else(|| Error::config("device", "sweep needs an rx device"))?;
        cfg.devices[rx].power_density_w_per_m2 = p;
    }
    let model = cfg.link_model()?;
    let (tau, _) = optimal_threshold(&model);
    cfg.detector.mode = DetectorMode::Fixed;
    cfg.detector.signal = SignalKind::Count;
    cfg.detector.threshold = Some(tau as f64);
    cfg.frame.pilot = false;
    Ok((cfg, tau, ber_analytical(&model, tau)))
}

/// Runs the `[sweep]` section of `base`: the cartesian product of TX
/// powers, molecule counts and RX power classes.
pub fn ber_sweep(base: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    let sweep = base
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "config has no [sweep] section"))?;
    let classes: Vec<(String, Option<f64>)> = if sweep.rx_power_classes.is_empty() {
        vec![("configured".to_string(), None)]
    } else {
        sweep
            .rx_power_classes
            .iter()
            .map(|c| (c.name.clone(), Some(c.power_density_w_per_m2)))
            .collect()
    };
    let mut rows = Vec::new();
    for (class, rx_power) in &classes {
        for &n_sys in &sweep.n_sys {
            for &power in &sweep.tx_power_densities_w_per_m2 {
                let (cfg, tau, analytic) = sweep_point(base, power, n_sys, *rx_power)?;
                let est = ber_monte_carlo(&cfg, sweep.trials, sweep.bits_per_trial, base.seed)?;
                rows.push(SweepRow {
                    power_density: power,
                    n_sys,
                    rx_power_class: class.clone(),
                    ber_mc: est.ber,
                    ci_low: est.ci_low,
                    ci_high: est.ci_high,
                    ber_analytical: analytic,
                    threshold: tau,
                    bits: est.bits,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_interval_reference_values() {
        // 10 / 100 at 95%: (0.05523, 0.17437)
        let (lo, hi) = wilson_interval(10, 100, Z95);
        assert!((lo - 0.055_229_4).abs() < 1e-6, "{lo}");
        assert!((hi - 0.174_366_4).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson_interval(0, 2000, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.002);
    }

    #[test]
    fn estimate_contains_point_value() {
        let e = BerEstimate::from_counts(37, 2000);
        assert!(e.ci_low < e.ber && e.ber < e.ci_high);
    }
}
