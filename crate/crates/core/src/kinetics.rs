//! Two-state switchable molecules: stimulus-driven and spontaneous switching.
//!
//! State A is fluorescent and visible to a receiver, state B is dark.
//! Switching under a stimulus follows first-order photokinetics: a molecule
//! exposed to power density `P` for time `t` switches with probability
//! `1 - exp(-sigma * P * t)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoleculeState {
    A,
    B,
}

impl MoleculeState {
    /// Only A-state molecules are seen by a receiver.
    pub fn is_observable(self) -> bool {
        matches!(self, MoleculeState::A)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    /// Write / switch on.
    BToA,
    /// Erase / switch off.
    AToB,
}

impl Transition {
    pub fn source(self) -> MoleculeState {
        match self {
            Transition::BToA => MoleculeState::B,
            Transition::AToB => MoleculeState::A,
        }
    }

    pub fn target(self) -> MoleculeState {
        match self {
            Transition::BToA => MoleculeState::A,
            Transition::AToB => MoleculeState::B,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchPolicy {
    /// Write-once molecules: only B -> A is possible, and it is final.
    OneTime,
    #[default]
    Reversible,
}

impl SwitchPolicy {
    pub fn allows(self, transition: Transition) -> bool {
        match self {
            SwitchPolicy::OneTime => transition == Transition::BToA,
            SwitchPolicy::Reversible => true,
        }
    }
}

/// How a molecule responds to one irradiation stimulus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StimulusResponse {
    /// Switching rate per unit power density, m^2 W^-1 s^-1.
    cross_section: f64,
    direction: Transition,
    /// Informational only.
    pub wavelength_nm: Option<f64>,
}

impl StimulusResponse {
    pub fn new(cross_section: f64, direction: Transition) -> Result<Self> {
        if !(cross_section.is_finite() && cross_section >= 0.0) {
            return Err(Error::domain(format!(
                "cross section must be finite and >= 0, got {cross_section}"
            )));
        }
        Ok(Self {
            cross_section,
            direction,
            wavelength_nm: None,
        })
    }

    pub fn with_wavelength(mut self, nm: f64) -> Self {
        self.wavelength_nm = Some(nm);
        self
    }

    pub fn cross_section(&self) -> f64 {
        self.cross_section
    }

    pub fn direction(&self) -> Transition {
        self.direction
    }
}

/// Probability that one molecule switches during `exposure` seconds at
/// `power_density` W/m^2.
pub fn switch_probability(power_density: f64, exposure: f64, response: &StimulusResponse) -> Result<f64> {
    if power_density.is_nan() || power_density < 0.0 || exposure.is_nan() || exposure < 0.0 {
        return Err(Error::domain(format!(
            "power density and exposure must be >= 0, got {power_density} and {exposure}"
        )));
    }
    Ok(saturating_probability(response.cross_section * power_density * exposure))
}

/// `1 - exp(-dose)`, clamped into [0, 1].
pub(crate) fn saturating_probability(dose: f64) -> f64 {
    if dose.is_nan() {
        return 0.0;
    }
    (-(-dose).exp_m1()).clamp(0.0, 1.0)
}

/// Memoryless spontaneous switching rates, s^-1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpontaneousKinetics {
    pub rate_b_to_a: f64,
    #[serde(default)]
    pub rate_a_to_b: f64,
}

impl SpontaneousKinetics {
    pub fn new(rate_b_to_a: f64, rate_a_to_b: f64) -> Result<Self> {
        for (name, r) in [("rate_b_to_a", rate_b_to_a), ("rate_a_to_b", rate_a_to_b)] {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {r}")));
            }
        }
        Ok(Self { rate_b_to_a, rate_a_to_b })
    }

    pub fn is_inert(&self) -> bool {
        self.rate_b_to_a == 0.0 && self.rate_a_to_b == 0.0
    }
}

/// Switches each eligible molecule independently with probability `p`.
///
/// A molecule is eligible when it sits in the source state of `direction`
/// and `policy` permits the transition. Returns the number switched.
/// `p >= 1` and `p <= 0` consume no random numbers.
pub fn apply_stimulus<'a, I, R>(states: I, direction: Transition, p: f64, policy: SwitchPolicy, rng: &mut R) -> usize
where
    I: IntoIterator<Item = &'a mut MoleculeState>,
    R: Rng + ?Sized,
{
    debug_assert!((0.0..=1.0).contains(&p), "switching probability {p} outside [0, 1]");
    if !policy.allows(direction) || p <= 0.0 {
        return 0;
    }
    let (from, to) = (direction.source(), direction.target());
    let mut switched = 0;
    for s in states {
        if *s == from && (p >= 1.0 || rng.random::<f64>() < p) {
            *s = to;
            switched += 1;
        }
    }
    switched
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpontaneousFlips {
    pub b_to_a: usize,
    pub a_to_b: usize,
}

/// Spontaneous switching over one timestep of length `dt`.
///
/// Each molecule makes at most one transition per step, decided from its
/// state at the start of the step.
pub fn apply_spontaneous<'a, I, R>(
    states: I,
    dt: f64,
    kin: &SpontaneousKinetics,
    policy: SwitchPolicy,
    rng: &mut R,
) -> Result<SpontaneousFlips>
where
    I: IntoIterator<Item = &'a mut MoleculeState>,
    R: Rng + ?Sized,
{
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::domain(format!("dt must be > 0, got {dt}")));
    }
    let p_on = if policy.allows(Transition::BToA) {
        saturating_probability(kin.rate_b_to_a * dt)
    } else {
        0.0
    };
    let p_off = if policy.allows(Transition::AToB) {
        saturating_probability(kin.rate_a_to_b * dt)
    } else {
        0.0
    };
    let mut flips = SpontaneousFlips::default();
    if p_on == 0.0 && p_off == 0.0 {
        return Ok(flips);
    }
    for s in states {
        match *s {
            MoleculeState::B if p_on > 0.0 && rng.random::<f64>() < p_on => {
                *s = MoleculeState::A;
                flips.b_to_a += 1;
            }
            MoleculeState::A if p_off > 0.0 && rng.random::<f64>() < p_off => {
                *s = MoleculeState::B;
                flips.a_to_b += 1;
            }
            _ => {}
        }
    }
    Ok(flips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn tx_response(sigma: f64) -> StimulusResponse {
        StimulusResponse::new(sigma, Transition::BToA).unwrap()
    }

    #[test]
    fn zero_power_never_switches() {
        assert_eq!(switch_probability(0.0, 10.0, &tx_response(123.0)).unwrap(), 0.0);
        assert_eq!(switch_probability(5.0, 0.0, &tx_response(123.0)).unwrap(), 0.0);
    }

    #[test]
    fn half_dose_is_ln2() {
        let p = switch_probability(std::f64::consts::LN_2, 1.0, &tx_response(1.0)).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_high_precision_value() {
        // 1 - e^-10 evaluated with 30-digit arithmetic.
        let p = switch_probability(1e3, 10.0, &tx_response(1e-3)).unwrap();
        assert!((p - 0.999_954_600_070_237_5).abs() < 1e-15);
    }

    #[test]
    fn negative_inputs_are_domain_errors() {
        let r = tx_response(1.0);
        assert!(matches!(switch_probability(-1.0, 1.0, &r), Err(Error::Domain(_))));
        assert!(matches!(switch_probability(1.0, -1.0, &r), Err(Error::Domain(_))));
        assert!(StimulusResponse::new(-1.0, Transition::AToB).is_err());
        assert!(SpontaneousKinetics::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn certain_switch_flips_every_source_molecule() {
        let mut rng = stream(1, Domain::Devices, 0);
        let mut states = vec![MoleculeState::B; 100];
        let n = apply_stimulus(&mut states, Transition::BToA, 1.0, SwitchPolicy::Reversible, &mut rng);
        assert_eq!(n, 100);
        assert!(states.iter().all(|s| *s == MoleculeState::A));
        // nothing left in the source state
        let n = apply_stimulus(&mut states, Transition::BToA, 1.0, SwitchPolicy::Reversible, &mut rng);
        assert_eq!(n, 0);
    }

    #[test]
    fn one_time_policy_blocks_erasure() {
        let mut rng = stream(1, Domain::Devices, 0);
        let mut states = vec![MoleculeState::A; 10];
        assert_eq!(apply_stimulus(&mut states, Transition::AToB, 1.0, SwitchPolicy::OneTime, &mut rng), 0);
        let kin = SpontaneousKinetics::new(0.0, 10.0).unwrap();
        let flips = apply_spontaneous(&mut states, 1.0, &kin, SwitchPolicy::OneTime, &mut rng).unwrap();
        assert_eq!(flips.a_to_b, 0);
        assert!(states.iter().all(|s| *s == MoleculeState::A));
    }

    #[test]
    fn binomial_switch_count_stays_in_three_sigma_band() {
        let mut inside = 0;
        for seed in 0..200 {
            let mut rng = stream(seed, Domain::Devices, 0);
            let mut states = vec![MoleculeState::B; 10_000];
            let n = apply_stimulus(&mut states, Transition::BToA, 0.3, SwitchPolicy::Reversible, &mut rng);
            if (2852..=3148).contains(&n) {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside}/200 seeds inside the band");
    }

    #[test]
    fn spontaneous_zero_rate_is_inert() {
        let mut rng = stream(3, Domain::Devices, 0);
        let mut states = vec![MoleculeState::B; 1000];
        let flips = apply_spontaneous(&mut states, 1.0, &SpontaneousKinetics::default(), SwitchPolicy::Reversible, &mut rng).unwrap();
        assert_eq!(flips, SpontaneousFlips::default());
        assert!(apply_spontaneous(&mut states, 0.0, &SpontaneousKinetics::default(), SwitchPolicy::Reversible, &mut rng).is_err());
    }

    #[test]
    fn spontaneous_flip_count_matches_closed_form() {
        // 1e6 * (1 - exp(-1e-3)) = 999.50017; sd ~ 31.6
        let kin = SpontaneousKinetics::new(1e-3, 0.0).unwrap();
        let mut rng = stream(11, Domain::Devices, 0);
        let mut states = vec![MoleculeState::B; 1_000_000];
        let flips = apply_spontaneous(&mut states, 1.0, &kin, SwitchPolicy::Reversible, &mut rng).unwrap();
        assert!((flips.b_to_a as f64 - 999.500_17).abs() < 4.0 * 31.6, "{flips:?}");
    }

    #[test]
    fn switched_count_mean_and_variance_match_binomial() {
        let (n, p, trials) = (500usize, 0.2, 2000);
        let counts: Vec<f64> = (0..trials)
            .map(|t| {
                let mut rng = stream(99, Domain::Devices, t as u64);
                let mut states = vec![MoleculeState::B; n];
                apply_stimulus(&mut states, Transition::BToA, p, SwitchPolicy::Reversible, &mut rng) as f64
            })
            .collect();
        let mean = counts.iter().sum::<f64>() / trials as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let (m0, v0) = (n as f64 * p, n as f64 * p * (1.0 - p));
        assert!((mean - m0).abs() <= 3.0 * v0.sqrt() / (trials as f64).sqrt());
        assert!((var / v0 - 1.0).abs() < 0.10, "variance {var} vs {v0}");
    }

    proptest! {
        #[test]
        fn probability_is_in_unit_interval(sigma in 0.0..1e3f64, p in 0.0..1e6f64, t in 0.0..1e3f64) {
            let q = switch_probability(p, t, &tx_response(sigma)).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
            prop_assert_eq!(q == 0.0, sigma * p * t == 0.0);
        }

        #[test]
        fn probability_is_monotone(sigma in 1e-6..1.0f64, p in 0.0..1e3f64, dp in 0.0..1e3f64, t in 0.0..10.0f64) {
            let r = tx_response(sigma);
            prop_assert!(switch_probability(p + dp, t, &r).unwrap() >= switch_probability(p, t, &r).unwrap());
            prop_assert!(switch_probability(p, t + dp, &r).unwrap() >= switch_probability(p, t, &r).unwrap());
        }

        #[test]
        fn one_time_a_count_never_decreases(seed in 0u64..1000, ops in proptest::collection::vec((0u8..3, 0.0..1.0f64), 1..20)) {
            let mut rng = stream(seed, Domain::Devices, 0);
            let mut states = vec![MoleculeState::B; 64];
            let kin = SpontaneousKinetics::new(0.5, 0.5).unwrap();
            let mut a_count = 0;
            for (op, p) in ops {
                match op {
                    0 => { apply_stimulus(&mut states, Transition::BToA, p, SwitchPolicy::OneTime, &mut rng); }
                    1 => { apply_stimulus(&mut states, Transition::AToB, p, SwitchPolicy::OneTime, &mut rng); }
                    _ => { apply_spontaneous(&mut states, p + 0.01, &kin, SwitchPolicy::OneTime, &mut rng).unwrap(); }
                }
                let now = states.iter().filter(|s| s.is_observable()).count();
                prop_assert!(now >= a_count);
                a_count = now;
            }
        }
    }
}
