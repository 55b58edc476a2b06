//! Well-mixed binomial link model.
//!
//! A bit 1 is read as the number of molecules that were in the TX zone,
//! got switched, and were detected: `Binomial(n1, p_mod * p_det)` with
//! `n1 = round(n_sys * q_tx)`. A bit 0 sees only residual molecules the
//! eraser missed: `Binomial(n0, p_res)` with
//! `n0 = round(n_sys * q_rx * (1 - p_ex))`. The detector decides 1 iff the
//! count exceeds an integer threshold `tau`; bits are equiprobable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub n_sys: u64,
    pub q_tx: f64,
    pub q_rx: f64,
    pub p_mod: f64,
    pub p_det: f64,
    pub p_ex: f64,
    /// Readout probability of a residual molecule.
    pub p_res: f64,
}

impl LinkModel {
    /// Builds a model with `p_res = p_det`.
    pub fn new(n_sys: u64, q_tx: f64, q_rx: f64, p_mod: f64, p_det: f64, p_ex: f64) -> Result<Self> {
        let m = Self { n_sys, q_tx, q_rx, p_mod, p_det, p_ex, p_res: p_det };
        m.validate()?;
        Ok(m)
    }

    pub fn with_residual_readout(mut self, p_res: f64) -> Result<Self> {
        self.p_res = p_res;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("q_tx", self.q_tx),
            ("q_rx", self.q_rx),
            ("p_mod", self.p_mod),
            ("p_det", self.p_det),
            ("p_ex", self.p_ex),
            ("p_res", self.p_res),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// Signal candidates `n1`.
    pub fn n_signal(&self) -> u64 {
        (self.n_sys as f64 * self.q_tx).round() as u64
    }

    /// Residual molecules `n0`.
    pub fn n_residual(&self) -> u64 {
        (self.n_sys as f64 * self.q_rx * (1.0 - self.p_ex)).round() as u64
    }

    /// Per-candidate success probability of a bit 1.
    pub fn p_signal(&self) -> f64 {
        self.p_mod * self.p_det
    }
}

/// Binomial(n, p) probability mass for `0..=n`.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let n_us = n as usize;
    let mut pmf = vec![0.0; n_us + 1];
    if p <= 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p >= 1.0 {
        pmf[n_us] = 1.0;
        return pmf;
    }
    let ln_fact = ln_factorials(n_us);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    for (k, slot) in pmf.iter_mut().enumerate() {
        let ln_choose = ln_fact[n_us] - ln_fact[k] - ln_fact[n_us - k];
        *slot = (ln_choose + k as f64 * lp + (n_us - k) as f64 * lq).exp();
    }
    pmf
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

/// `P(X <= k)` for every `k`, from a pmf. `P(X <= n)` is exactly 1.
fn cdf(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = pmf
        .iter()
        .map(|p| {
            acc += p;
            acc.min(1.0)
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Error probability of the count detector for explicit binomial parameters.
pub fn ber_for_counts(n1: u64, p1: f64, n0: u64, p0: f64, tau: u64) -> f64 {
    let c1 = cdf(&binomial_pmf(n1, p1));
    let c0 = cdf(&binomial_pmf(n0, p0));
    ber_from_cdfs(&c1, &c0, tau)
}

fn ber_from_cdfs(c1: &[f64], c0: &[f64], tau: u64) -> f64 {
    let at = |c: &[f64], k: u64| c.get(k as usize).copied().unwrap_or(1.0);
    let miss = at(c1, tau);
    let false_alarm = (1.0 - at(c0, tau)).max(0.0);
    0.5 * false_alarm + 0.5 * miss
}

/// BER of `model` at integer threshold `tau`.
pub fn ber_analytical(model: &LinkModel, tau: u64) -> f64 {
    ber_for_counts(model.n_signal(), model.p_signal(), model.n_residual(), model.p_res, tau)
}

/// Threshold minimizing the analytical BER, found by scanning every integer
/// threshold up to the largest possible count. Ties keep the smallest.
pub fn optimal_threshold(model: &LinkModel) -> (u64, f64) {
    let (n1, n0) = (model.n_signal(), model.n_residual());
    let c1 = cdf(&binomial_pmf(n1, model.p_signal()));
    let c0 = cdf(&binomial_pmf(n0, model.p_res));
    (0..=n1.max(n0))
        .map(|tau| (tau, ber_from_cdfs(&c1, &c0, tau)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}
