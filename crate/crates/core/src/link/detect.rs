//! Static threshold detection with pilot-based calibration.

use serde::{Deserialize, Serialize};

use super::frame::OokFrame;
use crate::error::{Error, Result};
use crate::trace::{RxTrace, SignalKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotEstimate {
    /// Signal at t = 0, before the pilot takes effect.
    pub baseline: f64,
    /// Largest signal inside the pilot symbol.
    pub first_peak: f64,
    /// Time from the start of the pilot on-time to the peak, s.
    pub peak_delay: f64,
}

impl PilotEstimate {
    /// A pilot whose peak never rises above the baseline carries no information.
    pub fn is_degenerate(&self) -> bool {
        self.first_peak <= self.baseline
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold: f64,
    /// One sampling instant per symbol, s.
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub signal: SignalKind,
}

impl DetectorConfig {
    /// Samples every symbol at the same offset from its start.
    pub fn periodic(threshold: f64, frame: &OokFrame, offset: f64, signal: SignalKind) -> Result<Self> {
        if threshold.is_nan() || threshold < 0.0 {
            return Err(Error::Detection(format!("threshold must be >= 0, got {threshold}")));
        }
        Ok(Self {
            threshold,
            sample_times: (0..frame.len()).map(|k| frame.symbol_start(k) + offset).collect(),
            signal,
        })
    }
}

/// Calibrates threshold and sampling instants from the leading pilot bit.
///
/// The threshold is the midpoint between the signal at t = 0 and the peak of
/// the pilot symbol; every symbol is sampled at the pilot's peak delay.
pub fn estimate_pilot(trace: &RxTrace, frame: &OokFrame, signal: SignalKind) -> Result<(PilotEstimate, DetectorConfig)> {
    match frame.bits().first() {
        Some(1) => {}
        Some(_) => return Err(Error::config("frame.bits", "pilot calibration needs the first bit to be 1")),
        None => return Err(Error::config("frame.bits", "empty frame has no pilot")),
    }
    let baseline_idx = trace
        .nearest_index(0.0)
        .ok_or_else(|| Error::Detection("trace does not cover t = 0".into()))?;
    let baseline = trace.value(baseline_idx, signal);
    let t_end = frame.symbol_duration();
    let (mut peak, mut peak_t) = (f64::NEG_INFINITY, 0.0);
    for (i, s) in trace.samples.iter().enumerate() {
        if s.t >= 0.0 && s.t < t_end {
            let v = trace.value(i, signal);
            if v > peak {
                peak = v;
                peak_t = s.t;
            }
        }
    }
    if !peak.is_finite() {
        return Err(Error::Detection("trace has no samples inside the pilot symbol".into()));
    }
    let pilot = PilotEstimate {
        baseline,
        first_peak: peak.max(baseline),
        peak_delay: peak_t,
    };
    if pilot.is_degenerate() {
        log::warn!("pilot peak {} does not exceed baseline {}; detection will degenerate", pilot.first_peak, baseline);
    }
    let threshold = 0.5 * (pilot.baseline + pilot.first_peak);
    let config = DetectorConfig {
        threshold: threshold.max(0.0),
        sample_times: (0..frame.len()).map(|k| frame.symbol_start(k) + pilot.peak_delay).collect(),
        signal,
    };
    Ok((pilot, config))
}

/// Decodes one bit per sampling instant: 1 iff the nearest sample exceeds
/// the threshold. A sample equal to the threshold decodes as 0.
pub fn detect(trace: &RxTrace, config: &DetectorConfig) -> Result<Vec<u8>> {
    config
        .sample_times
        .iter()
        .map(|&t| {
            let i = trace
                .nearest_index(t)
                .ok_or_else(|| Error::Detection(format!("sample time {t} s lies outside the trace")))?;
            Ok(u8::from(trace.value(i, config.signal) > config.threshold))
        })
        .collect()
}

/// Number of positions where `a` and `b` differ, skipping the first `skip`.
pub fn bit_errors(a: &[u8], b: &[u8], skip: usize) -> usize {
    a.iter().zip(b).skip(skip).filter(|(x, y)| x != y).count()
}
