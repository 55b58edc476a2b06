use serde::{Deserialize, Serialize};

use crate::link::{DetectorConfig, OokFrame};
use crate::trace::RxTrace;

/// Inter-symbol interference seen during bit-0 symbols.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IsiMetrics {
    /// Mean detected count over each bit-0 symbol, as (symbol index, floor).
    pub floor_per_symbol: Vec<(usize, f64)>,
    /// Mean of `floor_per_symbol`.
    pub floor: f64,
    /// Least-squares slope of the floor against symbol index, counts per symbol.
    pub floor_slope: f64,
    /// Bit-0 symbols whose sample exceeds the threshold.
    pub false_peaks: usize,
    pub false_peak_symbols: Vec<usize>,
}

/// Least-squares slope of `y` against `x`; 0 for fewer than two points.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return 0.0;
    }
    points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

pub fn isi_metrics(trace: &RxTrace, frame: &OokFrame, detector: &DetectorConfig) -> IsiMetrics {
    let mut floor_per_symbol = Vec::new();
    let mut false_peak_symbols = Vec::new();
    for (k, bit) in frame.bits().iter().enumerate() {
        if *bit != 0 {
            continue;
        }
        let (t0, t1) = (frame.symbol_start(k), frame.symbol_start(k + 1));
        let in_symbol: Vec<f64> = trace
            .samples
            .iter()
            .filter(|s| s.t >= t0 && s.t < t1)
            .map(|s| s.detected_count as f64)
            .collect();
        if !in_symbol.is_empty() {
            floor_per_symbol.push((k, in_symbol.iter().sum::<f64>() / in_symbol.len() as f64));
        }
        if let Some(i) = detector.sample_times.get(k).and_then(|&t| trace.nearest_index(t)) {
            if trace.value(i, detector.signal) > detector.threshold {
                false_peak_symbols.push(k);
            }
        }
    }
    let floor = if floor_per_symbol.is_empty() {
        0.0
    } else {
        floor_per_symbol.iter().map(|f| f.1).sum::<f64>() / floor_per_symbol.len() as f64
    };
    let pts: Vec<(f64, f64)> = floor_per_symbol.iter().map(|&(k, f)| (k as f64, f)).collect();
    IsiMetrics {
        floor,
        floor_slope: ls_slope(&pts),
        false_peaks: false_peak_symbols.len(),
        false_peak_symbols,
        floor_per_symbol,
    }
}
