//! Residual-ISI echo analysis for the closed-loop testbed.
//!
//! Molecules that survive the eraser come around once per loop, so the
//! response to each bit 1 repeats, attenuated, one loop time later. The
//! pilot symbol gives the shape of a single response `h`. The trace minus
//! all main responses is fitted by `c + sum_k a_k h(t - k T_S - lag)` for a
//! grid of lags; the lag with the smallest residual is the echo delay and
//! `a_k` is the echo height of bit `k` relative to the pilot response.

use serde::{Deserialize, Serialize};

use crate::link::OokFrame;
use crate::trace::{RxTrace, SignalKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoFit {
    pub lag_s: f64,
    /// (symbol index of the bit 1, echo amplitude relative to the pilot response)
    pub amplitudes: Vec<(usize, f64)>,
    pub offset: f64,
    pub residual_ss: f64,
}

/// Pilot-derived single-response template with linear interpolation.
struct Template {
    t: Vec<f64>,
    h: Vec<f64>,
    span: f64,
}

impl Template {
    fn at(&self, tau: f64) -> f64 {
        if tau < 0.0 || tau >= self.span || self.t.is_empty() {
            return 0.0;
        }
        let i = self.t.partition_point(|&s| s <= tau);
        if i == 0 {
            return self.h[0];
        }
        if i == self.t.len() {
            return self.h[i - 1];
        }
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let w = (tau - t0) / (t1 - t0);
        self.h[i - 1] * (1.0 - w) + self.h[i] * w
    }
}

/// Solves the normal equations of a small least-squares problem; returns
/// coefficients and residual sum of squares.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let p = columns.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = columns[i].iter().zip(&columns[j]).map(|(x, z)| x * z).sum();
        }
        a[i][i] += 1e-12;
        a[i][p] = columns[i].iter().zip(y).map(|(x, z)| x * z).sum();
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        let d = a[col][col];
        if d.abs() < 1e-300 {
            continue;
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col] / d;
                let pivot_row = a[col].clone();
                for (x, pv) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * pv;
                }
            }
        }
    }
    let coef: Vec<f64> = (0..p)
        .map(|i| if a[i][i].abs() < 1e-300 { 0.0 } else { a[i][p] / a[i][i] })
        .collect();
    let rss = y
        .iter()
        .enumerate()
        .map(|(n, yv)| {
            let fit: f64 = coef.iter().zip(columns).map(|(c, col)| c * col[n]).sum();
            (yv - fit).powi(2)
        })
        .sum();
    (coef, rss)
}

/// Fits the echo lag over `[min_lag, max_lag]` in steps of `resolution`.
pub fn fit_echo(trace: &RxTrace, frame: &OokFrame, signal: SignalKind, min_lag: f64, max_lag: f64, resolution: f64) -> Option<EchoFit> {
    let ts = trace.times();
    let ys = trace.values(signal);
    let base_idx = trace.nearest_index(0.0)?;
    let baseline = ys[base_idx];
    let t_s = frame.symbol_duration();
    let (tt, hh): (Vec<f64>, Vec<f64>) = ts
        .iter()
        .zip(&ys)
        .filter(|(t, _)| **t >= 0.0 && **t < t_s)
        .map(|(t, y)| (*t, y - baseline))
        .unzip();
    if tt.len() < 2 {
        return None;
    }
    let template = Template { t: tt, h: hh, span: t_s };
    let ones: Vec<usize> = frame.bits().iter().enumerate().filter(|(_, b)| **b == 1).map(|(k, _)| k).collect();
    let residual: Vec<f64> = ts
        .iter()
        .zip(&ys)
        .map(|(&t, &y)| y - baseline - ones.iter().map(|&k| template.at(t - frame.symbol_start(k))).sum::<f64>())
        .collect();
    let t_end = ts.last().copied()?;

    let mut best: Option<EchoFit> = None;
    let steps = ((max_lag - min_lag) / resolution).floor() as usize;
    for s in 0..=steps {
        let lag = min_lag + s as f64 * resolution;
        let echoing: Vec<usize> = ones.iter().copied().filter(|&k| frame.symbol_start(k) + lag < t_end).collect();
        let mut columns = vec![vec![1.0; ts.len()]];
        columns.extend(
            echoing
                .iter()
                .map(|&k| ts.iter().map(|&t| template.at(t - frame.symbol_start(k) - lag)).collect()),
        );
        let (coef, rss) = least_squares(&columns, &residual);
        if best.as_ref().is_none_or(|b| rss < b.residual_ss) {
            best = Some(EchoFit {
                lag_s: lag,
                amplitudes: echoing.iter().copied().zip(coef[1..].iter().copied()).collect(),
                offset: coef[0],
                residual_ss: rss,
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::RxSample;

    fn pulse(t: f64) -> f64 {
        // trapezoid: ramp 1-3 s, flat to 10 s, ramp down to 12 s
        if !(1.0..12.0).contains(&t) {
            0.0
        } else if t < 3.0 {
            (t - 1.0) / 2.0
        } else if t <= 10.0 {
            1.0
        } else {
            (12.0 - t) / 2.0
        }
    }

    fn synthetic(bits: &[u8], echo: f64, lag: f64) -> (RxTrace, OokFrame) {
        let frame = OokFrame::new(bits.to_vec(), 30.0, 10.0).unwrap();
        let samples = (0..90)
            .map(|i| {
                let t = i as f64 * 2.0;
                let v: f64 = bits
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b == 1)
                    .map(|(k, _)| pulse(t - 30.0 * k as f64) + echo * pulse(t - 30.0 * k as f64 - lag))
                    .sum::<f64>()
                    + 0.05;
                RxSample { t, raw_count: 0, detected_count: 0, intensity: v }
            })
            .collect();
        (RxTrace::new(samples), frame)
    }

    #[test]
    fn recovers_known_echo() {
        let (tr, frame) = synthetic(&[1, 1, 0, 0, 1, 0], 0.2, 38.1);
        let fit = fit_echo(&tr, &frame, SignalKind::Intensity, 15.0, 60.0, 0.1).unwrap();
        assert!((fit.lag_s - 38.1).abs() < 1.0, "{fit:?}");
        for (_, a) in &fit.amplitudes {
            assert!((a - 0.2).abs() < 0.05, "{fit:?}");
        }
    }

    #[test]
    fn no_echo_gives_zero_amplitudes() {
        let (tr, frame) = synthetic(&[1, 1, 0, 0, 1, 0], 0.0, 38.1);
        let fit = fit_echo(&tr, &frame, SignalKind::Intensity, 15.0, 60.0, 0.1).unwrap();
        assert!(fit.amplitudes.iter().all(|(_, a)| a.abs() < 1e-6), "{fit:?}");
    }

    #[test]
    fn least_squares_recovers_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
        let (c, rss) = least_squares(&[vec![1.0; 10], x], &y);
        assert!((c[0] - 2.0).abs() < 1e-9 && (c[1] - 0.5).abs() < 1e-9 && rss < 1e-15);
    }
}
