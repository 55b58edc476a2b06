use serde::{Deserialize, Serialize};

use crate::devices::RxSample;

/// Which receiver quantity a detector compares against its threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// Detected molecule count.
    Count,
    /// Detected count divided by the normalization reference.
    #[default]
    Intensity,
}

/// Time-ordered receiver samples at a fixed rate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RxTrace {
    pub samples: Vec<RxSample>,
}

impl RxTrace {
    pub fn new(samples: Vec<RxSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn value(&self, i: usize, kind: SignalKind) -> f64 {
        let s = &self.samples[i];
        match kind {
            SignalKind::Count => s.detected_count as f64,
            SignalKind::Intensity => s.intensity,
        }
    }

    pub fn values(&self, kind: SignalKind) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, kind)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Spacing of the first two samples.
    pub fn sample_interval(&self) -> Option<f64> {
        match self.samples.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }

    /// Index of the sample nearest to `t`, or `None` when `t` lies more than
    /// half a sample interval outside the trace.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        let half = 0.5 * self.sample_interval().unwrap_or(0.0) + 1e-9;
        if t < first.t - half || t > last.t + half {
            return None;
        }
        let i = self.samples.partition_point(|s| s.t < t);
        if i == 0 {
            return Some(0);
        }
        if i == self.samples.len() {
            return Some(i - 1);
        }
        // ties go to the earlier sample
        if (self.samples[i].t - t) < (t - self.samples[i - 1].t) {
            Some(i)
        } else {
            Some(i - 1)
        }
    }

    /// Recomputes intensities against a new reference count.
    pub fn renormalize(&mut self, reference: f64) {
        for s in &mut self.samples {
            s.intensity = if reference > 0.0 { s.detected_count as f64 / reference } else { 0.0 };
        }
    }
}
