use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// OOK transmit frame: bit 1 switches the transmitter on for the first
/// `tx_on_time` seconds of its symbol, bit 0 leaves it off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OokFrame {
    bits: Vec<u8>,
    symbol_duration: f64,
    tx_on_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

const TIME_EPS: f64 = 1e-9;

impl OokFrame {
    pub fn new(bits: Vec<u8>, symbol_duration: f64, tx_on_time: f64) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::config("frame.bits", format!("bits must be 0 or 1, found {b}")));
        }
        if !(symbol_duration.is_finite() && symbol_duration > 0.0) {
            return Err(Error::config("frame.symbol_duration_s", format!("must be > 0, got {symbol_duration}")));
        }
        if !(tx_on_time > 0.0 && tx_on_time <= symbol_duration) {
            return Err(Error::config(
                "frame.tx_on_time_s",
                format!("must lie in (0, symbol duration {symbol_duration}], got {tx_on_time}"),
            ));
        }
        Ok(Self { bits, symbol_duration, tx_on_time })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
    }

    pub fn tx_on_time(&self) -> f64 {
        self.tx_on_time
    }

    pub fn guard_time(&self) -> f64 {
        self.symbol_duration - self.tx_on_time
    }

    pub fn duration(&self) -> f64 {
        self.symbol_duration * self.bits.len() as f64
    }

    pub fn symbol_start(&self, k: usize) -> f64 {
        k as f64 * self.symbol_duration
    }

    /// Index of the symbol containing `t`, if any.
    pub fn symbol_at(&self, t: f64) -> Option<usize> {
        if t < -TIME_EPS {
            return None;
        }
        let k = ((t + TIME_EPS * self.symbol_duration) / self.symbol_duration).floor() as usize;
        (k < self.bits.len()).then_some(k)
    }

    /// Whether the transmitter is on at time `t`.
    pub fn tx_active(&self, t: f64) -> bool {
        match self.symbol_at(t) {
            Some(k) if self.bits[k] == 1 => t - self.symbol_start(k) < self.tx_on_time - TIME_EPS * self.symbol_duration,
            _ => false,
        }
    }
}

/// TX activation intervals, one per bit 1.
pub fn modulate_schedule(frame: &OokFrame) -> Vec<Interval> {
    frame
        .bits
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == 1)
        .map(|(k, _)| {
            let start = frame.symbol_start(k);
            Interval { start, end: start + frame.tx_on_time }
        })
        .collect()
}
