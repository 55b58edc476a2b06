//! OOK framing, threshold detection and BER estimation.

pub mod analytical;
pub mod detect;
pub mod frame;
pub mod montecarlo;

pub use analytical::{ber_analytical, ber_for_counts, binomial_pmf, optimal_threshold, LinkModel};
pub use detect::{bit_errors, detect, estimate_pilot, DetectorConfig, PilotEstimate};
pub use frame::{modulate_schedule, Interval, OokFrame};
pub use montecarlo::{ber_monte_carlo, ber_sweep, sweep_point, wilson_interval, BerEstimate, SweepRow, Z95};
