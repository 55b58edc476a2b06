//! Pre-wired experiments: point-TX versus media-modulation comparison and
//! the closed-loop testbed replay.

pub mod config;
pub mod engine;
pub mod isi;
pub mod testbed;

use serde::{Deserialize, Serialize};

pub use config::{DetectorMode, ScenarioConfig, ScenarioKind};
pub use engine::{Observer, RawRun, Simulation};
pub use isi::{isi_metrics, IsiMetrics};
pub use testbed::{fit_echo, EchoFit};

use crate::error::{Error, Result};
use crate::kinetics::SwitchPolicy;
use crate::link::{bit_errors, detect, estimate_pilot, DetectorConfig, OokFrame, PilotEstimate};
use crate::trace::RxTrace;

/// A finished run with its detection and ISI analysis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub bits: Vec<u8>,
    pub symbol_duration_s: f64,
    #[serde(skip)]
    pub trace: RxTrace,
    #[serde(skip)]
    pub population: Vec<usize>,
    pub released: u64,
    pub pilot: Option<PilotEstimate>,
    pub detector: DetectorConfig,
    pub decoded: Vec<u8>,
    /// Errors outside the pilot symbol.
    pub bit_errors: usize,
    pub isi: IsiMetrics,
}

impl ScenarioRun {
    pub fn frame(&self, tx_on_time: f64) -> Result<OokFrame> {
        OokFrame::new(self.bits.clone(), self.symbol_duration_s, tx_on_time)
    }
}

/// Builds the detector the config asks for.
pub fn detector_for(cfg: &ScenarioConfig, trace: &RxTrace, frame: &OokFrame) -> Result<(Option<PilotEstimate>, DetectorConfig)> {
    match cfg.detector.mode {
        DetectorMode::Pilot => {
            let (p, d) = estimate_pilot(trace, frame, cfg.detector.signal)?;
            Ok((Some(p), d))
        }
        DetectorMode::Fixed => {
            let threshold = cfg.detector.threshold.unwrap_or(0.0);
            let offset = match cfg.detector.sample_offset_s {
                Some(o) => o,
                None => cfg.tx_to_rx_delay()?,
            };
            Ok((None, DetectorConfig::periodic(threshold, frame, offset, cfg.detector.signal)?))
        }
    }
}

/// Runs any scenario kind and analyzes it.
pub fn run_scenario(cfg: &ScenarioConfig, observer: Option<&mut Observer<'_>>) -> Result<ScenarioRun> {
    let sim = Simulation::new(cfg, cfg.seed)?;
    let raw = sim.run(observer)?;
    analyze(cfg, raw)
}

/// Detection and ISI metrics for a finished run.
pub fn analyze(cfg: &ScenarioConfig, raw: RawRun) -> Result<ScenarioRun> {
    let (pilot, detector) = detector_for(cfg, &raw.trace, &raw.frame)?;
    let decoded = detect(&raw.trace, &detector)?;
    let skip = usize::from(cfg.frame.pilot);
    let errors = bit_errors(raw.frame.bits(), &decoded, skip);
    let isi = isi_metrics(&raw.trace, &raw.frame, &detector);
    Ok(ScenarioRun {
        kind: cfg.kind,
        seed: cfg.seed,
        bits: raw.frame.bits().to_vec(),
        symbol_duration_s: raw.frame.symbol_duration(),
        trace: raw.trace,
        population: raw.population,
        released: raw.released,
        pilot,
        detector,
        decoded,
        bit_errors: errors,
        isi,
    })
}

fn require_kind(cfg: &ScenarioConfig, kind: ScenarioKind) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::config("kind", format!("expected {kind:?}, got {:?}", cfg.kind)));
    }
    Ok(())
}

/// Media modulation in the closed-loop duct: reversible molecules written
/// by the TX zone and reset by an always-on EX zone.
pub fn run_pbs_media_modulation(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    require_kind(cfg, ScenarioKind::MediaModulation)?;
    if cfg.policy != SwitchPolicy::Reversible {
        return Err(Error::config("policy", "media modulation with an eraser needs reversible molecules"));
    }
    let res = cfg.resolve()?;
    if !res.ex.is_some_and(|ex| ex.enabled) {
        return Err(Error::config("device", "media modulation needs an enabled ex device"));
    }
    run_scenario(cfg, None)
}

/// Conventional point-release OOK in the same duct.
pub fn run_pbs_conventional(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    require_kind(cfg, ScenarioKind::Conventional)?;
    run_scenario(cfg, None)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestbedReport {
    /// Loop circulation time V / Q, s.
    pub loop_time_s: f64,
    pub run: ScenarioRun,
    pub echo: Option<EchoFit>,
}

/// Replays the closed-loop testbed experiment on a simulated trace.
pub fn run_testbed_replay(cfg: &ScenarioConfig) -> Result<TestbedReport> {
    require_kind(cfg, ScenarioKind::TestbedReplay)?;
    let tb = cfg
        .testbed
        .as_ref()
        .ok_or_else(|| Error::config("testbed", "missing [testbed] section"))?;
    let run = run_scenario(cfg, None)?;
    let frame = run.frame(cfg.frame.tx_on_time_s)?;
    let t_s = frame.symbol_duration();
    let echo = fit_echo(&run.trace, &frame, cfg.detector.signal, 0.5 * t_s, 2.0 * t_s, 0.05);
    Ok(TestbedReport { loop_time_s: tb.loop_time_s(), run, echo })
}
