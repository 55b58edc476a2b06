//! Scenario configuration: the complete description of one experiment.
//!
//! Files are TOML key/value documents whose keys carry SI units in their
//! names. Unknown keys are rejected. See `docs/formats.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::devices::{DeviceKind, PointSource, ReadoutResponse, Zone, ZoneDevice};
use crate::error::{Error, Result};
use crate::kinetics::{MoleculeState, SpontaneousKinetics, SwitchPolicy};
use crate::link::LinkModel;
use crate::trace::SignalKind;
use crate::transport::{check_dt, DuctGeometry, FlowField, Position, TransportParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Switchable molecules already in the loop, written by TX and reset by EX.
    MediaModulation,
    /// Fresh molecules released from a point source for every bit 1.
    Conventional,
    /// Media modulation on the closed-loop testbed geometry.
    TestbedReplay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    pub dt_s: f64,
    /// Simulated time before t = 0 with the transmitter idle.
    #[serde(default)]
    pub preroll_s: f64,
    pub rx_sample_interval_s: f64,
    #[serde(default)]
    pub policy: SwitchPolicy,
    #[serde(default = "default_initial_state")]
    pub initial_state: MoleculeState,
    /// Molecules initially in the loop.
    #[serde(default)]
    pub n_sys: u64,
    pub diffusion_m2_per_s: f64,
    pub duct: DuctSection,
    pub flow: FlowSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub testbed: Option<TestbedSection>,
    #[serde(default)]
    pub kinetics: KineticsSection,
    #[serde(default, rename = "device")]
    pub devices: Vec<DeviceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSection>,
    pub frame: FrameSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn default_initial_state() -> MoleculeState {
    MoleculeState::B
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuctSection {
    pub radius_m: f64,
    /// Omitted for a testbed, where it follows from the fluid volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_m: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowProfile {
    Laminar,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub profile: FlowProfile,
    /// Centerline speed for laminar flow, the plug speed for uniform flow.
    /// Omitted for a testbed, where it follows from the volume flux.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_m_per_s: Option<f64>,
}

/// Closed-loop testbed plumbing. The loop is modeled as an equivalent duct
/// of the tube radius holding the whole fluid volume, so one circulation at
/// the volumetric mean speed takes exactly `V / Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedSection {
    pub fluid_volume_m3: f64,
    pub volume_flux_m3_per_s: f64,
    /// Physical tube length; must not exceed the equivalent duct length.
    pub tube_length_m: f64,
}

impl TestbedSection {
    pub fn loop_time_s(&self) -> f64 {
        self.fluid_volume_m3 / self.volume_flux_m3_per_s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsSection {
    #[serde(default)]
    pub spontaneous_b_to_a_per_s: f64,
    #[serde(default)]
    pub spontaneous_a_to_b_per_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub kind: DeviceKind,
    pub z_start_m: f64,
    pub z_end_m: f64,
    #[serde(default)]
    pub power_density_w_per_m2: f64,
    /// Switching cross section of TX/EX light, m^2 W^-1 s^-1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_section_m2_per_w_s: Option<f64>,
    /// Readout cross section of the RX; omitted for an ideal counter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detect_cross_section_m2_per_w_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure_s: Option<f64>,
    /// Fixed intensity normalization; default is the pilot peak.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_count: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f64>,
    #[serde(default = "yes")]
    pub enabled: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub n_release: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub symbol_duration_s: f64,
    pub tx_on_time_s: f64,
    /// Explicit bit sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<Vec<u8>>,
    /// Length of an i.i.d. equiprobable sequence drawn from the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_bits: Option<usize>,
    /// Force the first bit to 1 and calibrate the detector on it.
    #[serde(default = "yes")]
    pub pilot: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    #[default]
    Pilot,
    Fixed,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default)]
    pub mode: DetectorMode,
    #[serde(default)]
    pub signal: SignalKind,
    /// Fixed mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Fixed mode only; defaults to the TX-to-RX transit at the mean speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_offset_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RxPowerClass {
    pub name: String,
    pub power_density_w_per_m2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub tx_power_densities_w_per_m2: Vec<f64>,
    pub n_sys: Vec<u64>,
    #[serde(default, rename = "rx_power_class", skip_serializing_if = "Vec::is_empty")]
    pub rx_power_classes: Vec<RxPowerClass>,
    pub trials: usize,
    pub bits_per_trial: usize,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::config(field, format!("must be finite and >= 0, got {v}")))
    }
}

/// Runtime objects built from a validated config.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub transport: TransportParams,
    pub kinetics: SpontaneousKinetics,
    pub tx: Option<ZoneDevice>,
    pub ex: Option<ZoneDevice>,
    pub rx: ZoneDevice,
    pub source: Option<PointSource>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config always serializes")
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let cfg = Self::from_toml_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<DuctGeometry> {
        let radius = positive("duct.radius_m", self.duct.radius_m)?;
        let length = match (&self.duct.length_m, &self.testbed) {
            (Some(l), _) => positive("duct.length_m", *l)?,
            (None, Some(tb)) => {
                positive("testbed.fluid_volume_m3", tb.fluid_volume_m3)? / (std::f64::consts::PI * radius * radius)
            }
            (None, None) => return Err(Error::config("duct.length_m", "required unless a [testbed] section is given")),
        };
        DuctGeometry::new(radius, length).map_err(|e| Error::config("duct", e.to_string()))
    }

    pub fn flow_field(&self) -> Result<FlowField> {
        let speed = match (&self.flow.speed_m_per_s, &self.testbed) {
            (Some(v), _) => non_negative("flow.speed_m_per_s", *v)?,
            (None, Some(tb)) => {
                let area = std::f64::consts::PI * self.duct.radius_m * self.duct.radius_m;
                let mean = positive("testbed.volume_flux_m3_per_s", tb.volume_flux_m3_per_s)? / area;
                match self.flow.profile {
                    FlowProfile::Laminar => 2.0 * mean,
                    FlowProfile::Uniform => mean,
                }
            }
            (None, None) => return Err(Error::config("flow.speed_m_per_s", "required unless a [testbed] section is given")),
        };
        Ok(match self.flow.profile {
            FlowProfile::Laminar => FlowField::Laminar { v_max: speed },
            FlowProfile::Uniform => FlowField::Uniform { v: speed },
        })
    }

    fn devices_of(&self, kind: DeviceKind) -> impl Iterator<Item = (usize, &DeviceSection)> {
        self.devices.iter().enumerate().filter(move |(_, d)| d.kind == kind)
    }

    fn build_device(&self, idx: usize, d: &DeviceSection, geom: &DuctGeometry) -> Result<ZoneDevice> {
        let field = |name: &str| format!("device[{idx}].{name}");
        let zone = Zone::new(d.z_start_m, d.z_end_m, geom).map_err(|e| match e {
            Error::Config { field: f, message } => Error::config(field(&f), message),
            other => other,
        })?;
        let power = non_negative(&field("power_density_w_per_m2"), d.power_density_w_per_m2)?;
        let mut dev = match d.kind {
            DeviceKind::Tx | DeviceKind::Ex => {
                let sigma = d
                    .cross_section_m2_per_w_s
                    .ok_or_else(|| Error::config(field("cross_section_m2_per_w_s"), "required for tx/ex devices"))?;
                let sigma = non_negative(&field("cross_section_m2_per_w_s"), sigma)?;
                if d.detect_cross_section_m2_per_w_s.is_some() || d.exposure_s.is_some() {
                    return Err(Error::config(field("detect_cross_section_m2_per_w_s"), "only valid for rx devices"));
                }
                if d.kind == DeviceKind::Tx {
                    ZoneDevice::tx(zone, power, sigma)?
                } else {
                    ZoneDevice::ex(zone, power, sigma)?
                }
            }
            DeviceKind::Rx => {
                if d.cross_section_m2_per_w_s.is_some() {
                    return Err(Error::config(field("cross_section_m2_per_w_s"), "rx devices use detect_cross_section_m2_per_w_s"));
                }
                let readout = match d.detect_cross_section_m2_per_w_s {
                    Some(sigma) => Some(ReadoutResponse {
                        cross_section: non_negative(&field("detect_cross_section_m2_per_w_s"), sigma)?,
                        exposure: positive(
                            &field("exposure_s"),
                            d.exposure_s
                                .ok_or_else(|| Error::config(field("exposure_s"), "required with a readout cross section"))?,
                        )?,
                    }),
                    None => None,
                };
                let mut rx = ZoneDevice::rx(zone, power, readout)?;
                if let Some(r) = d.reference_count {
                    rx.reference_count = positive(&field("reference_count"), r)?;
                }
                rx
            }
        };
        dev.wavelength_nm = d.wavelength_nm;
        dev.enabled = d.enabled;
        Ok(dev)
    }

    /// Validates the config and builds the runtime objects.
    pub fn resolve(&self) -> Result<Resolved> {
        let geom = self.geometry()?;
        let flow = self.flow_field()?;
        let diffusion = non_negative("diffusion_m2_per_s", self.diffusion_m2_per_s)?;
        let dt = positive("dt_s", self.dt_s)?;
        non_negative("preroll_s", self.preroll_s)?;
        let interval = positive("rx_sample_interval_s", self.rx_sample_interval_s)?;
        let ratio = interval / dt;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return Err(Error::config("rx_sample_interval_s", format!("must be a whole multiple of dt_s = {dt}, got {interval}")));
        }
        let kinetics = SpontaneousKinetics::new(
            non_negative("kinetics.spontaneous_b_to_a_per_s", self.kinetics.spontaneous_b_to_a_per_s)?,
            non_negative("kinetics.spontaneous_a_to_b_per_s", self.kinetics.spontaneous_a_to_b_per_s)?,
        )?;

        let single = |kind: DeviceKind, name: &str| -> Result<Option<ZoneDevice>> {
            let mut it = self.devices_of(kind);
            let first = it.next().map(|(i, d)| self.build_device(i, d, &geom)).transpose()?;
            if it.next().is_some() {
                return Err(Error::config("device", format!("at most one {name} device is supported")));
            }
            Ok(first)
        };
        let tx = single(DeviceKind::Tx, "tx")?;
        let ex = single(DeviceKind::Ex, "ex")?;
        let rx = single(DeviceKind::Rx, "rx")?.ok_or_else(|| Error::config("device", "an rx device is required"))?;

        let source = match &self.source {
            Some(s) => Some(PointSource::new(Position::new(s.x_m, s.y_m, s.z_m), s.n_release, &geom)?),
            None => None,
        };

        match self.kind {
            ScenarioKind::MediaModulation | ScenarioKind::TestbedReplay => {
                if tx.is_none() {
                    return Err(Error::config("device", "media modulation needs a tx device"));
                }
                if source.is_some() {
                    return Err(Error::config("source", "media modulation does not use a point source"));
                }
            }
            ScenarioKind::Conventional => {
                if source.is_none() {
                    return Err(Error::config("source", "the conventional system needs a [source] section"));
                }
                if tx.is_some() || ex.is_some() {
                    return Err(Error::config("device", "the conventional system has no tx or ex zone"));
                }
            }
        }
        if self.kind == ScenarioKind::TestbedReplay {
            let tb = self
                .testbed
                .as_ref()
                .ok_or_else(|| Error::config("testbed", "testbed replay needs a [testbed] section"))?;
            positive("testbed.tube_length_m", tb.tube_length_m)?;
            if tb.tube_length_m > geom.length() * (1.0 + 1e-9) {
                return Err(Error::config(
                    "testbed.tube_length_m",
                    format!("tube ({} m) is longer than the loop holding the fluid volume ({} m)", tb.tube_length_m, geom.length()),
                ));
            }
        }

        let zones: Vec<&ZoneDevice> = tx.iter().chain(ex.iter()).chain(std::iter::once(&rx)).collect();
        for (i, a) in zones.iter().enumerate() {
            for b in &zones[i + 1..] {
                if a.zone.overlaps(&b.zone) {
                    return Err(Error::config("device", format!("{:?} and {:?} zones overlap", a.kind, b.kind)));
                }
            }
        }
        let shortest = zones.iter().map(|d| d.zone.length()).fold(f64::INFINITY, f64::min);
        check_dt(dt, &flow, diffusion, shortest)?;

        let f = &self.frame;
        positive("frame.symbol_duration_s", f.symbol_duration_s)?;
        positive("frame.tx_on_time_s", f.tx_on_time_s)?;
        if f.tx_on_time_s > f.symbol_duration_s {
            return Err(Error::config("frame.tx_on_time_s", "exceeds the symbol duration"));
        }
        match (&f.bits, f.random_bits) {
            (Some(_), Some(_)) => return Err(Error::config("frame.bits", "give either bits or random_bits, not both")),
            (None, None) => return Err(Error::config("frame.bits", "one of bits or random_bits is required")),
            (Some(b), None) => {
                if b.iter().any(|x| *x > 1) {
                    return Err(Error::config("frame.bits", "bits must be 0 or 1"));
                }
                if f.pilot && b.first() != Some(&1) {
                    return Err(Error::config("frame.bits", "pilot calibration needs the first bit to be 1"));
                }
            }
            (None, Some(_)) => {}
        }
        if self.detector.mode == DetectorMode::Pilot && !f.pilot {
            return Err(Error::config("detector.mode", "pilot detection needs frame.pilot = true"));
        }
        if self.detector.mode == DetectorMode::Fixed {
            non_negative("detector.threshold", self.detector.threshold.ok_or_else(|| Error::config("detector.threshold", "required in fixed mode"))?)?;
            if let Some(o) = self.detector.sample_offset_s {
                non_negative("detector.sample_offset_s", o)?;
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.trials == 0 {
                return Err(Error::config("sweep.trials", "must be >= 1"));
            }
            if sw.bits_per_trial == 0 {
                return Err(Error::config("sweep.bits_per_trial", "must be >= 1"));
            }
            for p in &sw.tx_power_densities_w_per_m2 {
                non_negative("sweep.tx_power_densities_w_per_m2", *p)?;
            }
            for c in &sw.rx_power_classes {
                non_negative("sweep.rx_power_class.power_density_w_per_m2", c.power_density_w_per_m2)?;
            }
        }

        let transport = TransportParams::new(geom, flow, diffusion)?;
        Ok(Resolved { transport, kinetics, tx, ex, rx, source })
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Number of symbols a run transmits.
    pub fn n_bits(&self) -> usize {
        self.frame.bits.as_ref().map_or(self.frame.random_bits.unwrap_or(0), Vec::len)
    }

    /// Well-mixed link abstraction of this scenario.
    ///
    /// Zone fractions are zone length over loop length. The TX success
    /// probability uses the on-time as exposure, the eraser success uses the
    /// EX transit time at the mean flow speed.
    pub fn link_model(&self) -> Result<LinkModel> {
        let r = self.resolve()?;
        let l = r.transport.geom.length();
        let tx = r.tx.ok_or_else(|| Error::config("device", "link model needs a tx device"))?;
        let p_mod = tx.step_probability(self.frame.tx_on_time_s)?;
        let p_ex = match r.ex {
            Some(ex) => {
                let v = r.transport.flow.mean_speed();
                if v > 0.0 {
                    ex.step_probability(ex.zone.length() / v)?
                } else {
                    ex.step_probability(f64::INFINITY).unwrap_or(0.0)
                }
            }
            None => 0.0,
        };
        LinkModel::new(self.n_sys, tx.zone.length() / l, r.rx.zone.length() / l, p_mod, r.rx.detect_probability(), p_ex)
    }

    /// Transit time from the TX zone start to the RX zone start at the mean speed.
    pub fn tx_to_rx_delay(&self) -> Result<f64> {
        let r = self.resolve()?;
        let tx = r.tx.ok_or_else(|| Error::config("device", "no tx device"))?;
        let v = r.transport.flow.mean_speed();
        if v <= 0.0 {
            return Err(Error::config("flow.speed_m_per_s", "no flow, so no transit delay"));
        }
        Ok(tx.zone.offset_to(&r.rx.zone) / v)
    }

    pub fn rx_index(&self) -> Option<usize> {
        self.devices.iter().position(|d| d.kind == DeviceKind::Rx)
    }

    pub fn tx_index(&self) -> Option<usize> {
        self.devices.iter().position(|d| d.kind == DeviceKind::Tx)
    }
}
