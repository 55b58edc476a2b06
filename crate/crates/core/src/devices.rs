//! Zone devices acting on axial segments of the duct, and the point-release
//! transmitter of a conventional system.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{apply_stimulus, saturating_probability, switch_probability, MoleculeState, StimulusResponse, SwitchPolicy, Transition};
use crate::transport::{DuctGeometry, Particle, Position};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Tx,
    Ex,
    Rx,
}

/// Axial interval `[start, end)`. When `end < start` the zone wraps through
/// `z = 0` of the loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Zone {
    start: f64,
    end: f64,
    loop_length: f64,
}

impl Zone {
    pub fn new(start: f64, end: f64, geom: &DuctGeometry) -> Result<Self> {
        let l = geom.length();
        for (name, v) in [("z_start_m", start), ("z_end_m", end)] {
            if !(v.is_finite() && (0.0..l).contains(&v)) {
                return Err(Error::config(name, format!("{v} lies outside the loop [0, {l})")));
            }
        }
        if start == end {
            return Err(Error::config("z_end_m", "zone has zero length"));
        }
        Ok(Self { start, end, loop_length: l })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn wraps(&self) -> bool {
        self.end < self.start
    }

    pub fn length(&self) -> f64 {
        if self.wraps() {
            self.loop_length - self.start + self.end
        } else {
            self.end - self.start
        }
    }

    #[inline]
    pub fn contains(&self, z: f64) -> bool {
        if self.wraps() {
            z >= self.start || z < self.end
        } else {
            z >= self.start && z < self.end
        }
    }

    /// Axial distance from the start of `self` downstream to the start of `other`.
    pub fn offset_to(&self, other: &Zone) -> f64 {
        (other.start - self.start).rem_euclid(self.loop_length)
    }

    pub fn overlaps(&self, other: &Zone) -> bool {
        self.contains(other.start) || other.contains(self.start)
    }
}

/// Per-molecule readout success at the receiver, same saturating law as switching.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutResponse {
    /// m^2 W^-1 s^-1
    pub cross_section: f64,
    /// Integration time of one readout, s.
    pub exposure: f64,
}

impl ReadoutResponse {
    pub fn detect_probability(&self, power_density: f64) -> f64 {
        saturating_probability(self.cross_section * power_density * self.exposure)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneDevice {
    pub kind: DeviceKind,
    pub zone: Zone,
    /// W/m^2
    pub power_density: f64,
    /// Switching response for TX/EX; unused by RX.
    pub response: Option<StimulusResponse>,
    /// Readout response for RX; `None` is an ideal counter.
    pub readout: Option<ReadoutResponse>,
    /// Detected count that maps to unit intensity.
    pub reference_count: f64,
    pub wavelength_nm: Option<f64>,
    pub enabled: bool,
}

impl ZoneDevice {
    /// A transmitter writing B -> A.
    pub fn tx(zone: Zone, power_density: f64, cross_section: f64) -> Result<Self> {
        Self::writer(DeviceKind::Tx, zone, power_density, StimulusResponse::new(cross_section, Transition::BToA)?)
    }

    /// An eraser resetting A -> B.
    pub fn ex(zone: Zone, power_density: f64, cross_section: f64) -> Result<Self> {
        Self::writer(DeviceKind::Ex, zone, power_density, StimulusResponse::new(cross_section, Transition::AToB)?)
    }

    fn writer(kind: DeviceKind, zone: Zone, power_density: f64, response: StimulusResponse) -> Result<Self> {
        check_power(power_density)?;
        Ok(Self {
            kind,
            zone,
            power_density,
            response: Some(response),
            readout: None,
            reference_count: 1.0,
            wavelength_nm: None,
            enabled: true,
        })
    }

    /// A transparent receiver.
    pub fn rx(zone: Zone, power_density: f64, readout: Option<ReadoutResponse>) -> Result<Self> {
        check_power(power_density)?;
        Ok(Self {
            kind: DeviceKind::Rx,
            zone,
            power_density,
            response: None,
            readout,
            reference_count: 1.0,
            wavelength_nm: None,
            enabled: true,
        })
    }

    /// Switching probability for one molecule exposed for `dt`.
    pub fn step_probability(&self, dt: f64) -> Result<f64> {
        match (&self.response, self.enabled) {
            (Some(r), true) => switch_probability(self.power_density, dt, r),
            _ => Ok(0.0),
        }
    }

    /// Readout success probability; 1 for an ideal counter.
    pub fn detect_probability(&self) -> f64 {
        self.readout.map_or(1.0, |r| r.detect_probability(self.power_density))
    }
}

fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::config("power_density_w_per_m2", format!("must be finite and >= 0, got {p}")));
    }
    Ok(())
}

/// Indices of particles whose axial coordinate lies in the device zone.
pub fn zone_members(particles: &[Particle], device: &ZoneDevice) -> Vec<usize> {
    particles
        .iter()
        .enumerate()
        .filter(|(_, p)| device.zone.contains(p.pos.z))
        .map(|(i, _)| i)
        .collect()
}

fn irradiate<R: Rng + ?Sized>(
    particles: &mut [Particle],
    device: &ZoneDevice,
    expected: DeviceKind,
    dt: f64,
    policy: SwitchPolicy,
    rng: &mut R,
) -> Result<usize> {
    if device.kind != expected {
        return Err(Error::domain(format!("expected a {expected:?} device, got {:?}", device.kind)));
    }
    let Some(response) = device.response else {
        return Err(Error::domain("writer device without a stimulus response"));
    };
    let p = device.step_probability(dt)?;
    let zone = device.zone;
    let states = particles
        .iter_mut()
        .filter(|p| zone.contains(p.pos.z))
        .map(|p| &mut p.state);
    Ok(apply_stimulus(states, response.direction(), p, policy, rng))
}

/// Writes B -> A inside the TX zone for one step of length `dt`.
pub fn tx_apply<R: Rng + ?Sized>(particles: &mut [Particle], device: &ZoneDevice, dt: f64, policy: SwitchPolicy, rng: &mut R) -> Result<usize> {
    irradiate(particles, device, DeviceKind::Tx, dt, policy, rng)
}

/// Erases A -> B inside the EX zone for one step of length `dt`.
pub fn ex_apply<R: Rng + ?Sized>(particles: &mut [Particle], device: &ZoneDevice, dt: f64, policy: SwitchPolicy, rng: &mut R) -> Result<usize> {
    irradiate(particles, device, DeviceKind::Ex, dt, policy, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RxSample {
    pub t: f64,
    pub raw_count: u64,
    pub detected_count: u64,
    pub intensity: f64,
}

/// Counts A-state molecules in the RX zone and thins them by the readout
/// probability. Never touches particle state.
pub fn rx_observe<R: Rng + ?Sized>(particles: &[Particle], device: &ZoneDevice, t: f64, rng: &mut R) -> Result<RxSample> {
    if device.kind != DeviceKind::Rx {
        return Err(Error::domain(format!("expected an Rx device, got {:?}", device.kind)));
    }
    let raw = particles
        .iter()
        .filter(|p| p.state.is_observable() && device.zone.contains(p.pos.z))
        .count() as u64;
    let p_det = device.detect_probability();
    let detected = if p_det >= 1.0 || raw == 0 {
        raw
    } else {
        Binomial::new(raw, p_det)
            .map_err(|e| Error::domain(format!("readout probability {p_det}: {e}")))?
            .sample(rng)
    };
    let intensity = if device.reference_count > 0.0 {
        detected as f64 / device.reference_count
    } else {
        0.0
    };
    Ok(RxSample {
        t,
        raw_count: raw,
        detected_count: detected,
        intensity,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSource {
    pub position: Position,
    pub n_release: u64,
}

impl PointSource {
    pub fn new(position: Position, n_release: u64, geom: &DuctGeometry) -> Result<Self> {
        if !geom.contains(&position) {
            return Err(Error::config("source", format!("release point {position:?} lies outside the duct")));
        }
        Ok(Self { position, n_release })
    }
}

/// Appends `n_release` new particles at the source. Ids continue after the
/// current largest id.
pub fn point_release(particles: &mut Vec<Particle>, source: &PointSource, state: MoleculeState) -> usize {
    let next = particles.iter().map(|p| p.id + 1).max().unwrap_or(0);
    particles.extend((0..source.n_release).map(|k| Particle {
        id: next + k,
        pos: source.position,
        state,
    }));
    source.n_release as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn geom() -> DuctGeometry {
        DuctGeometry::new(1e-3, 1.0).unwrap()
    }

    fn at(id: u64, z: f64, state: MoleculeState) -> Particle {
        Particle { id, pos: Position::new(0.0, 0.0, z), state }
    }

    #[test]
    fn zone_membership_with_wrap() {
        let g = geom();
        let dev = ZoneDevice::rx(Zone::new(0.1, 0.2, &g).unwrap(), 0.0, None).unwrap();
        let ps = vec![at(0, 0.15, MoleculeState::A), at(1, 0.25, MoleculeState::A), at(2, 0.1, MoleculeState::B)];
        assert_eq!(zone_members(&ps, &dev), vec![0, 2]);
        assert!(zone_members(&[], &dev).is_empty());

        let wrapped = ZoneDevice::rx(Zone::new(0.95, 0.05, &g).unwrap(), 0.0, None).unwrap();
        let ps = vec![at(0, 0.99, MoleculeState::A), at(1, 0.5, MoleculeState::A), at(2, 0.01, MoleculeState::A)];
        assert_eq!(zone_members(&ps, &wrapped), vec![0, 2]);
        assert!((wrapped.zone.length() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zone_rejects_out_of_loop_bounds() {
        let g = geom();
        assert!(Zone::new(-0.1, 0.2, &g).is_err());
        assert!(Zone::new(0.1, 1.0, &g).is_err());
        assert!(Zone::new(0.3, 0.3, &g).is_err());
    }

    fn mixed_zone(n_b: usize, n_a: usize) -> Vec<Particle> {
        let mut ps: Vec<Particle> = (0..n_b).map(|i| at(i as u64, 0.15, MoleculeState::B)).collect();
        ps.extend((0..n_a).map(|i| at((n_b + i) as u64, 0.15, MoleculeState::A)));
        // outside the zone
        ps.push(at(1000, 0.5, MoleculeState::B));
        ps.push(at(1001, 0.5, MoleculeState::A));
        ps
    }

    #[test]
    fn tx_with_certain_switch() {
        let g = geom();
        let tx = ZoneDevice::tx(Zone::new(0.1, 0.2, &g).unwrap(), 1e6, 1e6).unwrap();
        let mut ps = mixed_zone(50, 20);
        let mut rng = stream(0, Domain::Devices, 0);
        let n = tx_apply(&mut ps, &tx, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap();
        assert_eq!(n, 50);
        let in_zone_a = ps.iter().filter(|p| tx.zone.contains(p.pos.z) && p.state == MoleculeState::A).count();
        assert_eq!(in_zone_a, 70);
        // locality
        assert_eq!(ps[ps.len() - 2].state, MoleculeState::B);
    }

    #[test]
    fn tx_at_zero_power_switches_nothing() {
        let g = geom();
        let tx = ZoneDevice::tx(Zone::new(0.1, 0.2, &g).unwrap(), 0.0, 1.0).unwrap();
        let mut ps = mixed_zone(50, 0);
        let mut rng = stream(0, Domain::Devices, 0);
        assert_eq!(tx_apply(&mut ps, &tx, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap(), 0);
    }

    #[test]
    fn writers_reject_wrong_kind() {
        let g = geom();
        let tx = ZoneDevice::tx(Zone::new(0.1, 0.2, &g).unwrap(), 1.0, 1.0).unwrap();
        let mut rng = stream(0, Domain::Devices, 0);
        assert!(ex_apply(&mut mixed_zone(1, 1), &tx, 1.0, SwitchPolicy::Reversible, &mut rng).is_err());
        assert!(rx_observe(&mixed_zone(1, 1), &tx, 0.0, &mut rng).is_err());
    }

    #[test]
    fn ex_erases_and_is_idempotent_at_certainty() {
        let g = geom();
        let ex = ZoneDevice::ex(Zone::new(0.1, 0.2, &g).unwrap(), 1e6, 1e6).unwrap();
        let mut ps = mixed_zone(10, 30);
        let mut rng = stream(0, Domain::Devices, 0);
        assert_eq!(ex_apply(&mut ps, &ex, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap(), 30);
        let snapshot = ps.clone();
        assert_eq!(ex_apply(&mut ps, &ex, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap(), 0);
        assert_eq!(ps, snapshot);
        // outside particle keeps its A state
        assert_eq!(ps[ps.len() - 1].state, MoleculeState::A);
    }

    #[test]
    fn disabled_ex_does_nothing() {
        let g = geom();
        let mut ex = ZoneDevice::ex(Zone::new(0.1, 0.2, &g).unwrap(), 1e6, 1e6).unwrap();
        ex.enabled = false;
        let mut ps = mixed_zone(0, 30);
        let mut rng = stream(0, Domain::Devices, 0);
        assert_eq!(ex_apply(&mut ps, &ex, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap(), 0);
    }

    #[test]
    fn half_probability_writers_are_binomial() {
        let g = geom();
        // sigma * P * dt = ln 2
        let tx = ZoneDevice::tx(Zone::new(0.1, 0.2, &g).unwrap(), std::f64::consts::LN_2, 1.0).unwrap();
        let ex = ZoneDevice::ex(Zone::new(0.1, 0.2, &g).unwrap(), std::f64::consts::LN_2, 1.0).unwrap();
        let n = 2000usize;
        let band = 3.0 * (n as f64 * 0.25).sqrt();
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = stream(seed, Domain::Devices, 0);
            let mut ps = mixed_zone(n, 0);
            let w = tx_apply(&mut ps, &tx, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap();
            let mut ps = mixed_zone(0, n);
            let e = ex_apply(&mut ps, &ex, 1.0, SwitchPolicy::Reversible, &mut rng).unwrap();
            if (w as f64 - 1000.0).abs() <= band && (e as f64 - 1000.0).abs() <= band {
                ok += 1;
            }
        }
        assert!(ok >= 97, "{ok}");
    }

    #[test]
    fn ideal_receiver_counts_exactly_and_is_transparent() {
        let g = geom();
        let rx = ZoneDevice::rx(Zone::new(0.1, 0.2, &g).unwrap(), 0.0, None).unwrap();
        let ps = mixed_zone(7, 13);
        let before = ps.clone();
        let mut rng = stream(0, Domain::Devices, 0);
        let s = rx_observe(&ps, &rx, 2.0, &mut rng).unwrap();
        assert_eq!((s.raw_count, s.detected_count), (13, 13));
        assert_eq!(ps, before);
        let empty = rx_observe(&mixed_zone(5, 0), &rx, 0.0, &mut rng).unwrap();
        assert_eq!((empty.raw_count, empty.detected_count, empty.intensity), (0, 0, 0.0));
    }

    #[test]
    fn lossy_readout_thins_binomially() {
        let g = geom();
        // p_det = 1 - exp(-ln 10) = 0.9
        let readout = ReadoutResponse { cross_section: 1.0, exposure: 1.0 };
        let mut rx = ZoneDevice::rx(Zone::new(0.1, 0.2, &g).unwrap(), std::f64::consts::LN_10, Some(readout)).unwrap();
        rx.reference_count = 1000.0;
        assert!((rx.detect_probability() - 0.9).abs() < 1e-12);
        let ps = mixed_zone(0, 1000);
        let mut inside = 0;
        for seed in 0..200 {
            let mut rng = stream(seed, Domain::Devices, 0);
            let s = rx_observe(&ps, &rx, 0.0, &mut rng).unwrap();
            assert!(s.detected_count <= s.raw_count);
            assert!((s.intensity - s.detected_count as f64 / 1000.0).abs() < 1e-15);
            if (872..=928).contains(&s.detected_count) {
                inside += 1;
            }
        }
        assert!(inside >= 198, "{inside}");
    }

    #[test]
    fn point_release_appends_fresh_particles() {
        let g = geom();
        let src = PointSource::new(Position::new(0.0, 0.0, 0.3), 100, &g).unwrap();
        let mut ps = mixed_zone(3, 0);
        let before = ps.clone();
        point_release(&mut ps, &src, MoleculeState::A);
        assert_eq!(ps.len(), before.len() + 100);
        assert_eq!(&ps[..before.len()], &before[..]);
        point_release(&mut ps, &src, MoleculeState::A);
        assert_eq!(ps.len(), before.len() + 200);
        let mut ids: Vec<u64> = ps.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), ps.len());

        let none = PointSource::new(Position::new(0.0, 0.0, 0.3), 0, &g).unwrap();
        let n = ps.len();
        point_release(&mut ps, &none, MoleculeState::A);
        assert_eq!(ps.len(), n);
        assert!(PointSource::new(Position::new(0.01, 0.0, 0.3), 1, &g).is_err());
    }
}
