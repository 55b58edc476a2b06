//! The time-stepping loop shared by every scenario.

use rand::Rng;

use super::config::{Resolved, ScenarioConfig, ScenarioKind};
use crate::devices::{ex_apply, point_release, rx_observe, tx_apply};
use crate::error::Result;
use crate::kinetics::{apply_spontaneous, MoleculeState};
use crate::link::OokFrame;
use crate::rng::{self, Domain};
use crate::trace::RxTrace;
use crate::transport::{init_uniform_with_state, step_particles, Particle};

/// Everything a single run produces before detection.
#[derive(Clone, Debug)]
pub struct RawRun {
    pub frame: OokFrame,
    pub trace: RxTrace,
    /// Particle count at each trace sample.
    pub population: Vec<usize>,
    /// Molecules injected by the point source.
    pub released: u64,
}

/// Called after the devices act and before transport, with the step index
/// (counting from the start of the pre-roll), the time and the particles.
pub type Observer<'a> = dyn FnMut(u64, f64, &[Particle]) + 'a;

pub struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    res: Resolved,
    seed: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self> {
        let res = cfg.resolve()?;
        Ok(Self { cfg, res, seed })
    }

    pub fn resolved(&self) -> &Resolved {
        &self.res
    }

    /// The transmitted bit sequence: explicit bits from the config, or an
    /// i.i.d. equiprobable sequence from the run seed. The pilot forces the
    /// first bit to 1.
    pub fn bits(&self) -> Vec<u8> {
        let f = &self.cfg.frame;
        let mut bits = match (&f.bits, f.random_bits) {
            (Some(b), _) => b.clone(),
            (None, n) => {
                let mut r = rng::stream(self.seed, Domain::Bits, 0);
                (0..n.unwrap_or(0)).map(|_| u8::from(r.random::<bool>())).collect()
            }
        };
        if f.pilot {
            if let Some(b) = bits.first_mut() {
                *b = 1;
            }
        }
        bits
    }

    pub fn run(&self, observer: Option<&mut Observer<'_>>) -> Result<RawRun> {
        self.run_bits(self.bits(), observer)
    }

    pub fn run_bits(&self, bits: Vec<u8>, mut observer: Option<&mut Observer<'_>>) -> Result<RawRun> {
        let cfg = self.cfg;
        let res = &self.res;
        let frame = OokFrame::new(bits, cfg.frame.symbol_duration_s, cfg.frame.tx_on_time_s)?;
        let dt = cfg.dt_s;
        let preroll_steps = (cfg.preroll_s / dt).round() as u64;
        let main_steps = (frame.duration() / dt).round() as u64;
        let sample_every = (cfg.rx_sample_interval_s / dt).round() as u64;
        let geom = res.transport.geom;

        let mut particles = match cfg.kind {
            ScenarioKind::Conventional if cfg.n_sys == 0 => Vec::new(),
            _ => {
                let mut init = rng::stream(self.seed, Domain::Init, 0);
                init_uniform_with_state(cfg.n_sys as usize, &geom, cfg.initial_state, &mut init)
            }
        };
        let mut dev_rng = rng::stream(self.seed, Domain::Devices, 0);
        let transport_seed = rng::derive_seed(self.seed, &[Domain::Transport as u64]);

        let mut samples = Vec::with_capacity((main_steps / sample_every + 1) as usize);
        let mut population = Vec::with_capacity(samples.capacity());
        let mut released = 0u64;
        let mut current_symbol = None;

        for i in 0..preroll_steps + main_steps {
            let main = i >= preroll_steps;
            let j = i.saturating_sub(preroll_steps);
            let t = if main { j as f64 * dt } else { -((preroll_steps - i) as f64) * dt };

            if main {
                let k = frame.symbol_at(t);
                if k != current_symbol {
                    current_symbol = k;
                    if let (Some(k), Some(src)) = (k, &res.source) {
                        if frame.bits()[k] == 1 {
                            released += point_release(&mut particles, src, MoleculeState::A) as u64;
                        }
                    }
                }
            }
            if let Some(ex) = &res.ex {
                ex_apply(&mut particles, ex, dt, cfg.policy, &mut dev_rng)?;
            }
            if let Some(tx) = &res.tx {
                if main && frame.tx_active(t) {
                    tx_apply(&mut particles, tx, dt, cfg.policy, &mut dev_rng)?;
                }
            }
            if !res.kinetics.is_inert() {
                apply_spontaneous(particles.iter_mut().map(|p| &mut p.state), dt, &res.kinetics, cfg.policy, &mut dev_rng)?;
            }
            if main && j % sample_every == 0 {
                let t_nominal = (j / sample_every) as f64 * cfg.rx_sample_interval_s;
                samples.push(rx_observe(&particles, &res.rx, t_nominal, &mut dev_rng)?);
                population.push(particles.len());
            }
            if let Some(obs) = observer.as_mut() {
                obs(i, t, &particles);
            }
            step_particles(&mut particles, dt, &res.transport, rng::derive_seed(transport_seed, &[i]));
        }

        let mut trace = RxTrace::new(samples);
        if cfg.frame.pilot && frame.bits().first() == Some(&1) && cfg.devices[cfg.rx_index().unwrap_or(0)].reference_count.is_none() {
            let reference = trace
                .samples
                .iter()
                .filter(|s| s.t < frame.symbol_duration())
                .map(|s| s.detected_count)
                .max()
                .unwrap_or(0);
            if reference > 0 {
                trace.renormalize(reference as f64);
            }
        }
        Ok(RawRun { frame, trace, population, released })
    }
}
