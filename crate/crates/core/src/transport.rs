//! Brownian motion plus axial flow in a closed-loop cylindrical duct.
//!
//! The duct axis is `z`; the loop is periodic in `z` with period `L`, and the
//! circular wall at radius `R` reflects particles specularly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::MoleculeState;
use crate::par;
use crate::rng::{self, Domain, SimRng};

/// Particles per transport work item. Part of the reproducibility contract:
/// changing it changes which random stream drives which particle.
pub const TRANSPORT_CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DuctGeometry {
    radius: f64,
    length: f64,
}

impl DuctGeometry {
    pub fn new(radius: f64, length: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::domain(format!("duct radius must be > 0, got {radius}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::domain(format!("loop length must be > 0, got {length}")));
        }
        Ok(Self { radius, length })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cross_section_area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    pub fn volume(&self) -> f64 {
        self.cross_section_area() * self.length
    }

    pub fn contains(&self, pos: &Position) -> bool {
        pos.radial_sq() <= self.radius * self.radius * (1.0 + 1e-12) && (0.0..self.length).contains(&pos.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum FlowField {
    /// Poiseuille profile `v_max * (1 - (r/R)^2)`.
    Laminar { v_max: f64 },
    Uniform { v: f64 },
}

impl FlowField {
    pub fn max_speed(&self) -> f64 {
        match *self {
            FlowField::Laminar { v_max } => v_max.abs(),
            FlowField::Uniform { v } => v.abs(),
        }
    }

    /// Cross-section average of the axial speed.
    pub fn mean_speed(&self) -> f64 {
        match *self {
            FlowField::Laminar { v_max } => 0.5 * v_max,
            FlowField::Uniform { v } => v,
        }
    }

    #[inline]
    fn speed_at(&self, r_sq_over_r_sq: f64) -> f64 {
        match *self {
            FlowField::Laminar { v_max } => v_max * (1.0 - r_sq_over_r_sq),
            FlowField::Uniform { v } => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn radial_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub pos: Position,
    pub state: MoleculeState,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimClock {
    dt: f64,
    step: u64,
    origin: f64,
}

impl SimClock {
    /// A clock whose step 0 sits at time `origin` (negative for a pre-roll).
    pub fn new(dt: f64, origin: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::domain(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self { dt, step: 0, origin })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn t(&self) -> f64 {
        self.origin + self.step as f64 * self.dt
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }
}

/// Axial velocity at `pos`.
pub fn flow_velocity(geom: &DuctGeometry, flow: &FlowField, pos: &Position) -> Result<f64> {
    let r2 = pos.radial_sq();
    let big_r2 = geom.radius * geom.radius;
    if r2 > big_r2 * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "position at r = {} lies outside duct radius {}",
            r2.sqrt(),
            geom.radius
        )));
    }
    Ok(flow.speed_at((r2 / big_r2).min(1.0)))
}

/// Largest timestep that keeps both the advective and the 3-sigma diffusive
/// displacement within a tenth of the shortest device zone.
pub fn max_stable_dt(flow: &FlowField, diffusion: f64, shortest_zone: f64) -> f64 {
    let limit = shortest_zone / 10.0;
    let advective = if flow.max_speed() > 0.0 { limit / flow.max_speed() } else { f64::INFINITY };
    // 3 * sqrt(2 D dt) <= limit
    let diffusive = if diffusion > 0.0 { limit * limit / (18.0 * diffusion) } else { f64::INFINITY };
    advective.min(diffusive)
}

/// Checks the zone-tunneling bound for `dt`.
pub fn check_dt(dt: f64, flow: &FlowField, diffusion: f64, shortest_zone: f64) -> Result<()> {
    let step = (flow.max_speed() * dt).max(3.0 * (2.0 * diffusion * dt).sqrt());
    let limit = shortest_zone / 10.0;
    if step > limit * (1.0 + 1e-9) {
        return Err(Error::config(
            "dt_s",
            format!(
                "dt = {dt} s moves particles up to {step:.3e} m per step, above one tenth of the \
                 shortest zone ({limit:.3e} m); max(v_max*dt, 3*sqrt(2*D*dt)) must not exceed it \
                 (largest allowed dt is {:.4e} s)",
                max_stable_dt(flow, diffusion, shortest_zone)
            ),
        ));
    }
    Ok(())
}

/// `n` particles uniformly distributed over the duct volume, all in state B.
pub fn init_uniform<R: Rng + ?Sized>(n: usize, geom: &DuctGeometry, rng: &mut R) -> Vec<Particle> {
    init_uniform_with_state(n, geom, MoleculeState::B, rng)
}

pub fn init_uniform_with_state<R: Rng + ?Sized>(
    n: usize,
    geom: &DuctGeometry,
    state: MoleculeState,
    rng: &mut R,
) -> Vec<Particle> {
    (0..n as u64)
        .map(|id| {
            let z = wrap(rng.random::<f64>() * geom.length, geom.length);
            let r = geom.radius * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            Particle {
                id,
                pos: Position::new(r * theta.cos(), r * theta.sin(), z),
                state,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct TransportParams {
    pub geom: DuctGeometry,
    pub flow: FlowField,
    pub diffusion: f64,
}

impl TransportParams {
    pub fn new(geom: DuctGeometry, flow: FlowField, diffusion: f64) -> Result<Self> {
        if !(diffusion.is_finite() && diffusion >= 0.0) {
            return Err(Error::domain(format!("diffusion coefficient must be >= 0, got {diffusion}")));
        }
        Ok(Self { geom, flow, diffusion })
    }
}

/// One Euler-Maruyama step for every particle.
///
/// `step_key` addresses the random streams of this step; chunk `i` of
/// [`TRANSPORT_CHUNK`] particles draws from stream `i` under it, so the
/// result is the same with or without parallelism.
pub fn step_particles(particles: &mut [Particle], dt: f64, params: &TransportParams, step_key: u64) {
    par::for_each_chunk_mut(particles, TRANSPORT_CHUNK, |i, chunk| {
        step_chunk(chunk, dt, params, step_key, i)
    });
}

/// Sequential reference for [`step_particles`]; bit-identical output.
pub fn step_particles_seq(particles: &mut [Particle], dt: f64, params: &TransportParams, step_key: u64) {
    par::for_each_chunk_mut_seq(particles, TRANSPORT_CHUNK, |i, chunk| {
        step_chunk(chunk, dt, params, step_key, i)
    });
}

fn step_chunk(chunk: &mut [Particle], dt: f64, params: &TransportParams, step_key: u64, index: usize) {
    let mut rng = rng::stream(step_key, Domain::Transport, index as u64);
    let sigma = (2.0 * params.diffusion * dt).sqrt();
    for p in chunk {
        step_one(p, dt, sigma, params, &mut rng);
    }
}

const MAX_RESAMPLES: usize = 16;

#[inline]
fn step_one(p: &mut Particle, dt: f64, sigma: f64, params: &TransportParams, rng: &mut SimRng) {
    let r_wall = params.geom.radius;
    let r_wall_sq = r_wall * r_wall;
    let Position { x, y, z } = p.pos;
    let drift = params.flow.speed_at((p.pos.radial_sq() / r_wall_sq).min(1.0)) * dt;

    if sigma == 0.0 {
        p.pos.z = wrap(z + drift, params.geom.length);
        return;
    }

    let mut moved = None;
    for _ in 0..MAX_RESAMPLES {
        let dx: f64 = rng.sample(StandardNormal);
        let dy: f64 = rng.sample(StandardNormal);
        let (mut nx, mut ny) = (x + sigma * dx, y + sigma * dy);
        let r2 = nx * nx + ny * ny;
        if r2 > r_wall_sq {
            // mirror the radial overshoot back inside the wall
            let r = r2.sqrt();
            let scale = (2.0 * r_wall - r) / r;
            nx *= scale;
            ny *= scale;
            if nx * nx + ny * ny > r_wall_sq {
                continue;
            }
        }
        moved = Some((nx, ny));
        break;
    }
    let dz: f64 = rng.sample(StandardNormal);
    if let Some((nx, ny)) = moved {
        p.pos.x = nx;
        p.pos.y = ny;
    }
    p.pos.z = wrap(z + drift + sigma * dz, params.geom.length);
}

/// Maps `z` into `[0, length)`.
#[inline]
pub fn wrap(z: f64, length: f64) -> f64 {
    let w = z.rem_euclid(length);
    if w >= length {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn geom() -> DuctGeometry {
        DuctGeometry::new(2.5e-3, 1.0).unwrap()
    }

    #[test]
    fn geometry_validates_and_derives_volume() {
        assert!(DuctGeometry::new(0.0, 1.0).is_err());
        assert!(DuctGeometry::new(1.0, -1.0).is_err());
        let g = DuctGeometry::new(2.0, 3.0).unwrap();
        assert!((g.volume() - std::f64::consts::PI * 12.0).abs() < 1e-12);
    }

    #[test]
    fn laminar_profile_values() {
        let g = geom();
        let flow = FlowField::Laminar { v_max: 0.02 };
        let r = g.radius();
        assert_eq!(flow_velocity(&g, &flow, &Position::new(0.0, 0.0, 0.5)).unwrap(), 0.02);
        assert_eq!(flow_velocity(&g, &flow, &Position::new(r, 0.0, 0.5)).unwrap(), 0.0);
        let half = flow_velocity(&g, &flow, &Position::new(r / 2f64.sqrt(), 0.0, 0.5)).unwrap();
        assert!((half - 0.01).abs() < 1e-15);
        assert!(flow_velocity(&g, &flow, &Position::new(2.0 * r, 0.0, 0.5)).is_err());
        let uni = FlowField::Uniform { v: 0.3 };
        assert_eq!(flow_velocity(&g, &uni, &Position::new(0.0, r, 0.1)).unwrap(), 0.3);
    }

    #[test]
    fn pure_advection_is_deterministic() {
        let g = geom();
        let params = TransportParams::new(g, FlowField::Uniform { v: 0.02 }, 0.0).unwrap();
        let mut rng = stream(1, Domain::Init, 0);
        let mut ps = init_uniform(100, &g, &mut rng);
        let before = ps.clone();
        step_particles(&mut ps, 0.5, &params, 9);
        for (a, b) in before.iter().zip(&ps) {
            assert_eq!((a.pos.x, a.pos.y), (b.pos.x, b.pos.y));
            assert!((wrap(a.pos.z + 0.01, 1.0) - b.pos.z).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_wrap_at_loop_end() {
        let g = geom();
        let params = TransportParams::new(g, FlowField::Uniform { v: 0.02 }, 0.0).unwrap();
        let mut ps = vec![Particle {
            id: 0,
            pos: Position::new(0.0, 0.0, 1.0 - 0.001),
            state: MoleculeState::B,
        }];
        step_particles(&mut ps, 0.1, &params, 0);
        assert!((ps[0].pos.z - 0.001).abs() < 1e-12);
    }

    #[test]
    fn brownian_step_has_expected_spread() {
        let g = DuctGeometry::new(1.0, 10.0).unwrap();
        let params = TransportParams::new(g, FlowField::Uniform { v: 0.0 }, 1e-10).unwrap();
        let mut ps: Vec<Particle> = (0..10_000)
            .map(|id| Particle { id, pos: Position::new(0.0, 0.0, 5.0), state: MoleculeState::B })
            .collect();
        step_particles(&mut ps, 0.01, &params, 5);
        let expected = (2.0f64 * 1e-10 * 0.01).sqrt();
        for axis in 0..3 {
            let d: Vec<f64> = ps
                .iter()
                .map(|p| [p.pos.x, p.pos.y, p.pos.z - 5.0][axis])
                .collect();
            let sd = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
            assert!((sd / expected - 1.0).abs() < 0.05, "axis {axis}: {sd} vs {expected}");
        }
    }

    #[test]
    fn init_uniform_moments() {
        let g = geom();
        let n = 10_000;
        let mut rng = stream(4, Domain::Init, 0);
        let ps = init_uniform(n, &g, &mut rng);
        assert!(init_uniform(0, &g, &mut rng).is_empty());
        assert!(ps.iter().all(|p| p.state == MoleculeState::B && g.contains(&p.pos)));
        let nf = n as f64;
        let mean = |f: &dyn Fn(&Particle) -> f64| ps.iter().map(f).sum::<f64>() / nf;
        let (l, r) = (g.length(), g.radius());
        assert!((mean(&|p| p.pos.z) - l / 2.0).abs() <= 3.0 * (l / 12f64.sqrt()) / nf.sqrt());
        assert!(mean(&|p| p.pos.x).abs() <= 3.0 * (r / 2.0) / nf.sqrt());
        assert!(mean(&|p| p.pos.y).abs() <= 3.0 * (r / 2.0) / nf.sqrt());
        let inner = ps.iter().filter(|p| p.pos.radial_sq() < r * r / 2.0).count() as f64 / nf;
        assert!((inner - 0.5).abs() <= 0.015, "inner fraction {inner}");
    }

    #[test]
    fn dt_bound_is_enforced() {
        let flow = FlowField::Laminar { v_max: 0.02 };
        assert!(check_dt(0.05, &flow, 1e-10, 0.01).is_ok());
        let err = check_dt(0.5, &flow, 1e-10, 0.01).unwrap_err();
        assert!(err.to_string().contains("dt_s"));
        let dt = max_stable_dt(&flow, 1e-10, 0.01);
        assert!(check_dt(dt, &flow, 1e-10, 0.01).is_ok());
        assert!(check_dt(dt * 1.01, &flow, 1e-10, 0.01).is_err());
    }

    #[test]
    fn parallel_and_sequential_steps_agree() {
        let g = geom();
        let params = TransportParams::new(g, FlowField::Laminar { v_max: 0.02 }, 1e-9).unwrap();
        let mut rng = stream(2, Domain::Init, 0);
        let mut a = init_uniform(3 * TRANSPORT_CHUNK + 17, &g, &mut rng);
        let mut b = a.clone();
        for step in 0..5 {
            step_particles(&mut a, 0.05, &params, step);
            step_particles_seq(&mut b, 0.05, &params, step);
        }
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn particles_stay_inside_and_are_conserved(seed in 0u64..10_000, d_exp in -12.0..-6.0f64, n in 0usize..300) {
            let g = DuctGeometry::new(1e-4, 0.01).unwrap();
            let params = TransportParams::new(g, FlowField::Laminar { v_max: 0.05 }, 10f64.powf(d_exp)).unwrap();
            let mut rng = stream(seed, Domain::Init, 0);
            let mut ps = init_uniform(n, &g, &mut rng);
            for step in 0..20 {
                step_particles(&mut ps, 0.01, &params, seed ^ step);
                prop_assert_eq!(ps.len(), n);
                for p in &ps {
                    prop_assert!(g.contains(&p.pos), "{:?}", p.pos);
                }
            }
        }
    }
}
