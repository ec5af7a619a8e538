//! Agent-based quasi-2D dynamics of rotating particle chains.
//!
//! Every chain turns under the overdamped torque balance of
//! [`crate::magnetics`]. Centres move under a pairwise attraction kernel
//! (∝ 1/d² inside a cutoff) that is active only while chains spin, a soft
//! excluded-area repulsion, and a uniform rolling drift when the rotating
//! field is pitched. Chains merge end to end, free particles rejoin nearby
//! chains, and chains on the rim of the gathered region split at random.
//!
//! A simulated particle stands for `particle_weight` physical particles when
//! converting to area density; the rotational physics always uses the real
//! particle radius and chain length.

mod density;
mod locomotion;
mod seeding;
mod snapshot;

pub use density::{
    density_grid, largest_component, max_inscribed_rectangle, region_of_component, swarm_region,
    swarm_region_with_min, Component, DensityGrid, SwarmRegion, KG_TO_UG, M2_TO_MM2,
    MIN_REGION_CELLS,
};
pub use locomotion::{locomotion_velocity, LocomotionParams};
pub use seeding::{seed_uniform_disc, DiscSeeding};
pub use snapshot::{SceneSnapshot, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};

use std::f64::consts::{FRAC_PI_4, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::magnetics::{self, ChainState, FieldCommand, FieldMode, FluidSpec, MagneticsError, ParticleSpec};
use crate::{Rect, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwarmError {
    #[error("unstable step: {0}; halve dt")]
    UnstableStep(String),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Magnetics(#[from] MagneticsError),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

/// Tunables of the aggregation model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmParams {
    /// Attraction kernel strength `k`: a partner of `N` particles at distance
    /// `d` pulls with velocity `k·N/(d² + ℓ²)`, m³/s.
    pub attraction: f64,
    /// Kernel cutoff radius, m.
    pub cutoff: f64,
    /// Kernel softening length `ℓ`, m.
    pub softening: f64,
    /// Closing-speed gain of the excluded-area repulsion, 1/s.
    pub repulsion_rate: f64,
    /// Density at which spinning chains pack edge to edge, µg/mm².
    pub packing_density: f64,
    /// Cap on the relative speed a single pair's attraction can produce, m/s.
    pub max_pair_speed: f64,
    /// Spin rate at which interaction activity reaches 1, rad/s.
    pub reference_spin: f64,
    /// End-to-end merge distance, in particle diameters.
    pub capture_diameters: f64,
    /// Largest axis misalignment that still merges, rad.
    pub max_misalignment: f64,
    /// Split probability per second for chains on the swarm rim.
    pub disassembly_rate: f64,
    /// Density marking gathered cells, µg/mm².
    pub swarm_threshold: f64,
    /// Cell size of the region-detection grid, m.
    pub grid_cell: f64,
    /// Box-smoothing radius, in cells, applied before thresholding.
    pub grid_smoothing: u32,
    /// Steps between rim-detection refreshes.
    pub region_interval: u32,
    pub locomotion: LocomotionParams,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            attraction: 2.84e-14,
            cutoff: 2.67e-3,
            softening: 67e-6,
            repulsion_rate: 100.0,
            packing_density: 4.75,
            max_pair_speed: 133e-6,
            reference_spin: 2.0 * PI * 6.0,
            capture_diameters: 1.5,
            max_misalignment: 30f64.to_radians(),
            disassembly_rate: 0.01,
            swarm_threshold: 3.5,
            grid_cell: 0.25e-3,
            grid_smoothing: 1,
            region_interval: 100,
            locomotion: LocomotionParams::default(),
        }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<(), SwarmError> {
        let positive = [
            ("attraction", self.attraction >= 0.0),
            ("cutoff", self.cutoff > 0.0),
            ("softening", self.softening > 0.0),
            ("repulsion_rate", self.repulsion_rate >= 0.0),
            ("packing_density", self.packing_density > 0.0),
            ("max_pair_speed", self.max_pair_speed > 0.0),
            ("reference_spin", self.reference_spin > 0.0),
            ("capture_diameters", self.capture_diameters >= 0.0),
            ("max_misalignment", (0.0..=PI / 2.0).contains(&self.max_misalignment)),
            ("disassembly_rate", self.disassembly_rate >= 0.0),
            ("swarm_threshold", self.swarm_threshold > 0.0),
            ("grid_cell", self.grid_cell > 0.0),
            ("region_interval", self.region_interval > 0),
            ("locomotion.friction_coefficient", self.locomotion.friction_coefficient >= 0.0),
            ("locomotion.effective_radius", self.locomotion.effective_radius >= 0.0),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(SwarmError::InvalidParameter {
                    name,
                    reason: "out of range".into(),
                });
            }
        }
        Ok(())
    }
}

/// Cached result of the last rim-detection pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RimCache {
    pub origin: Vec2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major rim-cell flags; empty when no swarm has formed.
    pub rim: Vec<bool>,
}

impl RimCache {
    fn is_rim(&self, p: &Vec2) -> bool {
        if self.rim.is_empty() {
            return false;
        }
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx as usize >= self.nx || fy as usize >= self.ny {
            return false;
        }
        self.rim[fy as usize * self.nx + fx as usize]
    }
}

/// All chains and free particles at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmScene {
    pub chains: Vec<ChainState>,
    pub free_particles: Vec<Vec2>,
    pub spec: ParticleSpec,
    pub fluid: FluidSpec,
    pub tank: Rect,
    pub time: f64,
    pub step_index: u64,
    pub rng_seed: u64,
    /// Physical particles represented by one simulated particle.
    pub particle_weight: f64,
    pub rim: RimCache,
}

/// Inner tank space of 45 × 25 mm.
pub fn default_tank() -> Rect {
    Rect::new(Vec2::zeros(), Vec2::new(45e-3, 25e-3))
}

/// What happened during one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    pub merges: usize,
    pub rejoins: usize,
    pub splits: usize,
}

struct Agent {
    pos: Vec2,
    n: f64,
    spin: f64,
    footprint: f64,
}

impl SwarmScene {
    pub fn new(spec: ParticleSpec, fluid: FluidSpec, tank: Rect, rng_seed: u64) -> Self {
        Self {
            chains: Vec::new(),
            free_particles: Vec::new(),
            spec,
            fluid,
            tank,
            time: 0.0,
            step_index: 0,
            rng_seed,
            particle_weight: 1.0,
            rim: RimCache::default(),
        }
    }

    /// Chains plus free particles; conserved by every step.
    pub fn total_particles(&self) -> u64 {
        self.chains.iter().map(|c| c.n_particles as u64).sum::<u64>() + self.free_particles.len() as u64
    }

    /// Mass of one simulated particle, µg.
    pub fn simulated_particle_mass_ug(&self) -> f64 {
        self.spec.mass_per_particle * KG_TO_UG * self.particle_weight
    }

    pub fn total_mass_ug(&self) -> f64 {
        self.total_particles() as f64 * self.simulated_particle_mass_ug()
    }

    /// Particle-weighted centre of mass.
    pub fn center_of_mass(&self) -> Vec2 {
        let mut sum = Vec2::zeros();
        let mut count = 0.0;
        for c in &self.chains {
            sum += c.center * c.n_particles as f64;
            count += c.n_particles as f64;
        }
        for p in &self.free_particles {
            sum += p;
            count += 1.0;
        }
        if count > 0.0 {
            sum / count
        } else {
            Vec2::zeros()
        }
    }

    /// Smoothed density grid used to find the gathered region.
    pub fn region_grid(&self, params: &SwarmParams) -> Result<DensityGrid, SwarmError> {
        Ok(density_grid(self, params.grid_cell)?.box_smoothed(params.grid_smoothing as usize))
    }

    /// Inscribed rectangle of the gathered region, if one has formed.
    pub fn swarm_region(&self, params: &SwarmParams) -> Option<SwarmRegion> {
        swarm_region(&self.region_grid(params).ok()?, params.swarm_threshold)
    }

    /// Excluded-area radius of an agent of `n` particles at the packing density.
    pub fn footprint_radius(&self, n: u32, params: &SwarmParams) -> f64 {
        let area_mm2 = n as f64 * self.simulated_particle_mass_ug() / (2.0 * 3f64.sqrt() * params.packing_density);
        (area_mm2 / M2_TO_MM2).sqrt()
    }

    fn synchronous_with(&self, n: u32, field: &FieldCommand) -> bool {
        if field.mode != FieldMode::Rotating || !field.is_active() {
            return true;
        }
        magnetics::synchrony_ratio(n, &self.spec, &self.fluid, field.magnitude, field.angular_frequency())
            .is_ok_and(|s| s < 1.0)
    }

    /// Advances the scene by `dt` under `field`.
    ///
    /// On error the scene is left untouched.
    pub fn step(&mut self, field: &FieldCommand, dt: f64, params: &SwarmParams) -> Result<StepReport, SwarmError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SwarmError::InvalidParameter {
                name: "dt",
                reason: "must be > 0".into(),
            });
        }
        if params.repulsion_rate * dt >= 1.0 {
            return Err(SwarmError::UnstableStep(format!(
                "repulsion_rate * dt = {} >= 1",
                params.repulsion_rate * dt
            )));
        }

        let new_angles = self.rotate_chains(field, dt)?;
        let spins: Vec<f64> = new_angles
            .iter()
            .zip(&self.chains)
            .map(|(&(phi, _), c)| (phi - unwrap_near(c.axis_angle, phi)) / dt)
            .collect();
        for (chain, &(phi, tilt)) in self.chains.iter_mut().zip(&new_angles) {
            chain.set_axis_angle(phi);
            chain.tilt = tilt;
        }

        self.move_centers(field, dt, params, &spins);

        let mut report = StepReport::default();
        self.merge_chains(field, params, &mut report);
        self.rejoin_free_particles(field, params, &mut report);

        if self.step_index % params.region_interval as u64 == 0 {
            self.refresh_rim(params)?;
        }
        self.disassemble_rim(dt, params, &mut report);

        self.step_index += 1;
        self.time = self.step_index as f64 * dt;
        Ok(report)
    }

    /// RK4 step of every chain's azimuth; returns unwrapped (angle, tilt).
    fn rotate_chains(&self, field: &FieldCommand, dt: f64) -> Result<Vec<(f64, f64)>, SwarmError> {
        let t = self.time;
        let theta0 = field.azimuth_at(t);
        let mut out = Vec::with_capacity(self.chains.len());
        for chain in &self.chains {
            let phi = theta0 - magnetics::wrap_half_pi(theta0 - chain.axis_angle);
            if !field.is_active() {
                out.push((chain.axis_angle, chain.tilt));
                continue;
            }
            let rate = magnetics::critical_rotation_rate(chain.n_particles, &self.spec, &self.fluid, field.magnitude)?;
            // RK4 stays stable on the linearised relaxation while 2·rate·dt < 2.78
            if 2.0 * rate * dt > 2.5 {
                return Err(SwarmError::UnstableStep(format!(
                    "chain of {} particles relaxes at {rate} rad/s, too fast for dt = {dt}",
                    chain.n_particles
                )));
            }
            let rhs = |tt: f64, p: f64| rate * (2.0 * (field.azimuth_at(tt) - p)).sin();
            let k1 = rhs(t, phi);
            let k2 = rhs(t + 0.5 * dt, phi + 0.5 * dt * k1);
            let k3 = rhs(t + 0.5 * dt, phi + 0.5 * dt * k2);
            let k4 = rhs(t + dt, phi + dt * k3);
            let delta = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if delta.abs() > FRAC_PI_4 || !delta.is_finite() {
                return Err(SwarmError::UnstableStep(format!(
                    "chain of {} particles turned {delta} rad in one step",
                    chain.n_particles
                )));
            }
            let new_phi = phi + delta;
            out.push((new_phi, field.elevation_at_azimuth(new_phi)));
        }
        Ok(out)
    }

    fn agents(&self, spins: &[f64], params: &SwarmParams) -> Vec<Agent> {
        let mut agents = Vec::with_capacity(self.chains.len() + self.free_particles.len());
        for (c, &spin) in self.chains.iter().zip(spins) {
            agents.push(Agent {
                pos: c.center,
                n: c.n_particles as f64,
                spin: spin.abs(),
                footprint: self.footprint_radius(c.n_particles, params),
            });
        }
        let free_fp = self.footprint_radius(1, params);
        for p in &self.free_particles {
            agents.push(Agent {
                pos: *p,
                n: 1.0,
                spin: 0.0,
                footprint: free_fp,
            });
        }
        agents
    }

    fn move_centers(&mut self, field: &FieldCommand, dt: f64, params: &SwarmParams, spins: &[f64]) {
        let agents = self.agents(spins, params);
        let mut force = vec![Vec2::zeros(); agents.len()];
        let cutoff2 = params.cutoff * params.cutoff;
        let soft2 = params.softening * params.softening;
        // pair forces are antisymmetric, so the particle-weighted centre of mass only moves with the drift
        for i in 0..agents.len() {
            let a = &agents[i];
            for j in i + 1..agents.len() {
                let b = &agents[j];
                let activity = 0.5 * (a.spin + b.spin) / params.reference_spin;
                if activity == 0.0 {
                    continue;
                }
                let d = b.pos - a.pos;
                let d2 = d.norm_squared();
                if d2 >= cutoff2 || d2 == 0.0 {
                    continue;
                }
                let dist = d2.sqrt();
                let reduced = a.n * b.n / (a.n + b.n);
                let attract = params.attraction * activity * a.n * b.n / (d2 + soft2);
                let overlap = (a.footprint + b.footprint - dist).max(0.0);
                let repel = params.repulsion_rate * activity * overlap * reduced;
                // only the pull saturates; contact repulsion must win over any crowd
                let magnitude = attract.min(params.max_pair_speed * reduced) - repel;
                let f = d * (magnitude / dist);
                force[i] += f;
                force[j] -= f;
            }
        }

        let drift = if field.mode == FieldMode::Rotating && field.is_active() {
            let speed = locomotion_velocity(field.pitch, field.frequency, &params.locomotion);
            Vec2::new(field.yaw.cos(), field.yaw.sin()) * speed
        } else {
            Vec2::zeros()
        };

        let n_chains = self.chains.len();
        for (k, agent) in agents.iter().enumerate() {
            let v = force[k] / agent.n + drift;
            if k < n_chains {
                let half = 0.5 * self.chains[k].length(&self.spec);
                let bounds = self.tank.inset(half);
                self.chains[k].center = bounds.clamp(agent.pos + v * dt);
            } else {
                self.free_particles[k - n_chains] = self.tank.clamp(agent.pos + v * dt);
            }
        }
    }

    fn merge_chains(&mut self, field: &FieldCommand, params: &SwarmParams, report: &mut StepReport) {
        let capture = params.capture_diameters * 2.0 * self.spec.radius;
        let mut alive = vec![true; self.chains.len()];
        for i in 0..self.chains.len() {
            if !alive[i] {
                continue;
            }
            for j in i + 1..self.chains.len() {
                if !alive[j] {
                    continue;
                }
                let (a, b) = (&self.chains[i], &self.chains[j]);
                let reach = 0.5 * (a.length(&self.spec) + b.length(&self.spec)) + capture;
                if (a.center - b.center).norm_squared() > reach * reach {
                    continue;
                }
                let misalignment = magnetics::wrap_half_pi(a.axis_angle - b.axis_angle).abs();
                if misalignment >= params.max_misalignment {
                    continue;
                }
                let (a0, a1) = a.endpoints(&self.spec);
                let (b0, b1) = b.endpoints(&self.spec);
                let gap = [(a0, b0), (a0, b1), (a1, b0), (a1, b1)]
                    .iter()
                    .map(|(p, q)| (p - q).norm())
                    .fold(f64::INFINITY, f64::min);
                if gap >= capture {
                    continue;
                }
                let n = a.n_particles + b.n_particles;
                if !self.synchronous_with(n, field) {
                    continue;
                }
                let merged = merge_pair(a, b, n);
                let half = 0.5 * merged.length(&self.spec);
                if !self.tank.inset(half).contains(&merged.center) {
                    continue;
                }
                self.chains[i] = merged;
                alive[j] = false;
                report.merges += 1;
            }
        }
        let mut k = 0;
        self.chains.retain(|_| {
            k += 1;
            alive[k - 1]
        });
    }

    fn rejoin_free_particles(&mut self, field: &FieldCommand, params: &SwarmParams, report: &mut StepReport) {
        if self.free_particles.is_empty() || self.chains.is_empty() {
            return;
        }
        let mut remaining = Vec::with_capacity(self.free_particles.len());
        for p in std::mem::take(&mut self.free_particles) {
            let mut best: Option<(usize, f64)> = None;
            for (i, c) in self.chains.iter().enumerate() {
                let d2 = (c.center - p).norm_squared();
                if best.is_none_or(|(_, b)| d2 < b) {
                    best = Some((i, d2));
                }
            }
            let joined = best.is_some_and(|(i, d2)| {
                let c = self.chains[i];
                let reach = self.footprint_radius(c.n_particles, params);
                if d2 >= reach * reach || !self.synchronous_with(c.n_particles + 1, field) {
                    return false;
                }
                let n = c.n_particles as f64;
                let center = (c.center * n + p) / (n + 1.0);
                let half = 0.5 * (c.n_particles + 1) as f64 * 2.0 * self.spec.radius;
                if !self.tank.inset(half).contains(&center) {
                    return false;
                }
                let chain = &mut self.chains[i];
                chain.center = center;
                chain.n_particles += 1;
                true
            });
            if joined {
                report.rejoins += 1;
            } else {
                remaining.push(p);
            }
        }
        self.free_particles = remaining;
    }

    /// Recomputes the rim cells of the gathered region.
    pub fn refresh_rim(&mut self, params: &SwarmParams) -> Result<(), SwarmError> {
        let grid = self.region_grid(params)?;
        let component = largest_component(&grid, params.swarm_threshold)
            .filter(|c| c.cell_count >= MIN_REGION_CELLS);
        self.rim = RimCache {
            origin: grid.origin,
            cell_size: grid.cell_size,
            nx: grid.nx,
            ny: grid.ny,
            rim: match component {
                Some(c) => (0..grid.nx * grid.ny).map(|i| c.is_boundary(i % grid.nx, i / grid.nx)).collect(),
                None => Vec::new(),
            },
        };
        Ok(())
    }

    fn disassemble_rim(&mut self, dt: f64, params: &SwarmParams, report: &mut StepReport) {
        if self.rim.rim.is_empty() || params.disassembly_rate == 0.0 {
            return;
        }
        let p_split = params.disassembly_rate * dt;
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(self.step_index);
        let mut kept = Vec::with_capacity(self.chains.len());
        let mut born = Vec::new();
        for chain in std::mem::take(&mut self.chains) {
            let on_rim = self.rim.is_rim(&chain.center);
            // one draw per chain keeps the stream aligned with chain order
            let u: f64 = rng.random();
            if !on_rim || u >= p_split || chain.n_particles < 2 {
                kept.push(chain);
                continue;
            }
            report.splits += 1;
            let n = chain.n_particles;
            let (n1, n2) = (n / 2, n - n / 2);
            let sep = self.footprint_radius(n, params);
            let axis = chain.axis();
            let c1 = chain.center - axis * (sep * n2 as f64 / n as f64);
            let c2 = chain.center + axis * (sep * n1 as f64 / n as f64);
            for (m, c) in [(n1, c1), (n2, c2)] {
                self.place_fragment(&chain, m, c, &mut born);
            }
        }
        kept.extend(born);
        self.chains = kept;
    }

    fn place_fragment(&mut self, parent: &ChainState, n: u32, center: Vec2, born: &mut Vec<ChainState>) {
        match n {
            0 => {}
            1 => self.free_particles.push(self.tank.clamp(center)),
            2 => {
                let offset = parent.axis() * self.spec.radius;
                self.free_particles.push(self.tank.clamp(center - offset));
                self.free_particles.push(self.tank.clamp(center + offset));
            }
            _ => {
                let mut c = *parent;
                c.n_particles = n;
                let half = 0.5 * c.length(&self.spec);
                c.center = self.tank.inset(half).clamp(center);
                born.push(c);
            }
        }
    }
}

fn merge_pair(a: &ChainState, b: &ChainState, n: u32) -> ChainState {
    let (wa, wb) = (a.n_particles as f64, b.n_particles as f64);
    let center = (a.center * wa + b.center * wb) / (wa + wb);
    // particle-weighted mean of the two directors
    let diff = magnetics::wrap_half_pi(b.axis_angle - a.axis_angle);
    let angle = a.axis_angle + diff * wb / (wa + wb);
    let mut merged = *a;
    merged.n_particles = n;
    merged.center = center;
    merged.set_axis_angle(angle);
    merged.tilt = (a.tilt * wa + b.tilt * wb) / (wa + wb);
    merged
}

/// Representative of `angle` (mod π) closest to `target`.
fn unwrap_near(angle: f64, target: f64) -> f64 {
    target - magnetics::wrap_half_pi(target - angle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetics::TorqueBalance;

    fn scene_with(chains: Vec<ChainState>) -> SwarmScene {
        let mut s = SwarmScene::new(ParticleSpec::default(), FluidSpec::default(), default_tank(), 11);
        s.chains = chains;
        s.particle_weight = 2.0e4;
        s
    }

    fn chain_at(n: u32, x_mm: f64, y_mm: f64, angle: f64) -> ChainState {
        ChainState::new(n, Vec2::new(x_mm * 1e-3, y_mm * 1e-3), angle).unwrap()
    }

    #[test]
    fn field_off_leaves_centres_alone() {
        let mut scene = scene_with(vec![chain_at(10, 20.0, 12.0, 0.1), chain_at(10, 20.1, 12.0, 1.0)]);
        let before = scene.clone();
        let params = SwarmParams::default();
        for _ in 0..500 {
            let report = scene.step(&FieldCommand::off(), 1e-3, &params).unwrap();
            assert_eq!(report, StepReport::default());
        }
        for (a, b) in scene.chains.iter().zip(&before.chains) {
            assert_eq!(a.center, b.center);
            assert_eq!(a.axis_angle, b.axis_angle);
        }
    }

    #[test]
    fn single_chain_tracks_field_with_phase_lag() {
        let mut scene = scene_with(vec![chain_at(10, 20.0, 12.0, 0.0)]);
        let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
        let params = SwarmParams::default();
        for _ in 0..3000 {
            scene.step(&field, 1e-3, &params).unwrap();
        }
        let lag = magnetics::wrap_half_pi(field.azimuth_at(scene.time) - scene.chains[0].axis_angle);
        let expected = match magnetics::phase_lag(&scene.chains[0], &scene.spec, &scene.fluid, &field).unwrap() {
            TorqueBalance::Synchronous { phase_lag } => phase_lag,
            other => panic!("{other:?}"),
        };
        assert!((lag - expected).abs() < 1e-6, "{lag} vs {expected}");
    }

    #[test]
    fn aligned_touching_chains_merge() {
        let spec = ParticleSpec::default();
        let a = chain_at(5, 20.0, 12.0, 0.0);
        let mut b = a;
        b.center.x += a.length(&spec) + 0.5 * spec.radius;
        let mut scene = scene_with(vec![a, b]);
        let total = scene.total_particles();
        let field = FieldCommand::static_field(8e-3, 0.0, 0.0);
        let report = scene.step(&field, 1e-3, &SwarmParams::default()).unwrap();
        assert_eq!(report.merges, 1);
        assert_eq!(scene.chains.len(), 1);
        assert_eq!(scene.chains[0].n_particles, 10);
        assert_eq!(scene.total_particles(), total);
    }

    #[test]
    fn misaligned_chains_do_not_merge() {
        let spec = ParticleSpec::default();
        let a = chain_at(5, 20.0, 12.0, 0.0);
        let mut b = chain_at(5, 20.0, 12.0, 40f64.to_radians());
        b.center.x += a.length(&spec);
        let mut scene = scene_with(vec![a, b]);
        let field = FieldCommand::off();
        let report = scene.step(&field, 1e-3, &SwarmParams::default()).unwrap();
        assert_eq!(report.merges, 0);
    }

    #[test]
    fn merge_respects_synchrony_limit() {
        let spec = ParticleSpec::default();
        let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
        let a = chain_at(60, 20.0, 12.0, field.azimuth_at(0.0));
        let mut b = a;
        b.center += a.axis() * (a.length(&spec) + 0.5 * spec.radius);
        let mut scene = scene_with(vec![a, b]);
        let report = scene.step(&field, 1e-4, &SwarmParams::default()).unwrap();
        assert_eq!(report.merges, 0);
    }

    #[test]
    fn rim_chains_split_and_conserve_particles() {
        let mut params = SwarmParams::default();
        params.disassembly_rate = 400.0;
        let mut chains = Vec::new();
        for i in 0..12 {
            for j in 0..12 {
                chains.push(chain_at(10, 20.0 + 0.1 * i as f64, 10.0 + 0.1 * j as f64, 0.0));
            }
        }
        let mut scene = scene_with(chains);
        let total = scene.total_particles();
        let field = FieldCommand::static_field(8e-3, 0.0, 0.0);
        let mut splits = 0;
        for _ in 0..20 {
            splits += scene.step(&field, 1e-3, &params).unwrap().splits;
        }
        assert!(splits > 0);
        assert_eq!(scene.total_particles(), total);
        assert!(scene.chains.iter().all(|c| c.n_particles >= 3));
    }

    #[test]
    fn rejects_bad_dt() {
        let mut scene = scene_with(vec![chain_at(10, 20.0, 12.0, 0.0)]);
        let params = SwarmParams::default();
        assert!(scene.step(&FieldCommand::off(), 0.0, &params).is_err());
        assert!(matches!(
            scene.step(&FieldCommand::off(), 0.05, &params),
            Err(SwarmError::UnstableStep(_))
        ));
        let mut short = scene_with(vec![chain_at(3, 20.0, 12.0, 1.2)]);
        let strong = FieldCommand::static_field(20e-3, 0.0, 0.0);
        let before = short.clone();
        assert!(matches!(short.step(&strong, 9e-3, &params), Err(SwarmError::UnstableStep(_))));
        assert_eq!(short, before);
    }

    #[test]
    fn pitched_field_translates_along_yaw() {
        let mut scene = scene_with(vec![chain_at(10, 20.0, 12.0, 0.0)]);
        let yaw = 0.5;
        let field = FieldCommand::rotating(8e-3, 6.0, yaw, 6f64.to_radians());
        let params = SwarmParams::default();
        let start = scene.chains[0].center;
        for _ in 0..1000 {
            scene.step(&field, 1e-3, &params).unwrap();
        }
        let moved = scene.chains[0].center - start;
        assert!((moved.norm() - 75e-6).abs() < 1e-9);
        assert!((moved.y.atan2(moved.x) - yaw).abs() < 1e-9);
    }
}
