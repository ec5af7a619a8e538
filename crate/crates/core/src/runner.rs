//! Frame-paced simulation loop and the closed-loop navigation driver.
//!
//! Physics runs at a fixed `dt`; frame `k` is rendered once the step
//! counter reaches `ceil(k / (frame_rate · dt))`. Field changes made
//! between frames take effect from the next physics step, so no frame ever
//! sees a half-applied command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::point_segment_distance;
use crate::magnetics::{FieldCommand, FluidSpec, ParticleSpec};
use crate::navigation::{
    current_leg, ground_truth_centroid, image_centroid, steer, NavConfig, NavLogRow, NavSource, NavState, Waypoint,
};
use crate::sonography::{render_frame, roi_mean_intensity, ContrastModelParams, ProbeSpec, Roi, UltrasoundFrame};
use crate::swarm::{seed_uniform_disc, DiscSeeding, SwarmParams, SwarmRegion, SwarmScene};
use crate::{Error, Rect, Vec2};

/// Frames per navigation slot (3 s at 22 fps).
pub const SLOT_FRAMES: usize = 66;

/// Initial chain layout: a uniform disc plus a few isolated chains far
/// outside the attraction range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSetup {
    pub center: Vec2,
    pub radius: f64,
    pub spacing: f64,
    pub jitter: f64,
    pub chain_len: u32,
    /// Area density of the seeded disc, µg/mm².
    pub initial_density: f64,
    pub outliers: usize,
    /// Distance of the isolated chains from the disc centre, m.
    pub outlier_distance: f64,
}

impl Default for SceneSetup {
    fn default() -> Self {
        Self {
            center: Vec2::new(22.5e-3, 12.5e-3),
            radius: 2.0e-3,
            spacing: 0.25e-3,
            jitter: 0.15,
            chain_len: 10,
            initial_density: 2.0,
            outliers: 6,
            outlier_distance: 5.5e-3,
        }
    }
}

/// Seeds a scene from `setup`; layout randomness is drawn from `seed`.
pub fn build_scene(
    setup: &SceneSetup,
    spec: ParticleSpec,
    fluid: FluidSpec,
    tank: Rect,
    seed: u64,
) -> Result<SwarmScene, Error> {
    spec.validate()?;
    fluid.validate()?;
    if setup.chain_len < 2 {
        return Err(crate::magnetics::MagneticsError::NotAChain(setup.chain_len).into());
    }
    let seeding = DiscSeeding {
        center: setup.center,
        radius: setup.radius,
        spacing: setup.spacing,
        jitter: setup.jitter,
        chain_len: setup.chain_len,
        axis_angle: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SwarmScene::new(spec, fluid, tank, seed);
    scene.particle_weight = seeding.particle_weight_for(&spec, setup.initial_density);
    scene.chains = seed_uniform_disc(&seeding, &mut rng);
    for k in 0..setup.outliers {
        let angle = std::f64::consts::TAU * (k as f64 + rng.random_range(0.0..0.5)) / setup.outliers as f64;
        let pos = setup.center + setup.outlier_distance * Vec2::new(angle.cos(), angle.sin());
        scene.chains.push(crate::ChainState::new(setup.chain_len, tank.clamp(pos), 0.0)?);
    }
    if scene.chains.iter().any(|c| !tank.contains(&c.center)) {
        return Err(crate::swarm::SwarmError::InvalidParameter {
            name: "setup",
            reason: "seeded disc leaves the tank".into(),
        }
        .into());
    }
    Ok(scene)
}

/// Everything besides the scene that fixes a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics step, s.
    pub dt: f64,
    pub swarm: SwarmParams,
    pub probe: ProbeSpec,
    pub contrast: ContrastModelParams,
    /// Base seed of per-frame speckle.
    pub render_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            swarm: SwarmParams::default(),
            probe: ProbeSpec::default(),
            contrast: ContrastModelParams::default(),
            render_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(crate::swarm::SwarmError::InvalidParameter {
                name: "dt",
                reason: "must lie in (0, 0.01] s".into(),
            }
            .into());
        }
        self.swarm.validate()?;
        self.probe.validate()?;
        self.contrast.validate()?;
        Ok(())
    }
}

fn mix(seed: u64, k: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A scene, the field driving it and the frame clock.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub scene: SwarmScene,
    pub field: FieldCommand,
    pub config: SimConfig,
    /// Index of the next frame to render.
    pub frame_index: u64,
}

/// Quantities reported about the scene once per update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub time: f64,
    pub centroid: Option<Vec2>,
    pub region: Option<SwarmRegion>,
    pub chains: usize,
    pub free_particles: usize,
    pub total_particles: u64,
}

impl Simulation {
    pub fn new(scene: SwarmScene, field: FieldCommand, config: SimConfig) -> Result<Self, Error> {
        config.validate()?;
        field.validate()?;
        Ok(Self {
            scene,
            field,
            config,
            frame_index: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.scene.time
    }

    /// Step at which frame `k` is taken.
    pub fn frame_step(&self, k: u64) -> u64 {
        let steps_per_frame = 1.0 / (self.config.probe.frame_rate * self.config.dt);
        (k as f64 * steps_per_frame - 1e-9).ceil().max(0.0) as u64
    }

    /// Time of frame `k`, s.
    pub fn frame_time(&self, k: u64) -> f64 {
        self.frame_step(k) as f64 * self.config.dt
    }

    pub fn set_field(&mut self, field: FieldCommand) -> Result<(), Error> {
        field.validate()?;
        self.field = field;
        Ok(())
    }

    pub fn step(&mut self) -> Result<(), Error> {
        self.scene.step(&self.field, self.config.dt, &self.config.swarm)?;
        Ok(())
    }

    /// Steps up to the next frame time and renders it.
    pub fn advance_frame(&mut self) -> Result<UltrasoundFrame, Error> {
        let due = self.frame_step(self.frame_index);
        while self.scene.step_index < due {
            self.step()?;
        }
        let frame = self.render();
        self.frame_index += 1;
        Ok(frame)
    }

    /// Steps to `time` without rendering; frames falling in between are skipped
    /// so the next frame is the first one due at or after `time`.
    pub fn run_until(&mut self, time: f64) -> Result<(), Error> {
        let target = (time / self.config.dt - 1e-9).ceil().max(0.0) as u64;
        while self.scene.step_index < target {
            self.step()?;
        }
        while self.frame_step(self.frame_index) < self.scene.step_index {
            self.frame_index += 1;
        }
        Ok(())
    }

    /// Renders the current scene with the speckle of the next frame index.
    pub fn render(&self) -> UltrasoundFrame {
        render_frame(
            &self.scene,
            &self.config.probe,
            &self.config.contrast,
            mix(self.config.render_seed, self.frame_index),
        )
    }

    /// Gathered region on the configured grid.
    pub fn region(&self) -> Option<SwarmRegion> {
        self.scene.swarm_region(&self.config.swarm)
    }

    pub fn roi(&self) -> Option<Roi> {
        self.region().and_then(|r| self.config.probe.roi_for_rect(&r.rect))
    }

    pub fn summary(&self) -> SceneSummary {
        SceneSummary {
            time: self.scene.time,
            centroid: ground_truth_centroid(&self.scene, &self.config.swarm),
            region: self.region(),
            chains: self.scene.chains.len(),
            free_particles: self.scene.free_particles.len(),
            total_particles: self.scene.total_particles(),
        }
    }
}

/// Closed-loop waypoint following with per-slot ROI statistics and a log.
#[derive(Clone, Debug, PartialEq)]
pub struct NavRun {
    pub plan: Vec<Waypoint>,
    pub state: NavState,
    pub config: NavConfig,
    /// Magnitude, frequency and pitch of every steering command.
    pub base: FieldCommand,
    pub roi: Option<Roi>,
    pub rows: Vec<NavLogRow>,
    pub slot_means: Vec<f64>,
    /// Largest ground-truth distance from the planned leg, m.
    pub max_cross_track: f64,
    frames: usize,
    slot_values: Vec<f64>,
    slot_first_row: usize,
}

impl NavRun {
    pub fn new(plan: Vec<Waypoint>, base: FieldCommand, config: NavConfig) -> Result<Self, Error> {
        if plan.is_empty() {
            return Err(crate::navigation::NavigationError::EmptyPlan.into());
        }
        base.validate()?;
        Ok(Self {
            plan,
            state: NavState::new(config.source),
            config,
            base,
            roi: None,
            rows: Vec::new(),
            slot_means: Vec::new(),
            max_cross_track: 0.0,
            frames: 0,
            slot_values: Vec::new(),
            slot_first_row: 0,
        })
    }

    pub fn completed(&self) -> bool {
        self.state.completed
    }

    fn close_slot(&mut self) {
        if self.slot_values.is_empty() {
            return;
        }
        let mean = self.slot_values.iter().sum::<f64>() / self.slot_values.len() as f64;
        self.slot_means.push(mean);
        for row in &mut self.rows[self.slot_first_row..] {
            row.slot_mean_intensity = Some(mean);
        }
        self.slot_values.clear();
    }

    /// Consumes the frame just rendered by `sim` and returns the next command.
    pub fn on_frame(&mut self, sim: &Simulation, frame: &UltrasoundFrame) -> Result<FieldCommand, Error> {
        if self.frames % SLOT_FRAMES == 0 {
            self.close_slot();
            self.slot_first_row = self.rows.len();
            self.roi = sim.roi().or(self.roi);
        }
        self.frames += 1;
        if let Some(roi) = &self.roi {
            self.slot_values.push(roi_mean_intensity(frame, roi)?);
        }

        let truth = ground_truth_centroid(&sim.scene, &sim.config.swarm);
        self.state.centroid_estimate = match self.config.source {
            NavSource::GroundTruth => truth,
            NavSource::ImageBased => {
                image_centroid(frame, &sim.config.probe, self.config.image_threshold, self.config.min_pixels)
            }
        };
        if let (Some(p), Some((a, b))) = (
            truth,
            current_leg(&self.plan, self.state.current_target, self.state.arrivals.len()),
        ) {
            if !self.state.completed {
                self.max_cross_track = self.max_cross_track.max(point_segment_distance(p, a, b));
            }
        }
        let cmd = steer(&mut self.state, &self.plan, &self.base, frame.timestamp, &self.config)?;
        self.rows.push(NavLogRow {
            time_s: frame.timestamp,
            target_index: self.state.current_target,
            centroid_x_mm: self.state.centroid_estimate.map(|c| c.x * 1e3),
            centroid_y_mm: self.state.centroid_estimate.map(|c| c.y * 1e3),
            yaw_deg: cmd.yaw.to_degrees(),
            pitch_deg: cmd.pitch.to_degrees(),
            freq_hz: cmd.frequency,
            slot_mean_intensity: None,
        });
        Ok(cmd)
    }

    /// Closes the last, possibly partial, slot.
    pub fn finish(&mut self) {
        self.close_slot();
    }
}
