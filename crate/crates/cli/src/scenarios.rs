//! The named experiments.

use std::fmt;

use magswarm_core::navigation::{
    ground_truth_centroid, plan_rectangle, retune, write_nav_log, Arrival, NavLogRow,
};
use magswarm_core::runner::{build_scene, NavRun, SceneSetup, SimConfig, Simulation};
use magswarm_core::sonography::{
    calibrate, detect_swarm, dominant_frequency, expected_roi_mean, roi_mean_intensity, write_trace_csv, Calibration,
    CalibrationSetup,
};
use magswarm_core::swarm::{default_tank, locomotion_velocity};
use magswarm_core::{ContrastModelParams, FieldCommand, IntensityTrace, Roi, SwarmScene, Vec2};
use serde::Serialize;

use crate::artifacts::{csv_bytes, fmt, manifest_with_files, Artifacts, MANIFEST};
use crate::config::ScenarioConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    YawSweep,
    PitchSweep,
    DynamicContrast,
    DensitySweep,
    VelocitySweep,
    RectangleNav,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::YawSweep,
        Scenario::PitchSweep,
        Scenario::DynamicContrast,
        Scenario::DensitySweep,
        Scenario::VelocitySweep,
        Scenario::RectangleNav,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::YawSweep => "yaw-sweep",
            Scenario::PitchSweep => "pitch-sweep",
            Scenario::DynamicContrast => "dynamic-contrast",
            Scenario::DensitySweep => "density-sweep",
            Scenario::VelocitySweep => "velocity-sweep",
            Scenario::RectangleNav => "rectangle-nav",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::YawSweep => "ROI mean of an aligned layer as a static field turns from 0 to 180 deg",
            Scenario::PitchSweep => "the yaw sweep repeated at several field pitches",
            Scenario::DynamicContrast => "132-frame traces of the seeded region and of the gathered swarm",
            Scenario::DensitySweep => "ROI mean against area density of a rotating layer",
            Scenario::VelocitySweep => "swarm speed against pitch and drive frequency",
            Scenario::RectangleNav => "gather a swarm, then steer it around a rectangle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Typed results of a run, for callers that inspect them directly.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Report {
    Orientation(OrientationSweep),
    DynamicContrast(DynamicContrast),
    DensitySweep(DensitySweep),
    VelocitySweep(VelocitySweep),
    RectangleNav(RectangleNavReport),
}

/// Runs `scenario` and returns its report with every artifact, manifest included.
pub fn run(scenario: Scenario, config: &ScenarioConfig) -> Result<(Report, Artifacts), CliError> {
    config.validate()?;
    let (report, mut artifacts) = match scenario {
        Scenario::YawSweep => {
            let (r, a) = orientation_sweep(config, &[config.orientation.pitch_deg], "yaw_sweep.csv")?;
            (Report::Orientation(r), a)
        }
        Scenario::PitchSweep => {
            let (r, a) = orientation_sweep(config, &config.orientation.pitches_deg, "pitch_sweep.csv")?;
            (Report::Orientation(r), a)
        }
        Scenario::DynamicContrast => {
            let (r, a) = dynamic_contrast(config)?;
            (Report::DynamicContrast(r), a)
        }
        Scenario::DensitySweep => {
            let (r, a) = density_sweep(config)?;
            (Report::DensitySweep(r), a)
        }
        Scenario::VelocitySweep => {
            let (r, a) = velocity_sweep(config)?;
            (Report::VelocitySweep(r), a)
        }
        Scenario::RectangleNav => {
            let (r, a) = rectangle_nav(config)?;
            (Report::RectangleNav(r), a)
        }
    };
    let manifest = manifest_with_files(scenario.name(), config, &artifacts);
    artifacts.add(MANIFEST, manifest.into_bytes());
    Ok((report, artifacts))
}

/// Contrast parameters after fitting the configured anchors, if enabled.
pub fn calibrated_contrast(config: &ScenarioConfig) -> Result<(ContrastModelParams, Option<Calibration>), CliError> {
    if !config.calibration.enabled {
        return Ok((config.sim.contrast, None));
    }
    let anchors: Vec<(f64, f64)> = config.calibration.anchors.iter().map(|a| (a[0], a[1])).collect();
    let cal = calibrate(&anchors, &calibration_setup(config, &config.sim.contrast))
        .map_err(|e| CliError::invalid("calibration", e.to_string()))?;
    Ok((cal.params, Some(cal)))
}

fn calibration_setup(config: &ScenarioConfig, params: &ContrastModelParams) -> CalibrationSetup {
    CalibrationSetup {
        probe: config.sim.probe,
        params: *params,
        depth_range: config.roi_depth_range(),
        field: config.drive.field(0.0),
    }
}

fn sim_config(config: &ScenarioConfig, contrast: ContrastModelParams) -> SimConfig {
    SimConfig {
        contrast,
        render_seed: config.seed,
        ..config.sim
    }
}

fn scene(config: &ScenarioConfig, setup: &SceneSetup) -> Result<SwarmScene, CliError> {
    build_scene(setup, config.particle.spec(), config.fluid, default_tank(), config.seed)
        .map_err(|e| CliError::in_section("setup", e))
}

fn center_roi(config: &ScenarioConfig, fraction: f64) -> Result<Roi, CliError> {
    config
        .sim
        .probe
        .roi_for_rect(&config.center_rect(fraction))
        .ok_or_else(|| CliError::invalid("setup.center", "disc lies outside the image"))
}

fn roi_mean(frame: &magswarm_core::UltrasoundFrame, roi: &Roi) -> Result<f64, CliError> {
    roi_mean_intensity(frame, roi).map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrientationPoint {
    pub pitch_deg: f64,
    pub yaw_deg: f64,
    pub mean_intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrientationSweep {
    pub roi: Roi,
    pub points: Vec<OrientationPoint>,
}

impl OrientationSweep {
    /// Means at `pitch_deg`, in yaw order.
    pub fn at_pitch(&self, pitch_deg: f64) -> Vec<OrientationPoint> {
        self.points.iter().filter(|p| p.pitch_deg == pitch_deg).copied().collect()
    }
}

/// Static field swept over the configured yaws, once per pitch. Each pitch
/// starts from the same scene and speckle sequence.
fn orientation_sweep(
    config: &ScenarioConfig,
    pitches: &[f64],
    csv_name: &str,
) -> Result<(OrientationSweep, Artifacts), CliError> {
    let o = &config.orientation;
    let (contrast, _) = calibrated_contrast(config)?;
    let setup = SceneSetup {
        initial_density: o.density,
        outliers: 0,
        ..config.setup
    };
    let roi = center_roi(config, o.roi_fraction)?;
    let mut artifacts = Artifacts::default();
    let mut points = Vec::new();
    for &pitch in pitches {
        let field_at = |yaw: f64| FieldCommand::static_field(o.magnitude, yaw.to_radians(), pitch.to_radians());
        let mut sim = Simulation::new(scene(config, &setup)?, field_at(o.yaws_deg[0]), sim_config(config, contrast))?;
        for &yaw in &o.yaws_deg {
            sim.set_field(field_at(yaw))?;
            sim.run_until(sim.time() + o.settle)?;
            let mut sum = 0.0;
            for k in 0..o.frames_per_point {
                let frame = sim.advance_frame()?;
                sum += roi_mean(&frame, &roi)?;
                if config.export_frames && k == 0 {
                    let name = format!("pitch{pitch:04.1}_yaw{yaw:05.1}");
                    artifacts.add_frame(&name, sim.frame_index - 1, &frame, Some(&roi))?;
                }
            }
            points.push(OrientationPoint {
                pitch_deg: pitch,
                yaw_deg: yaw,
                mean_intensity: sum / o.frames_per_point as f64,
            });
        }
    }
    let rows = points.iter().map(|p| vec![fmt(p.pitch_deg), fmt(p.yaw_deg), fmt(p.mean_intensity)]);
    artifacts.add(csv_name, csv_bytes(&["pitch_deg", "yaw_deg", "mean_intensity"], rows)?);
    let report = OrientationSweep { roi, points };
    artifacts.add_json("summary.json", &report);
    Ok((report, artifacts))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceReport {
    pub roi: Roi,
    pub mean: f64,
    /// Aliased frequency of the largest spectral peak, Hz.
    pub dominant_frequency_hz: Option<f64>,
    pub periodic: bool,
    #[serde(skip)]
    pub trace: IntensityTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynamicContrast {
    pub calibration: Option<Calibration>,
    pub initial: TraceReport,
    pub swarm: TraceReport,
    /// Mean density of the gathered region, µg/mm².
    pub swarm_density: f64,
}

fn record_trace(
    sim: &mut Simulation,
    roi: &Roi,
    frames: usize,
    drive_frequency: f64,
    factor: f64,
) -> Result<(TraceReport, magswarm_core::UltrasoundFrame), CliError> {
    let mut values = Vec::with_capacity(frames);
    let mut first = None;
    let mut start_time = 0.0;
    for _ in 0..frames {
        let frame = sim.advance_frame()?;
        values.push(roi_mean(&frame, roi)?);
        if first.is_none() {
            start_time = frame.timestamp;
            first = Some(frame);
        }
    }
    let trace = IntensityTrace {
        values,
        frame_rate: sim.config.probe.frame_rate,
        start_time,
    };
    let periodic = detect_swarm(&trace, drive_frequency, factor).map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = TraceReport {
        roi: *roi,
        mean: trace.mean(),
        dominant_frequency_hz: dominant_frequency(&trace).ok(),
        periodic,
        trace,
    };
    Ok((report, first.expect("at least one frame")))
}

fn trace_csv(trace: &IntensityTrace) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(buf)
}

/// Trace of the freshly seeded disc centre, then of the swarm region once
/// it has gathered, both under the drive field.
fn dynamic_contrast(config: &ScenarioConfig) -> Result<(DynamicContrast, Artifacts), CliError> {
    let d = &config.dynamic_contrast;
    let (contrast, calibration) = calibrated_contrast(config)?;
    let setup = SceneSetup {
        initial_density: d.seed_density,
        ..config.setup
    };
    let field = config.drive.field(0.0);
    let mut sim = Simulation::new(scene(config, &setup)?, field, sim_config(config, contrast))?;
    let roi = center_roi(config, d.roi_fraction)?;
    let (initial, first) = record_trace(&mut sim, &roi, d.frames, field.frequency, d.detection_factor)?;

    sim.run_until(d.aggregation_time.max(sim.time()))?;
    let region = sim
        .region()
        .ok_or_else(|| CliError::Runtime(format!("no swarm region after {} s", sim.time())))?;
    let swarm_roi = sim
        .config
        .probe
        .roi_for_rect(&region.rect)
        .ok_or_else(|| CliError::Runtime("swarm region lies outside the image".into()))?;
    let (swarm, swarm_first) = record_trace(&mut sim, &swarm_roi, d.frames, field.frequency, d.detection_factor)?;

    let mut artifacts = Artifacts::default();
    artifacts.add("trace_initial.csv", trace_csv(&initial.trace)?);
    artifacts.add("trace_swarm.csv", trace_csv(&swarm.trace)?);
    if config.export_frames {
        artifacts.add_frame("initial", 0, &first, Some(&roi))?;
        let index = sim.frame_index - d.frames as u64;
        artifacts.add_frame("swarm", index, &swarm_first, Some(&swarm_roi))?;
    }
    let report = DynamicContrast {
        calibration,
        initial,
        swarm,
        swarm_density: region.mean_density,
    };
    artifacts.add_json("summary.json", &report);
    Ok((report, artifacts))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityPoint {
    pub density: f64,
    pub mean_intensity: f64,
    /// Closed-form expectation for a uniform layer.
    pub expected_intensity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensitySweep {
    pub roi: Roi,
    pub points: Vec<DensityPoint>,
    /// ROI mean of the particle-free scene.
    pub empty_mean: f64,
    /// Configured quantile of empty-scene ROI pixels.
    pub noise_floor: f64,
}

/// A rotating layer held at each density. Chain interactions are switched
/// off so the layer keeps its seeded density for the whole run.
fn density_sweep(config: &ScenarioConfig) -> Result<(DensitySweep, Artifacts), CliError> {
    let ds = &config.density_sweep;
    let (contrast, _) = calibrated_contrast(config)?;
    let mut sim_cfg = sim_config(config, contrast);
    sim_cfg.swarm.attraction = 0.0;
    sim_cfg.swarm.repulsion_rate = 0.0;
    sim_cfg.swarm.disassembly_rate = 0.0;
    let field = config.drive.field(0.0);
    let roi = center_roi(config, ds.roi_fraction)?;
    let cal_setup = calibration_setup(config, &contrast);
    let mut artifacts = Artifacts::default();

    let mut points = Vec::new();
    for &rho in &ds.densities {
        let setup = SceneSetup {
            initial_density: rho,
            outliers: 0,
            ..config.setup
        };
        let mut sim = Simulation::new(scene(config, &setup)?, field, sim_cfg)?;
        let mut sum = 0.0;
        for k in 0..ds.frames_per_point {
            let frame = sim.advance_frame()?;
            sum += roi_mean(&frame, &roi)?;
            if config.export_frames && k == 0 {
                artifacts.add_frame(&format!("density{rho:04.2}"), 0, &frame, Some(&roi))?;
            }
        }
        points.push(DensityPoint {
            density: rho,
            mean_intensity: sum / ds.frames_per_point as f64,
            expected_intensity: expected_roi_mean(rho, &cal_setup, &contrast),
        });
    }

    let empty = SwarmScene::new(config.particle.spec(), config.fluid, default_tank(), config.seed);
    let mut sim = Simulation::new(empty, field, sim_cfg)?;
    let mut sum = 0.0;
    let mut pixels = Vec::with_capacity(roi.pixel_count() * ds.frames_per_point);
    for _ in 0..ds.frames_per_point {
        let frame = sim.advance_frame()?;
        sum += roi_mean(&frame, &roi)?;
        for r in roi.row0..roi.row0 + roi.rows {
            for c in roi.col0..roi.col0 + roi.cols {
                pixels.push(frame.get(r, c));
            }
        }
    }
    pixels.sort_unstable();
    let q = ((pixels.len() - 1) as f64 * ds.floor_quantile).round() as usize;

    let rows = points
        .iter()
        .map(|p| vec![fmt(p.density), fmt(p.mean_intensity), fmt(p.expected_intensity)]);
    artifacts.add(
        "density_sweep.csv",
        csv_bytes(&["density_ug_mm2", "mean_intensity", "expected_intensity"], rows)?,
    );
    let report = DensitySweep {
        roi,
        points,
        empty_mean: sum / ds.frames_per_point as f64,
        noise_floor: pixels[q] as f64,
    };
    artifacts.add_json("summary.json", &report);
    Ok((report, artifacts))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VelocityPoint {
    pub frequency_hz: f64,
    pub pitch_deg: f64,
    /// Rolling-model speed, m/s.
    pub model_velocity: f64,
    /// Centre-of-mass speed along the heading, m/s.
    pub measured_velocity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VelocitySweep {
    pub points: Vec<VelocityPoint>,
}

impl VelocitySweep {
    pub fn get(&self, frequency_hz: f64, pitch_deg: f64) -> Option<&VelocityPoint> {
        self.points
            .iter()
            .find(|p| p.frequency_hz == frequency_hz && p.pitch_deg == pitch_deg)
    }
}

/// A small disc driven at each (frequency, pitch); speed is the centre-of-mass
/// displacement along the heading over the run.
fn velocity_sweep(config: &ScenarioConfig) -> Result<(VelocitySweep, Artifacts), CliError> {
    let v = &config.velocity_sweep;
    let setup = SceneSetup {
        radius: v.disc_radius,
        outliers: 0,
        ..config.setup
    };
    let base = scene(config, &setup)?;
    let locomotion = config.sim.swarm.locomotion;
    let mut points = Vec::new();
    for &f in &v.frequencies {
        for &pitch in &v.pitches_deg {
            let field = FieldCommand::rotating(config.drive.magnitude, f, 0.0, pitch.to_radians());
            let mut sim = Simulation::new(base.clone(), field, sim_config(config, config.sim.contrast))?;
            let start = sim.scene.center_of_mass();
            sim.run_until(v.duration)?;
            let heading = Vec2::new(field.yaw.cos(), field.yaw.sin());
            points.push(VelocityPoint {
                frequency_hz: f,
                pitch_deg: pitch,
                model_velocity: locomotion_velocity(field.pitch, f, &locomotion),
                measured_velocity: (sim.scene.center_of_mass() - start).dot(&heading) / sim.time(),
            });
        }
    }
    let rows = points.iter().map(|p| {
        vec![
            fmt(p.frequency_hz),
            fmt(p.pitch_deg),
            fmt(p.model_velocity * 1e6),
            fmt(p.measured_velocity * 1e6),
        ]
    });
    let mut artifacts = Artifacts::default();
    artifacts.add(
        "velocity_sweep.csv",
        csv_bytes(
            &["frequency_hz", "pitch_deg", "model_velocity_um_s", "measured_velocity_um_s"],
            rows,
        )?,
    );
    let report = VelocitySweep { points };
    artifacts.add_json("summary.json", &report);
    Ok((report, artifacts))
}

/// Simulated particle totals seen during a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParticleLedger {
    pub initial: u64,
    pub min: u64,
    pub max: u64,
    pub observations: u64,
}

impl ParticleLedger {
    fn new(scene: &SwarmScene) -> Self {
        let n = scene.total_particles();
        Self {
            initial: n,
            min: n,
            max: n,
            observations: 1,
        }
    }

    fn observe(&mut self, scene: &SwarmScene) {
        let n = scene.total_particles();
        self.min = self.min.min(n);
        self.max = self.max.max(n);
        self.observations += 1;
    }

    pub fn conserved(&self) -> bool {
        self.min == self.initial && self.max == self.initial
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RectangleNavReport {
    pub completed: bool,
    pub waypoints: Vec<Vec2>,
    pub arrivals: Vec<Arrival>,
    /// Largest ground-truth distance from the planned leg, m.
    pub max_cross_track: f64,
    /// Half the shorter side of the swarm region when navigation began, m.
    pub region_half_width: f64,
    pub slot_means: Vec<f64>,
    pub nav_start_time: f64,
    pub nav_end_time: f64,
    pub final_time: f64,
    pub particles: ParticleLedger,
    #[serde(skip)]
    pub rows: Vec<NavLogRow>,
}

/// Steps one at a time to `time`, checking the particle total after every step.
fn step_until(sim: &mut Simulation, time: f64, ledger: &mut ParticleLedger) -> Result<(), CliError> {
    let target = (time / sim.config.dt - 1e-9).ceil().max(0.0) as u64;
    while sim.scene.step_index < target {
        sim.step()?;
        ledger.observe(&sim.scene);
    }
    while sim.frame_step(sim.frame_index) < sim.scene.step_index {
        sim.frame_index += 1;
    }
    Ok(())
}

/// Gathers the swarm under a flat rotating field, tilts the field and
/// drives the swarm around a rectangle anchored at its centroid, then
/// keeps stepping with the stopped field until `total_time`.
fn rectangle_nav(config: &ScenarioConfig) -> Result<(RectangleNavReport, Artifacts), CliError> {
    let r = &config.rectangle_nav;
    let (contrast, _) = calibrated_contrast(config)?;
    let mut sim = Simulation::new(
        scene(config, &config.setup)?,
        config.drive.field(0.0),
        sim_config(config, contrast),
    )?;
    let mut ledger = ParticleLedger::new(&sim.scene);

    // gathering ends on the first frame at or after aggregation_time, the
    // same instant a live session paused there would reach
    let mut k = sim.frame_index;
    while sim.frame_time(k) + 1e-9 < r.aggregation_time {
        k += 1;
    }
    let handover = sim.frame_time(k);
    step_until(&mut sim, handover, &mut ledger)?;
    sim.frame_index = k + 1;

    let tilted = FieldCommand {
        pitch: r.pitch_deg.to_radians(),
        ..sim.field
    };
    let field = retune(&sim.field, &tilted, sim.time());
    sim.set_field(field)?;
    let origin = ground_truth_centroid(&sim.scene, &sim.config.swarm)
        .ok_or_else(|| CliError::Runtime(format!("no swarm after {} s", sim.time())))?;
    let region_half_width = sim
        .region()
        .map(|reg| 0.5 * reg.rect.width().min(reg.rect.height()))
        .unwrap_or(0.0);
    let plan = plan_rectangle(origin, r.width, r.height, r.tolerance)
        .map_err(|e| CliError::in_section("rectangle_nav", e))?;
    let mut nav = NavRun::new(plan.clone(), sim.field, r.nav)?;
    let nav_start_time = sim.time();

    let mut artifacts = Artifacts::default();
    let mut frames = 0usize;
    while !nav.completed() && sim.time() < nav_start_time + r.timeout {
        let frame = sim.advance_frame()?;
        ledger.observe(&sim.scene);
        let cmd = nav.on_frame(&sim, &frame)?;
        sim.set_field(cmd)?;
        if config.export_frames && frames % magswarm_core::runner::SLOT_FRAMES == 0 {
            let name = format!("nav_slot{}", frames / magswarm_core::runner::SLOT_FRAMES);
            artifacts.add_frame(&name, sim.frame_index - 1, &frame, nav.roi.as_ref())?;
        }
        frames += 1;
    }
    nav.finish();
    let nav_end_time = sim.time();
    if !nav.completed() {
        tracing::warn!("navigation did not close the loop within {} s", r.timeout);
    }
    let end = r.total_time.max(sim.time());
    step_until(&mut sim, end, &mut ledger)?;

    let mut log = Vec::new();
    write_nav_log(&nav.rows, &mut log).map_err(|e| CliError::Runtime(e.to_string()))?;
    artifacts.add("nav_log.csv", log);
    let slots = nav
        .slot_means
        .iter()
        .enumerate()
        .map(|(i, m)| vec![i.to_string(), fmt(*m)]);
    artifacts.add("slots.csv", csv_bytes(&["slot", "mean_intensity"], slots)?);

    let report = RectangleNavReport {
        completed: nav.completed(),
        waypoints: plan.iter().map(|w| w.position).collect(),
        arrivals: nav.state.arrivals.clone(),
        max_cross_track: nav.max_cross_track,
        region_half_width,
        slot_means: nav.slot_means.clone(),
        nav_start_time,
        nav_end_time,
        final_time: sim.time(),
        particles: ledger,
        rows: nav.rows,
    };
    artifacts.add_json("summary.json", &report);
    Ok((report, artifacts))
}

/// Session settings matching `config`: same physics, scene, seed and
/// calibrated contrast, with the drive field running flat.
pub fn session_config(config: &ScenarioConfig) -> Result<magswarm_service::SessionConfig, CliError> {
    config.validate()?;
    let (contrast, _) = calibrated_contrast(config)?;
    Ok(magswarm_service::SessionConfig {
        seed: config.seed,
        particle: config.particle.spec(),
        fluid: config.fluid,
        setup: config.setup,
        sim: sim_config(config, contrast),
        field: config.drive.field(0.0),
        ..magswarm_service::SessionConfig::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::from_name(s.name()), Some(s));
        }
        assert_eq!(Scenario::from_name("nope"), None);
    }

    #[test]
    fn ledger_flags_any_change() {
        let mut scene = SwarmScene::new(
            magswarm_core::ParticleSpec::default(),
            magswarm_core::FluidSpec::default(),
            default_tank(),
            0,
        );
        scene.free_particles.push(Vec2::new(0.01, 0.01));
        let mut ledger = ParticleLedger::new(&scene);
        ledger.observe(&scene);
        assert!(ledger.conserved());
        scene.free_particles.pop();
        ledger.observe(&scene);
        assert!(!ledger.conserved());
    }

    #[test]
    fn small_velocity_sweep_runs() {
        let mut config = ScenarioConfig::default();
        config.velocity_sweep.frequencies = vec![6.0];
        config.velocity_sweep.pitches_deg = vec![0.0, 6.0];
        config.velocity_sweep.duration = 0.5;
        let (report, artifacts) = velocity_sweep(&config).unwrap();
        assert_eq!(report.points.len(), 2);
        assert!(report.points[0].measured_velocity.abs() < 1e-9);
        assert!(report.points[1].measured_velocity > 0.0);
        let csv = std::str::from_utf8(artifacts.get("velocity_sweep.csv").unwrap()).unwrap();
        assert_eq!(csv.lines().count(), 3);
    }
}
