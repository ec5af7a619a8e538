//! Scenario configuration: one TOML file, every field optional.
//!
//! Lengths are metres, fields tesla, densities µg/mm², angles degrees
//! where the name ends in `_deg`. A run manifest is also accepted as a
//! config; its `[config]` table is used.

use std::path::Path;

use magswarm_core::runner::{SceneSetup, SimConfig};
use magswarm_core::swarm::default_tank;
use magswarm_core::{FieldCommand, FluidSpec, NavSource, ParticleSpec, Vec2};
use magswarm_core::navigation::NavConfig;
use magswarm_core::magnetics::MAGNETITE_DENSITY;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seeds the scene layout and the speckle; `--seed` overrides it and
    /// `sim.render_seed` is always set from it.
    pub seed: u64,
    /// Write greymap frames next to the CSVs.
    pub export_frames: bool,
    pub particle: ParticleConfig,
    pub fluid: FluidSpec,
    pub sim: SimConfig,
    pub setup: SceneSetup,
    pub drive: DriveConfig,
    pub calibration: CalibrationConfig,
    pub orientation: OrientationSweepConfig,
    pub dynamic_contrast: DynamicContrastConfig,
    pub density_sweep: DensitySweepConfig,
    pub velocity_sweep: VelocitySweepConfig,
    pub rectangle_nav: RectangleNavConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            export_frames: true,
            particle: ParticleConfig::default(),
            fluid: FluidSpec::default(),
            sim: SimConfig {
                render_seed: 1,
                ..SimConfig::default()
            },
            setup: SceneSetup::default(),
            drive: DriveConfig::default(),
            calibration: CalibrationConfig::default(),
            orientation: OrientationSweepConfig::default(),
            dynamic_contrast: DynamicContrastConfig::default(),
            density_sweep: DensitySweepConfig::default(),
            velocity_sweep: VelocitySweepConfig::default(),
            rectangle_nav: RectangleNavConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleConfig {
    pub radius: f64,
    pub susceptibility: f64,
    /// Material density, kg/m³.
    pub material_density: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        let spec = ParticleSpec::default();
        Self {
            radius: spec.radius,
            susceptibility: spec.susceptibility,
            material_density: MAGNETITE_DENSITY,
        }
    }
}

impl ParticleConfig {
    pub fn spec(&self) -> ParticleSpec {
        ParticleSpec {
            radius: self.radius,
            susceptibility: self.susceptibility,
            mass_per_particle: self.material_density * 4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3),
        }
    }
}

/// The rotating field used to gather and image the swarm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub magnitude: f64,
    pub frequency: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            magnitude: 8e-3,
            frequency: 6.0,
        }
    }
}

impl DriveConfig {
    pub fn field(&self, pitch_deg: f64) -> FieldCommand {
        FieldCommand::rotating(self.magnitude, self.frequency, 0.0, pitch_deg.to_radians())
    }
}

/// Fit of the density response to `(density, mean intensity)` anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub anchors: Vec<[f64; 2]>,
    /// Half the depth span of the ROI the anchors were measured in, m.
    pub roi_half_depth: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            anchors: vec![[2.0, 51.9], [4.5, 73.7]],
            roi_half_depth: 0.75e-3,
        }
    }
}

/// Static-field orientation sweeps (`yaw-sweep`, `pitch-sweep`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrientationSweepConfig {
    /// Density of the imaged layer.
    pub density: f64,
    pub magnitude: f64,
    pub yaws_deg: Vec<f64>,
    /// Pitch held during `yaw-sweep`.
    pub pitch_deg: f64,
    /// Pitches visited by `pitch-sweep`.
    pub pitches_deg: Vec<f64>,
    /// Time for the chains to align after each change, s.
    pub settle: f64,
    pub frames_per_point: usize,
    /// ROI half-width as a fraction of the disc radius.
    pub roi_fraction: f64,
}

impl Default for OrientationSweepConfig {
    fn default() -> Self {
        Self {
            density: 4.5,
            magnitude: 8e-3,
            yaws_deg: (0..=12).map(|k| 15.0 * k as f64).collect(),
            pitch_deg: 0.0,
            pitches_deg: vec![0.0, 2.0, 4.0, 6.0],
            settle: 0.5,
            frames_per_point: 22,
            roi_fraction: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicContrastConfig {
    /// Density the disc is seeded at.
    pub seed_density: f64,
    pub frames: usize,
    /// Gathering time before the swarm trace, s.
    pub aggregation_time: f64,
    pub roi_fraction: f64,
    /// Spectral peak over median power that counts as a swarm.
    pub detection_factor: f64,
}

impl Default for DynamicContrastConfig {
    fn default() -> Self {
        Self {
            seed_density: 1.9,
            frames: 132,
            aggregation_time: 30.0,
            roi_fraction: 0.3,
            detection_factor: magswarm_core::sonography::DEFAULT_DETECTION_FACTOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySweepConfig {
    pub densities: Vec<f64>,
    pub frames_per_point: usize,
    pub roi_fraction: f64,
    /// Empty-scene pixel quantile taken as the noise floor.
    pub floor_quantile: f64,
}

impl Default for DensitySweepConfig {
    fn default() -> Self {
        Self {
            densities: vec![0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0],
            frames_per_point: 66,
            roi_fraction: 0.3,
            floor_quantile: 0.99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocitySweepConfig {
    pub frequencies: Vec<f64>,
    pub pitches_deg: Vec<f64>,
    /// Length of each run, s.
    pub duration: f64,
    pub disc_radius: f64,
}

impl Default for VelocitySweepConfig {
    fn default() -> Self {
        Self {
            frequencies: vec![4.0, 5.0, 6.0],
            pitches_deg: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0],
            duration: 5.0,
            disc_radius: 1.0e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RectangleNavConfig {
    pub aggregation_time: f64,
    pub pitch_deg: f64,
    pub width: f64,
    pub height: f64,
    pub tolerance: f64,
    pub nav: NavConfig,
    /// Navigation gives up after this long, s.
    pub timeout: f64,
    /// The scene is stepped with the stopped field until this time, s.
    pub total_time: f64,
}

impl Default for RectangleNavConfig {
    fn default() -> Self {
        Self {
            aggregation_time: 30.0,
            pitch_deg: 6.0,
            width: 0.5e-3,
            height: 0.25e-3,
            tolerance: 40e-6,
            nav: NavConfig {
                source: NavSource::GroundTruth,
                ..NavConfig::default()
            },
            timeout: 60.0,
            total_time: 60.0,
        }
    }
}

fn check(ok: bool, field: &str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::invalid(field, reason))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl ScenarioConfig {
    /// Reads a config or manifest file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::invalid("config", e.message()))?;
        if table.contains_key("tool") {
            // a run manifest
            table = match table.remove("config") {
                Some(toml::Value::Table(t)) => t,
                _ => return Err(CliError::invalid("config", "manifest has no [config] table")),
            };
        }
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::invalid("config", e.message().to_string()))?;
        let seed = config.seed;
        Ok(config.with_seed(seed))
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.sim.render_seed = seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.particle.spec().validate().map_err(|e| CliError::in_section("particle", e))?;
        check(positive(self.particle.material_density), "particle.material_density", "must be > 0")?;
        self.fluid.validate().map_err(|e| CliError::in_section("fluid", e))?;
        check(self.sim.dt > 0.0 && self.sim.dt <= 0.01, "sim.dt", "must lie in (0, 0.01] s")?;
        self.sim.swarm.validate().map_err(|e| CliError::in_section("sim.swarm", e))?;
        self.sim.probe.validate().map_err(|e| CliError::in_section("sim.probe", e))?;
        self.sim.contrast.validate().map_err(|e| CliError::in_section("sim.contrast", e))?;

        let s = &self.setup;
        check(positive(s.radius), "setup.radius", "must be > 0")?;
        check(positive(s.spacing), "setup.spacing", "must be > 0")?;
        check((0.0..0.5).contains(&s.jitter), "setup.jitter", "must lie in [0, 0.5)")?;
        check(s.chain_len >= 2, "setup.chain_len", "must be >= 2")?;
        check(positive(s.initial_density), "setup.initial_density", "must be > 0")?;
        check(
            default_tank().inset(s.radius.max(s.outlier_distance)).contains(&s.center),
            "setup.center",
            "disc and outliers must fit in the tank",
        )?;

        check(positive(self.drive.magnitude), "drive.magnitude", "must be > 0")?;
        check(positive(self.drive.frequency), "drive.frequency", "must be > 0")?;

        let c = &self.calibration;
        if c.enabled {
            check(c.anchors.len() >= 2, "calibration.anchors", "need at least two anchors")?;
            check(
                c.anchors.iter().all(|a| a[0] >= 0.0 && (0.0..=255.0).contains(&a[1])),
                "calibration.anchors",
                "each anchor is [density >= 0, intensity in 0..=255]",
            )?;
            check(positive(c.roi_half_depth), "calibration.roi_half_depth", "must be > 0")?;
        }

        let o = &self.orientation;
        check(positive(o.density), "orientation.density", "must be > 0")?;
        check(positive(o.magnitude), "orientation.magnitude", "must be > 0")?;
        check(!o.yaws_deg.is_empty(), "orientation.yaws_deg", "must not be empty")?;
        check(o.yaws_deg.iter().all(|y| y.is_finite()), "orientation.yaws_deg", "must be finite")?;
        let pitch_ok = |p: &f64| (0.0..90.0).contains(p);
        check(pitch_ok(&o.pitch_deg), "orientation.pitch_deg", "must lie in [0, 90)")?;
        check(
            !o.pitches_deg.is_empty() && o.pitches_deg.iter().all(pitch_ok),
            "orientation.pitches_deg",
            "must be non-empty, each in [0, 90)",
        )?;
        check(o.settle >= 0.0, "orientation.settle", "must be >= 0")?;
        check(o.frames_per_point > 0, "orientation.frames_per_point", "must be > 0")?;
        check(positive(o.roi_fraction) && o.roi_fraction < 1.0, "orientation.roi_fraction", "must lie in (0, 1)")?;

        let d = &self.dynamic_contrast;
        check(positive(d.seed_density), "dynamic_contrast.seed_density", "must be > 0")?;
        check(d.frames >= 8, "dynamic_contrast.frames", "must be >= 8")?;
        check(d.aggregation_time >= 0.0, "dynamic_contrast.aggregation_time", "must be >= 0")?;
        check(positive(d.roi_fraction) && d.roi_fraction < 1.0, "dynamic_contrast.roi_fraction", "must lie in (0, 1)")?;
        check(positive(d.detection_factor), "dynamic_contrast.detection_factor", "must be > 0")?;

        let ds = &self.density_sweep;
        check(
            !ds.densities.is_empty() && ds.densities.iter().all(|&r| positive(r)),
            "density_sweep.densities",
            "must be non-empty and positive",
        )?;
        check(ds.frames_per_point > 0, "density_sweep.frames_per_point", "must be > 0")?;
        check(positive(ds.roi_fraction) && ds.roi_fraction < 1.0, "density_sweep.roi_fraction", "must lie in (0, 1)")?;
        check(ds.floor_quantile > 0.0 && ds.floor_quantile < 1.0, "density_sweep.floor_quantile", "must lie in (0, 1)")?;

        let v = &self.velocity_sweep;
        check(
            !v.frequencies.is_empty() && v.frequencies.iter().all(|&f| positive(f)),
            "velocity_sweep.frequencies",
            "must be non-empty and positive",
        )?;
        check(
            !v.pitches_deg.is_empty() && v.pitches_deg.iter().all(pitch_ok),
            "velocity_sweep.pitches_deg",
            "must be non-empty, each in [0, 90)",
        )?;
        check(positive(v.duration), "velocity_sweep.duration", "must be > 0")?;
        check(positive(v.disc_radius), "velocity_sweep.disc_radius", "must be > 0")?;

        let r = &self.rectangle_nav;
        check(r.aggregation_time >= 0.0, "rectangle_nav.aggregation_time", "must be >= 0")?;
        check(pitch_ok(&r.pitch_deg), "rectangle_nav.pitch_deg", "must lie in [0, 90)")?;
        check(positive(r.width), "rectangle_nav.width", "must be > 0")?;
        check(positive(r.height), "rectangle_nav.height", "must be > 0")?;
        check(positive(r.tolerance), "rectangle_nav.tolerance", "must be > 0")?;
        check(positive(r.timeout), "rectangle_nav.timeout", "must be > 0")?;
        check(r.total_time >= r.aggregation_time, "rectangle_nav.total_time", "must be >= aggregation_time")?;
        check(r.nav.loss_timeout >= 0.0, "rectangle_nav.nav.loss_timeout", "must be >= 0")?;
        Ok(())
    }

    /// Rectangle ROI of half-width `fraction · radius` around the disc centre.
    pub fn center_rect(&self, fraction: f64) -> magswarm_core::Rect {
        let half = fraction * self.setup.radius;
        magswarm_core::Rect::from_center(self.setup.center, 2.0 * half, 2.0 * half)
    }

    /// Depth span of a ROI centred on the disc.
    pub fn roi_depth_range(&self) -> (f64, f64) {
        let probe = &self.sim.probe;
        let depth = probe.depth_of(&self.setup.center);
        (depth - self.calibration.roi_half_depth, depth + self.calibration.roi_half_depth)
    }

    pub fn disc_center(&self) -> Vec2 {
        self.setup.center
    }
}
