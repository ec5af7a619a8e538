//! Rolling locomotion of a tilted rotating swarm over the substrate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Friction-asymmetry locomotion model `v = k·ω·r·sin γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocomotionParams {
    /// Dimensionless friction-asymmetry coefficient `k`.
    pub friction_coefficient: f64,
    /// Effective rolling radius `r`, metres.
    pub effective_radius: f64,
}

/// Pitch used for the reference 75 µm/s run.
pub const REFERENCE_PITCH_DEG: f64 = 6.0;
pub const REFERENCE_FREQUENCY: f64 = 6.0;
pub const REFERENCE_SPEED: f64 = 75e-6;
pub const DEFAULT_EFFECTIVE_RADIUS: f64 = 100e-6;

impl LocomotionParams {
    /// Fits `k` so that `(pitch, frequency)` moves at `speed`.
    pub fn calibrated(pitch: f64, frequency: f64, speed: f64, effective_radius: f64) -> Self {
        let k = speed / (2.0 * PI * frequency * effective_radius * pitch.sin());
        Self {
            friction_coefficient: k,
            effective_radius,
        }
    }
}

impl Default for LocomotionParams {
    fn default() -> Self {
        Self::calibrated(
            REFERENCE_PITCH_DEG.to_radians(),
            REFERENCE_FREQUENCY,
            REFERENCE_SPEED,
            DEFAULT_EFFECTIVE_RADIUS,
        )
    }
}

/// Translational speed, m/s.
pub fn locomotion_velocity(pitch: f64, frequency: f64, params: &LocomotionParams) -> f64 {
    params.friction_coefficient * 2.0 * PI * frequency * params.effective_radius * pitch.sin()
}
