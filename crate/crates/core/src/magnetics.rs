//! Dipolar magnetics of paramagnetic particle chains.
//!
//! Closed-form expressions for the induced moment, the pair force between
//! neighbouring particles, the magnetic and viscous torques on a rigid chain,
//! and the synchronous phase lag they balance to. A fixed-step RK4
//! integration of the overdamped rotation law serves as an independent
//! numeric check of the closed forms and as the estimator of the slip rate
//! once a chain has stepped out.
//!
//! Field convention: the closed forms are written in terms of the applied
//! field strength `H = B / µ0`, with the dipole moment carried in the
//! Kennelly convention (`µ = µ0 m`). Commands carry the flux density `B` in
//! tesla and are converted at the boundary.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

/// Vacuum permeability, H/m.
pub const MU_0: f64 = 4.0e-7 * PI;

/// Bulk density of magnetite, kg/m³.
pub const MAGNETITE_DENSITY: f64 = 5170.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagneticsError {
    #[error("a chain needs at least 2 particles, got {0}")]
    NotAChain(u32),
    #[error("shape factor singular at N=2")]
    ShapeFactorSingular,
    #[error("singular separation r = {0}")]
    SingularSeparation(f64),
    #[error("field magnitude must be positive")]
    ZeroField,
    #[error("operation requires a rotating field")]
    NotRotating,
    #[error("unstable integration step at t = {time}: |dphi| = {delta} rad, reduce dt")]
    UnstableStep { time: f64, delta: f64 },
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, MagneticsError>;

fn invalid(name: &'static str, reason: impl Into<String>) -> MagneticsError {
    MagneticsError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// A spherical paramagnetic particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    /// Radius `a`, metres.
    pub radius: f64,
    /// Magnetic susceptibility `χ`, dimensionless.
    pub susceptibility: f64,
    /// Mass of one particle, kilograms.
    pub mass_per_particle: f64,
}

impl ParticleSpec {
    /// Particle of the given radius with magnetite density.
    pub fn new(radius: f64, susceptibility: f64) -> Result<Self> {
        let spec = Self {
            radius,
            susceptibility,
            mass_per_particle: MAGNETITE_DENSITY * sphere_volume(radius),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid("radius", "must be > 0"));
        }
        if !(self.susceptibility > 0.0 && self.susceptibility.is_finite()) {
            return Err(invalid("susceptibility", "must be > 0"));
        }
        if !(self.mass_per_particle > 0.0 && self.mass_per_particle.is_finite()) {
            return Err(invalid("mass_per_particle", "must be > 0"));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        sphere_volume(self.radius)
    }
}

impl Default for ParticleSpec {
    /// 500 nm diameter magnetite, χ = 1.
    fn default() -> Self {
        Self::new(250e-9, 1.0).expect("default particle spec is valid")
    }
}

fn sphere_volume(radius: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluidSpec {
    /// Dynamic viscosity `η`, Pa·s.
    pub viscosity: f64,
}

impl FluidSpec {
    pub fn new(viscosity: f64) -> Result<Self> {
        let fluid = Self { viscosity };
        fluid.validate()?;
        Ok(fluid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return Err(invalid("viscosity", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for FluidSpec {
    /// 2 wt% PVP solution, taken as 2 mPa·s.
    fn default() -> Self {
        Self { viscosity: 2e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    Static,
    Rotating,
}

/// The external field program.
///
/// For a static field, `yaw` is the in-plane direction of the field and
/// `pitch` its elevation above the imaging plane. For a rotating field, the
/// field turns counter-clockwise (seen from +z) inside the plane whose normal
/// is tilted by `pitch` towards the in-plane direction `yaw`; `yaw` is also
/// the heading of the resulting rolling locomotion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCommand {
    /// Flux density `B`, tesla.
    pub magnitude: f64,
    /// Yaw `α`, radians.
    pub yaw: f64,
    /// Pitch `γ`, radians.
    pub pitch: f64,
    pub mode: FieldMode,
    /// Rotations per second (rotating mode only).
    pub frequency: f64,
    /// Rotation phase at t = 0, radians.
    pub phase0: f64,
}

impl FieldCommand {
    pub fn off() -> Self {
        Self {
            magnitude: 0.0,
            yaw: 0.0,
            pitch: 0.0,
            mode: FieldMode::Static,
            frequency: 0.0,
            phase0: 0.0,
        }
    }

    pub fn static_field(magnitude: f64, yaw: f64, pitch: f64) -> Self {
        Self {
            magnitude,
            yaw,
            pitch,
            mode: FieldMode::Static,
            frequency: 0.0,
            phase0: 0.0,
        }
    }

    pub fn rotating(magnitude: f64, frequency: f64, yaw: f64, pitch: f64) -> Self {
        Self {
            magnitude,
            yaw,
            pitch,
            mode: FieldMode::Rotating,
            frequency,
            phase0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(invalid("magnitude", "must be >= 0"));
        }
        if !(self.frequency >= 0.0 && self.frequency.is_finite()) {
            return Err(invalid("frequency", "must be >= 0"));
        }
        if !(self.pitch >= 0.0 && self.pitch < FRAC_PI_2) {
            return Err(invalid("pitch", "must lie in [0, pi/2)"));
        }
        if !self.yaw.is_finite() || !self.phase0.is_finite() {
            return Err(invalid("yaw", "must be finite"));
        }
        Ok(())
    }

    /// Field strength `H`, A/m.
    pub fn strength(&self) -> f64 {
        self.magnitude / MU_0
    }

    /// Drive angular frequency `ω = 2πf`; zero for static fields.
    pub fn angular_frequency(&self) -> f64 {
        match self.mode {
            FieldMode::Rotating => 2.0 * PI * self.frequency,
            FieldMode::Static => 0.0,
        }
    }

    /// Unit direction of the field at time `t`.
    pub fn direction_at(&self, t: f64) -> [f64; 3] {
        let (sa, ca) = self.yaw.sin_cos();
        match self.mode {
            FieldMode::Static => {
                let (sg, cg) = self.pitch.sin_cos();
                [cg * ca, cg * sa, sg]
            }
            FieldMode::Rotating => {
                let (sg, cg) = self.pitch.sin_cos();
                let (sp, cp) = (self.phase0 + self.angular_frequency() * t).sin_cos();
                // e1 = (-sin a, cos a, 0), e2 = n x e1 = (-cos g cos a, -cos g sin a, sin g)
                [
                    -cp * sa - sp * cg * ca,
                    cp * ca - sp * cg * sa,
                    sp * sg,
                ]
            }
        }
    }

    /// In-plane azimuth of the field at time `t`, continuous in `t`.
    ///
    /// With zero pitch the rotating azimuth is `phase0 + yaw + π/2 + ωt`.
    pub fn azimuth_at(&self, t: f64) -> f64 {
        match self.mode {
            FieldMode::Static => self.yaw,
            FieldMode::Rotating if self.pitch == 0.0 => {
                self.phase0 + self.yaw + FRAC_PI_2 + self.angular_frequency() * t
            }
            FieldMode::Rotating => {
                let psi = self.phase0 + self.angular_frequency() * t;
                let d = self.direction_at(t);
                let raw = d[1].atan2(d[0]);
                // unwrap against the untilted azimuth, which it never leaves by more than pi/2
                let reference = psi + self.yaw + FRAC_PI_2;
                reference + wrap_pi(raw - reference)
            }
        }
    }

    /// Elevation of a chain lying in the field plane with in-plane azimuth `phi`.
    pub fn elevation_at_azimuth(&self, phi: f64) -> f64 {
        match self.mode {
            FieldMode::Static => self.pitch,
            FieldMode::Rotating => (-self.pitch.tan() * (phi - self.yaw).cos()).atan(),
        }
    }

    /// True when the field exerts any torque.
    pub fn is_active(&self) -> bool {
        self.magnitude > 0.0
    }
}

/// A rigid linear aggregate of particles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub n_particles: u32,
    /// Centre in imaging-plane coordinates, metres.
    pub center: Vec2,
    /// Axis azimuth in [0, 2π).
    pub axis_angle: f64,
    /// Out-of-plane tilt, radians.
    pub tilt: f64,
}

impl ChainState {
    pub fn new(n_particles: u32, center: Vec2, axis_angle: f64) -> Result<Self> {
        if n_particles < 2 {
            return Err(MagneticsError::NotAChain(n_particles));
        }
        Ok(Self {
            n_particles,
            center,
            axis_angle: wrap_two_pi(axis_angle),
            tilt: 0.0,
        })
    }

    /// Chain length `L = 2Na`.
    pub fn length(&self, spec: &ParticleSpec) -> f64 {
        2.0 * self.n_particles as f64 * spec.radius
    }

    pub fn set_axis_angle(&mut self, angle: f64) {
        self.axis_angle = wrap_two_pi(angle);
    }

    pub fn axis(&self) -> Vec2 {
        Vec2::new(self.axis_angle.cos(), self.axis_angle.sin())
    }

    /// The two chain ends.
    pub fn endpoints(&self, spec: &ParticleSpec) -> (Vec2, Vec2) {
        let half = 0.5 * self.length(spec) * self.axis();
        (self.center - half, self.center + half)
    }
}

/// Outcome of the torque balance for a chain in a rotating field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TorqueBalance {
    /// The chain follows the field with a constant lag in [0, π/4].
    Synchronous { phase_lag: f64 },
    /// The chain slips; its mean rotation rate in rad/s.
    StepOut { mean_rotation_rate: f64 },
}

impl TorqueBalance {
    pub fn is_synchronous(&self) -> bool {
        matches!(self, TorqueBalance::Synchronous { .. })
    }
}

/// Induced moment `µ = (4/3)πa³µ0χH`, Wb·m.
pub fn dipole_moment(spec: &ParticleSpec, magnitude: f64) -> f64 {
    let h = magnitude / MU_0;
    4.0 / 3.0 * PI * spec.radius.powi(3) * MU_0 * spec.susceptibility * h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairForce {
    /// Along `r̂`; positive is repulsive, as in the pair-force expression.
    pub radial: f64,
    /// Along `θ̂`.
    pub tangential: f64,
}

/// Force between two induced dipoles a distance `r` apart whose common
/// moment direction makes angle `alpha` with the separation vector.
pub fn pair_force(moment: f64, r: f64, alpha: f64) -> Result<PairForce> {
    if !(r > 0.0) {
        return Err(MagneticsError::SingularSeparation(r));
    }
    let prefactor = 3.0 * moment * moment / (4.0 * PI * MU_0 * r.powi(4));
    let c = alpha.cos();
    Ok(PairForce {
        radial: prefactor * (3.0 * c * c - 1.0),
        tangential: prefactor * (2.0 * alpha).sin(),
    })
}

fn check_chain(n: u32) -> Result<()> {
    match n {
        0 | 1 => Err(MagneticsError::NotAChain(n)),
        2 => Err(MagneticsError::ShapeFactorSingular),
        _ => Ok(()),
    }
}

/// Amplitude of the nearest-neighbour magnetic torque, `πµ0a³χ²N²H²/12`.
fn magnetic_torque_amplitude(n: u32, spec: &ParticleSpec, magnitude: f64) -> f64 {
    let h = magnitude / MU_0;
    let n = n as f64;
    PI * MU_0 * spec.radius.powi(3) * spec.susceptibility.powi(2) * n * n * h * h / 12.0
}

/// Magnetic torque on a chain lagging the field by `alpha`, N·m.
pub fn chain_magnetic_torque(
    chain: &ChainState,
    spec: &ParticleSpec,
    magnitude: f64,
    alpha: f64,
) -> Result<f64> {
    if chain.n_particles < 2 {
        return Err(MagneticsError::NotAChain(chain.n_particles));
    }
    Ok(magnetic_torque_amplitude(chain.n_particles, spec, magnitude) * (2.0 * alpha).sin())
}

/// Rotational shape factor `κ = 2N²/ln(N/2)` of a linear chain.
pub fn shape_factor(n: u32) -> Result<f64> {
    check_chain(n)?;
    let n = n as f64;
    Ok(2.0 * n * n / (n / 2.0).ln())
}

/// Rotational drag coefficient `κVη`, N·m·s.
fn rotational_drag(n: u32, spec: &ParticleSpec, fluid: &FluidSpec) -> Result<f64> {
    let kappa = shape_factor(n)?;
    let volume = n as f64 * spec.volume();
    Ok(kappa * volume * fluid.viscosity)
}

/// Viscous torque `κVηω` opposing rotation at `omega` rad/s.
pub fn chain_drag_torque(
    chain: &ChainState,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    omega: f64,
) -> Result<f64> {
    Ok(rotational_drag(chain.n_particles, spec, fluid)? * omega)
}

/// Largest rotation rate the magnetic torque can sustain, rad/s.
///
/// The overdamped law reads `dφ/dt = ω_c sin(2(θ_field − φ))`.
pub fn critical_rotation_rate(
    n: u32,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    magnitude: f64,
) -> Result<f64> {
    let drag = rotational_drag(n, spec, fluid)?;
    Ok(magnetic_torque_amplitude(n, spec, magnitude) / drag)
}

/// `s = 32Nηω / (µ0χ²H²ln(N/2))`, the value of `sin 2α` the balance demands.
///
/// Infinite when the field is off and `omega > 0`.
pub fn synchrony_ratio(
    n: u32,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    magnitude: f64,
    omega: f64,
) -> Result<f64> {
    check_chain(n)?;
    let nf = n as f64;
    let h = magnitude / MU_0;
    let denom = MU_0 * spec.susceptibility.powi(2) * h * h * (nf / 2.0).ln();
    if omega == 0.0 {
        return Ok(0.0);
    }
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(32.0 * nf * fluid.viscosity * omega / denom)
}

/// Steady phase lag of a chain in a rotating field.
pub fn phase_lag(
    chain: &ChainState,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    field: &FieldCommand,
) -> Result<TorqueBalance> {
    if field.mode != FieldMode::Rotating {
        return Err(MagneticsError::NotRotating);
    }
    let omega = field.angular_frequency();
    let s = synchrony_ratio(chain.n_particles, spec, fluid, field.magnitude, omega)?;
    if s < 1.0 {
        return Ok(TorqueBalance::Synchronous {
            phase_lag: 0.5 * s.asin(),
        });
    }
    if !field.is_active() {
        return Ok(TorqueBalance::StepOut {
            mean_rotation_rate: 0.0,
        });
    }
    let trace = steady_rotation(chain, spec, fluid, field)?;
    Ok(TorqueBalance::StepOut {
        mean_rotation_rate: trace.mean_rotation_rate,
    })
}

/// Drive frequency at which `sin 2α` reaches 1, Hz.
pub fn step_out_frequency(
    chain: &ChainState,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    magnitude: f64,
) -> Result<f64> {
    check_chain(chain.n_particles)?;
    if !(magnitude > 0.0) {
        return Err(MagneticsError::ZeroField);
    }
    let n = chain.n_particles as f64;
    let h = magnitude / MU_0;
    Ok(MU_0 * spec.susceptibility.powi(2) * h * h * (n / 2.0).ln()
        / (32.0 * n * fluid.viscosity * 2.0 * PI))
}

/// Largest step count [`ode_rotation_oracle`] accepts.
pub const MAX_ORACLE_STEPS: usize = 20_000_000;

/// Cap on the settling horizon of [`steady_rotation`], in units of `1/ω_c`.
const MAX_SETTLE_RATES: f64 = 2.0e4;

/// Output of [`ode_rotation_oracle`].
#[derive(Clone, Debug)]
pub struct RotationTrace {
    pub times: Vec<f64>,
    /// Unwrapped axis azimuth.
    pub angles: Vec<f64>,
    /// `θ_field − φ` at the final time, folded into (−π/2, π/2].
    pub steady_lag: f64,
    /// Mean `dφ/dt` over the trailing averaging window.
    pub mean_rotation_rate: f64,
}

impl RotationTrace {
    /// Mean `dφ/dt` over the last `window` seconds.
    pub fn mean_rate_over_last(&self, window: f64) -> f64 {
        let t_end = *self.times.last().expect("trace is never empty");
        let t_start = (t_end - window).max(self.times[0]);
        let i = self.times.partition_point(|&t| t < t_start);
        let span = t_end - self.times[i];
        if span <= 0.0 {
            return 0.0;
        }
        (self.angles[self.angles.len() - 1] - self.angles[i]) / span
    }
}

/// Integrates `κVη dφ/dt = Γ_m(θ_field(t) − φ)` with fixed-step RK4.
///
/// The rotating-field step must satisfy `dt ≤ 1/(100 f)`. A step that moves
/// the axis by more than π/4 is reported as [`MagneticsError::UnstableStep`].
pub fn ode_rotation_oracle(
    chain: &ChainState,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    field: &FieldCommand,
    dt: f64,
    t_end: f64,
) -> Result<RotationTrace> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(invalid("dt", "dt and t_end must be > 0"));
    }
    if field.mode == FieldMode::Rotating && field.frequency > 0.0 {
        let limit = 1.0 / (100.0 * field.frequency);
        if dt > limit * (1.0 + 1e-12) {
            return Err(invalid("dt", format!("must be <= 1/(100 f) = {limit}")));
        }
    }
    let rate = critical_rotation_rate(chain.n_particles, spec, fluid, field.magnitude)?;
    let rhs = |t: f64, phi: f64| rate * (2.0 * (field.azimuth_at(t) - phi)).sin();

    let steps = (t_end / dt).ceil();
    if !(steps <= MAX_ORACLE_STEPS as f64) {
        return Err(invalid("t_end", format!("needs {steps} steps, more than {MAX_ORACLE_STEPS}")));
    }
    let steps = steps as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut angles = Vec::with_capacity(steps + 1);
    // unwrap the initial angle next to the field so the lag starts in (-pi/2, pi/2]
    let theta0 = field.azimuth_at(0.0);
    let mut phi = theta0 - wrap_half_pi(theta0 - chain.axis_angle);
    times.push(0.0);
    angles.push(phi);
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = rhs(t, phi);
        let k2 = rhs(t + 0.5 * dt, phi + 0.5 * dt * k1);
        let k3 = rhs(t + 0.5 * dt, phi + 0.5 * dt * k2);
        let k4 = rhs(t + dt, phi + dt * k3);
        let delta = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if delta.abs() > FRAC_PI_4 || !delta.is_finite() {
            return Err(MagneticsError::UnstableStep { time: t, delta });
        }
        phi += delta;
        times.push((k + 1) as f64 * dt);
        angles.push(phi);
    }

    let t_final = steps as f64 * dt;
    let steady_lag = wrap_half_pi(field.azimuth_at(t_final) - phi);
    let window = match field.mode {
        FieldMode::Rotating if field.frequency > 0.0 => 10.0 / field.frequency,
        _ => 0.5 * t_final,
    }
    .min(0.5 * t_final);
    let mut trace = RotationTrace {
        times,
        angles,
        steady_lag,
        mean_rotation_rate: 0.0,
    };
    trace.mean_rotation_rate = trace.mean_rate_over_last(window);
    Ok(trace)
}

/// Runs [`ode_rotation_oracle`] long enough to pass the transient, halving
/// the step on instability.
pub fn steady_rotation(
    chain: &ChainState,
    spec: &ParticleSpec,
    fluid: &FluidSpec,
    field: &FieldCommand,
) -> Result<RotationTrace> {
    let rate = critical_rotation_rate(chain.n_particles, spec, fluid, field.magnitude)?;
    let omega = field.angular_frequency();
    let (mut dt, t_end) = steady_rotation_schedule(rate, omega, field.frequency);
    for _ in 0..8 {
        match ode_rotation_oracle(chain, spec, fluid, field, dt, t_end) {
            Err(MagneticsError::UnstableStep { .. }) => dt *= 0.5,
            other => return other,
        }
    }
    ode_rotation_oracle(chain, spec, fluid, field, dt, t_end)
}

/// Step and horizon for [`steady_rotation`].
pub fn steady_rotation_schedule(critical_rate: f64, omega: f64, frequency: f64) -> (f64, f64) {
    let mut dt = if critical_rate > 0.0 { 0.05 / critical_rate } else { f64::INFINITY };
    if frequency > 0.0 {
        dt = dt.min(1.0 / (100.0 * frequency));
    }
    if !dt.is_finite() {
        dt = 1e-3;
    }
    let s = if critical_rate > 0.0 { omega / critical_rate } else { f64::INFINITY };
    // time for the lag perturbation to decay by e^-35, or enough slips to average
    let settle = if s < 1.0 {
        35.0 / (2.0 * critical_rate * (1.0 - s * s).sqrt())
    } else if s.is_finite() && omega > critical_rate {
        4.0 * PI / (omega * omega - critical_rate * critical_rate).sqrt()
    } else {
        0.0
    };
    // both expressions diverge at s = 1
    let settle = if critical_rate > 0.0 { settle.min(MAX_SETTLE_RATES / critical_rate) } else { settle };
    let periods = if frequency > 0.0 { 20.0 / frequency } else { 0.0 };
    let t_end = (settle + periods).max(200.0 * dt);
    (dt, t_end)
}

/// Wraps to [0, 2π).
pub fn wrap_two_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

/// Wraps to (−π, π].
pub fn wrap_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Folds a director angle difference into (−π/2, π/2].
pub fn wrap_half_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(PI);
    if w > FRAC_PI_2 {
        w - PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn chain(n: u32) -> ChainState {
        ChainState::new(n, Vec2::zeros(), 0.0).unwrap()
    }

    // Eq. 1 evaluated symbol by symbol from the field strength.
    fn moment_oracle(a: f64, chi: f64, b: f64) -> f64 {
        let mu0 = 4.0 * PI * 1e-7;
        let h = b / mu0;
        let volume = (4.0 / 3.0) * PI * a * a * a;
        volume * mu0 * chi * h
    }

    #[test]
    fn moment_zero_field() {
        assert_eq!(dipole_moment(&ParticleSpec::default(), 0.0), 0.0);
    }

    #[test]
    fn moment_cubic_in_radius() {
        let small = ParticleSpec::new(250e-9, 1.3).unwrap();
        let large = ParticleSpec::new(500e-9, 1.3).unwrap();
        let ratio = dipole_moment(&large, 8e-3) / dipole_moment(&small, 8e-3);
        assert_relative_eq!(ratio, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn moment_matches_symbolic_oracle() {
        let spec = ParticleSpec::new(250e-9, 1.0).unwrap();
        let expected = moment_oracle(250e-9, 1.0, 8e-3);
        assert_relative_eq!(dipole_moment(&spec, 8e-3), expected, max_relative = 1e-12);
    }

    #[test]
    fn pair_force_special_angles() {
        let m = dipole_moment(&ParticleSpec::default(), 8e-3);
        let r: f64 = 500e-9;
        let pre = 3.0 * m * m / (4.0 * PI * MU_0 * r.powi(4));
        let aligned = pair_force(m, r, 0.0).unwrap();
        assert_eq!(aligned.tangential, 0.0);
        assert_relative_eq!(aligned.radial, 2.0 * pre, max_relative = 1e-12);

        let magic = pair_force(m, r, (1.0 / 3.0f64.sqrt()).acos()).unwrap();
        assert!(magic.radial.abs() < 1e-12 * pre);

        let peak = pair_force(m, r, FRAC_PI_4).unwrap().tangential;
        for k in 0..=90 {
            let alpha = k as f64 * PI / 180.0;
            assert!(pair_force(m, r, alpha).unwrap().tangential <= peak * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pair_force_rejects_zero_separation() {
        assert_eq!(
            pair_force(1.0, 0.0, 0.3),
            Err(MagneticsError::SingularSeparation(0.0))
        );
    }

    #[test]
    fn magnetic_torque_vanishes_when_aligned() {
        let spec = ParticleSpec::default();
        assert_eq!(chain_magnetic_torque(&chain(10), &spec, 8e-3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn magnetic_torque_equals_nearest_neighbour_sum() {
        let spec = ParticleSpec::new(250e-9, 1.0).unwrap();
        let (n, b, alpha) = (10u32, 8e-3, 0.2f64);
        // each of the N-1 bonds carries the torque of a dipole pair at contact,
        // and the bond sum is taken as N²/2 bonds' worth
        let m = moment_oracle(spec.radius, spec.susceptibility, b);
        let d = 2.0 * spec.radius;
        let per_bond = 3.0 * m * m / (4.0 * PI * MU_0 * d.powi(3));
        let expected = per_bond * (n as f64).powi(2) / 2.0 * (2.0 * alpha).sin();
        let got = chain_magnetic_torque(&chain(n), &spec, b, alpha).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn shape_factor_values() {
        assert_relative_eq!(shape_factor(4).unwrap(), 32.0 / 2f64.ln(), max_relative = 1e-15);
        assert_eq!(shape_factor(2), Err(MagneticsError::ShapeFactorSingular));
        assert_eq!(shape_factor(1), Err(MagneticsError::NotAChain(1)));
    }

    #[test]
    fn drag_torque_oracle() {
        let spec = ParticleSpec::new(250e-9, 1.0).unwrap();
        let fluid = FluidSpec::new(2e-3).unwrap();
        let omega = 2.0 * PI * 6.0;
        assert_eq!(chain_drag_torque(&chain(10), &spec, &fluid, 0.0).unwrap(), 0.0);
        let n = 10.0f64;
        let kappa = 2.0 * n * n / (n / 2.0).ln();
        let volume = n * (4.0 / 3.0) * PI * 250e-9f64.powi(3);
        let expected = kappa * volume * 2e-3 * omega;
        let got = chain_drag_torque(&chain(10), &spec, &fluid, omega).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn phase_lag_without_drive_is_zero() {
        let field = FieldCommand::rotating(8e-3, 0.0, 0.0, 0.0);
        let lag = phase_lag(&chain(10), &ParticleSpec::default(), &FluidSpec::default(), &field);
        assert_eq!(lag, Ok(TorqueBalance::Synchronous { phase_lag: 0.0 }));
    }

    #[test]
    fn phase_lag_boundary_approaches_quarter_pi() {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let c = chain(10);
        let fc = step_out_frequency(&c, &spec, &fluid, 8e-3).unwrap();
        let just_below = FieldCommand::rotating(8e-3, fc * (1.0 - 1e-12), 0.0, 0.0);
        match phase_lag(&c, &spec, &fluid, &just_below).unwrap() {
            TorqueBalance::Synchronous { phase_lag } => {
                assert!((phase_lag - FRAC_PI_4).abs() < 1e-5, "{phase_lag}")
            }
            other => panic!("expected synchronous, got {other:?}"),
        }
    }

    #[test]
    fn phase_lag_errors() {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
        assert_eq!(
            phase_lag(&chain(2), &spec, &fluid, &field),
            Err(MagneticsError::ShapeFactorSingular)
        );
        let off = FieldCommand::rotating(0.0, 6.0, 0.0, 0.0);
        assert_eq!(
            phase_lag(&chain(10), &spec, &fluid, &off),
            Ok(TorqueBalance::StepOut { mean_rotation_rate: 0.0 })
        );
        let fixed = FieldCommand::static_field(8e-3, 0.0, 0.0);
        assert_eq!(
            phase_lag(&chain(10), &spec, &fluid, &fixed),
            Err(MagneticsError::NotRotating)
        );
    }

    #[test]
    fn phase_lag_matches_ode_at_reference_point() {
        let spec = ParticleSpec::new(250e-9, 1.0).unwrap();
        let fluid = FluidSpec::new(2e-3).unwrap();
        let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
        let c = chain(10);
        let closed = match phase_lag(&c, &spec, &fluid, &field).unwrap() {
            TorqueBalance::Synchronous { phase_lag } => phase_lag,
            other => panic!("{other:?}"),
        };
        let trace = steady_rotation(&c, &spec, &fluid, &field).unwrap();
        assert!((trace.steady_lag - closed).abs() < 1e-6);
    }

    #[test]
    fn step_out_scaling() {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let f1 = step_out_frequency(&chain(10), &spec, &fluid, 4e-3).unwrap();
        let f2 = step_out_frequency(&chain(10), &spec, &fluid, 8e-3).unwrap();
        assert_relative_eq!(f2 / f1, 4.0, max_relative = 1e-12);
        let mut previous = f64::INFINITY;
        for n in 6..60 {
            let f = step_out_frequency(&chain(n), &spec, &fluid, 8e-3).unwrap();
            assert!(f < previous);
            previous = f;
        }
        assert_eq!(
            step_out_frequency(&chain(10), &spec, &fluid, 0.0),
            Err(MagneticsError::ZeroField)
        );
    }

    #[test]
    fn oracle_static_equilibrium_and_relaxation() {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let field = FieldCommand::static_field(8e-3, 0.7, 0.0);
        let at_rest = ChainState::new(10, Vec2::zeros(), 0.7).unwrap();
        let trace = ode_rotation_oracle(&at_rest, &spec, &fluid, &field, 1e-4, 0.2).unwrap();
        assert!(trace.angles.iter().all(|&a| (a - 0.7).abs() < 1e-15));

        let offset = ChainState::new(10, Vec2::zeros(), 0.4).unwrap();
        let trace = ode_rotation_oracle(&offset, &spec, &fluid, &field, 1e-4, 0.2).unwrap();
        let gaps: Vec<f64> = trace.angles.iter().map(|a| 0.7 - a).collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] && w[1] >= 0.0));
        assert!(gaps.last().unwrap().abs() < 1e-6);
    }

    #[test]
    fn oracle_rejects_coarse_step() {
        let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
        let err = ode_rotation_oracle(
            &chain(10),
            &ParticleSpec::default(),
            &FluidSpec::default(),
            &field,
            1.0 / 300.0,
            1.0,
        );
        assert!(matches!(err, Err(MagneticsError::InvalidParameter { name: "dt", .. })));
    }

    #[test]
    fn oracle_flags_unstable_step() {
        // 20 mT on a short chain: the relaxation rate makes a 1 ms step blow past pi/4
        let field = FieldCommand::static_field(20e-3, 1.2, 0.0);
        let err = ode_rotation_oracle(
            &chain(3),
            &ParticleSpec::default(),
            &FluidSpec::default(),
            &field,
            1e-2,
            0.1,
        );
        assert!(matches!(err, Err(MagneticsError::UnstableStep { .. })));
    }

    #[test]
    fn steady_rotation_at_step_out_is_bounded() {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let c = chain(10);
        let fc = step_out_frequency(&c, &spec, &fluid, 8e-3).unwrap();
        for f in [fc, fc * (1.0 - 1e-12), fc * (1.0 + 1e-12)] {
            let field = FieldCommand::rotating(8e-3, f, 0.0, 0.0);
            let trace = steady_rotation(&c, &spec, &fluid, &field).unwrap();
            assert!(trace.times.len() < 1_000_000, "{}", trace.times.len());
        }
    }

    #[test]
    fn oracle_rejects_oversized_runs() {
        let field = FieldCommand::rotating(8e-3, 1.0, 0.0, 0.0);
        let r = ode_rotation_oracle(&chain(10), &ParticleSpec::default(), &FluidSpec::default(), &field, 1e-6, 1e3);
        assert!(matches!(r, Err(MagneticsError::InvalidParameter { name: "t_end", .. })));
    }

    #[test]
    fn step_out_slip_rate_matches_analytic() {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let c = chain(10);
        let fc = step_out_frequency(&c, &spec, &fluid, 8e-3).unwrap();
        let field = FieldCommand::rotating(8e-3, 1.5 * fc, 0.0, 0.0);
        let omega = field.angular_frequency();
        let wc = critical_rotation_rate(10, &spec, &fluid, 8e-3).unwrap();
        let analytic = omega - (omega * omega - wc * wc).sqrt();
        match phase_lag(&c, &spec, &fluid, &field).unwrap() {
            TorqueBalance::StepOut { mean_rotation_rate } => {
                assert!(mean_rotation_rate < omega);
                assert!((mean_rotation_rate - analytic).abs() < 0.05 * analytic);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tilted_rotation_geometry() {
        let field = FieldCommand::rotating(8e-3, 6.0, 0.3, 6f64.to_radians());
        for k in 0..50 {
            let t = k as f64 * 0.01;
            let d = field.direction_at(t);
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
            let az = field.azimuth_at(t);
            let elev = field.elevation_at_azimuth(az);
            assert_relative_eq!(elev, d[2].asin(), epsilon = 1e-12);
        }
        let flat = FieldCommand::rotating(8e-3, 6.0, 0.3, 0.0);
        assert_relative_eq!(flat.azimuth_at(0.0), 0.3 + FRAC_PI_2);
    }

    #[test]
    fn wrapping() {
        assert!(wrap_two_pi(-1e-20) < 2.0 * PI);
        assert_relative_eq!(wrap_half_pi(PI - 0.1), -0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_pi(3.0 * PI), PI, epsilon = 1e-12);
    }
}
