//! Rotating-field nanoparticle swarm simulation.
//!
//! * [`magnetics`]: induced dipoles, chain torques, phase lag and step-out.
//! * [`swarm`]: agent-based chain aggregation, disassembly and locomotion.
//! * [`sonography`]: synthetic B-mode frames and ROI intensity analytics.
//! * [`navigation`]: waypoint plans and closed-loop steering of the swarm.
//! * [`runner`]: the frame-paced simulation loop shared by batch scenarios
//!   and the live session service.

// `!(x > 0.0)` is used on purpose so NaN fails parameter checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod magnetics;
pub mod navigation;
pub mod runner;
pub mod sonography;
pub mod swarm;

pub use geometry::{Rect, Vec2};
pub use magnetics::{ChainState, FieldCommand, FieldMode, FluidSpec, ParticleSpec, TorqueBalance};
pub use navigation::{NavSource, NavState, Waypoint};
pub use sonography::{ContrastModelParams, IntensityTrace, ProbeSpec, Roi, UltrasoundFrame};
pub use swarm::{DensityGrid, LocomotionParams, SwarmParams, SwarmRegion, SwarmScene};

use thiserror::Error;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Any error raised by the simulation crates.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Magnetics(#[from] magnetics::MagneticsError),
    #[error(transparent)]
    Swarm(#[from] swarm::SwarmError),
    #[error(transparent)]
    Sonography(#[from] sonography::SonographyError),
    #[error(transparent)]
    Navigation(#[from] navigation::NavigationError),
}
