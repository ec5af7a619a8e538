//! Fixtures shared by the benchmarks.

use magswarm_core::runner::{build_scene, SceneSetup, SimConfig, Simulation};
use magswarm_core::swarm::default_tank;
use magswarm_core::{FieldCommand, FluidSpec, ParticleSpec};

/// Default scene seeded at `density` µg/mm², driven at 8 mT / 6 Hz.
pub fn simulation(density: f64) -> Simulation {
    let setup = SceneSetup { initial_density: density, ..SceneSetup::default() };
    let scene = build_scene(&setup, ParticleSpec::default(), FluidSpec::default(), default_tank(), 1)
        .expect("default scene builds");
    Simulation::new(scene, FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0), SimConfig::default())
        .expect("default config is valid")
}
