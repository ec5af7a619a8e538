use magswarm_core::runner::{build_scene, SceneSetup};
use magswarm_core::swarm::{default_tank, density_grid, SceneSnapshot, SwarmScene};
use magswarm_core::{FieldCommand, FluidSpec, ParticleSpec, SwarmParams, Vec2};
use proptest::prelude::*;

fn small_scene(center: Vec2, radius: f64, seed: u64) -> SwarmScene {
    let setup = SceneSetup {
        center,
        radius,
        outliers: 2,
        outlier_distance: 3.0 * radius,
        ..SceneSetup::default()
    };
    build_scene(&setup, ParticleSpec::default(), FluidSpec::default(), default_tank(), seed).unwrap()
}

fn field_strategy() -> impl Strategy<Value = FieldCommand> {
    (0.0f64..20e-3, 0.0f64..12.0, 0.0f64..std::f64::consts::TAU, 0.0f64..15.0, any::<bool>()).prop_map(
        |(b, f, yaw, pitch_deg, rotating)| {
            if rotating {
                FieldCommand::rotating(b, f, yaw, pitch_deg.to_radians())
            } else {
                FieldCommand::static_field(b, yaw, pitch_deg.to_radians())
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_conserve_particles_and_stay_in_tank(
        // near the left wall so locomotion and repulsion push against it
        x in 0.45e-3f64..3e-3,
        y in 2e-3f64..23e-3,
        radius in 0.3e-3f64..0.8e-3,
        seed in any::<u64>(),
        fields in prop::collection::vec(field_strategy(), 1..4),
    ) {
        let mut scene = small_scene(Vec2::new(x.max(radius + 0.1e-3), y), radius, seed);
        let params = SwarmParams { disassembly_rate: 5.0, region_interval: 20, ..SwarmParams::default() };
        let total = scene.total_particles();
        for field in &fields {
            for _ in 0..150 {
                scene.step(field, 1e-3, &params).unwrap();
                prop_assert_eq!(scene.total_particles(), total);
            }
            for c in &scene.chains {
                prop_assert!(scene.tank.contains(&c.center));
                let (a, b) = c.endpoints(&scene.spec);
                prop_assert!(scene.tank.contains(&a) && scene.tank.contains(&b), "chain end outside tank");
                prop_assert!(c.n_particles >= 2);
            }
            for p in &scene.free_particles {
                prop_assert!(scene.tank.contains(p));
            }
        }
    }

    #[test]
    fn density_grid_carries_total_mass(seed in any::<u64>(), radius in 0.5e-3f64..3e-3, cell in 0.1e-3f64..1e-3) {
        let scene = small_scene(Vec2::new(22.5e-3, 12.5e-3), radius, seed);
        let grid = density_grid(&scene, cell).unwrap();
        prop_assert!(grid.values.iter().all(|v| *v >= 0.0));
        let mass = grid.total_mass();
        prop_assert!((mass / scene.total_mass_ug() - 1.0).abs() < 1e-3, "{} vs {}", mass, scene.total_mass_ug());
        let smoothed = grid.box_smoothed(2);
        prop_assert!((smoothed.total_mass() / mass - 1.0).abs() < 1e-9);
    }
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let params = SwarmParams::default();
    let field = FieldCommand::rotating(8e-3, 6.0, 0.4, 4f64.to_radians());
    let run = || {
        let mut s = small_scene(Vec2::new(10e-3, 10e-3), 1.0e-3, 77);
        for _ in 0..1500 {
            s.step(&field, 1e-3, &params).unwrap();
        }
        s
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let bits = |s: &SwarmScene| s.chains.iter().map(|c| (c.center.x.to_bits(), c.axis_angle.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn snapshot_replay_is_bit_identical() {
    let params = SwarmParams { disassembly_rate: 1.0, ..SwarmParams::default() };
    let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
    let mut scene = small_scene(Vec2::new(22.5e-3, 12.5e-3), 1.2e-3, 5);
    for _ in 0..2000 {
        scene.step(&field, 1e-3, &params).unwrap();
    }
    let json = SceneSnapshot::capture(&scene, &field).to_json();
    let restored = SceneSnapshot::from_json(&json).unwrap();
    assert_eq!(restored.scene, scene);
    let mut replay = restored.scene;
    for _ in 0..2000 {
        scene.step(&field, 1e-3, &params).unwrap();
        replay.step(&restored.field, 1e-3, &params).unwrap();
    }
    assert_eq!(replay, scene);
}

#[test]
fn snapshot_rejects_foreign_documents() {
    let scene = small_scene(Vec2::new(22.5e-3, 12.5e-3), 0.5e-3, 1);
    let mut snap = SceneSnapshot::capture(&scene, &FieldCommand::off());
    snap.version = 99;
    assert!(SceneSnapshot::from_json(&snap.to_json()).is_err());
    assert!(SceneSnapshot::from_json("{\"format\":\"other\"}").is_err());
}

#[test]
fn flat_rotation_aggregates_in_place() {
    let setup = SceneSetup::default();
    let params = SwarmParams::default();
    let mut scene = build_scene(&setup, ParticleSpec::default(), FluidSpec::default(), default_tank(), 3).unwrap();
    let com0 = scene.center_of_mass();
    let grid0 = density_grid(&scene, params.grid_cell).unwrap();
    let core = magswarm_core::Rect::from_center(setup.center, setup.radius, setup.radius);
    let (mut sum, mut cells) = (0.0, 0.0);
    for iy in 0..grid0.ny {
        for ix in 0..grid0.nx {
            if core.contains_rect(&grid0.cell_rect(ix, iy, ix + 1, iy + 1)) {
                sum += grid0.get(ix, iy);
                cells += 1.0;
            }
        }
    }
    let before = sum / cells;
    assert!(scene.swarm_region(&params).is_none(), "no gathered region at seeding");

    let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
    let steps = 60_000;
    for _ in 0..steps {
        scene.step(&field, 1e-3, &params).unwrap();
    }
    let drift = (scene.center_of_mass() - com0).norm();
    assert!(drift < scene.spec.radius, "centre of mass drifted {drift} m");
    let region = scene.swarm_region(&params).expect("swarm gathered");
    assert!(region.mean_density > before, "{} <= {before}", region.mean_density);
    assert!(region.mean_density > 4.0, "{}", region.mean_density);
}
