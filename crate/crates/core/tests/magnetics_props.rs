use std::f64::consts::PI;

use magswarm_core::magnetics::*;
use magswarm_core::Vec2;
use proptest::prelude::*;

fn chain(n: u32) -> ChainState {
    ChainState::new(n, Vec2::zeros(), 0.0).unwrap()
}

fn lag(n: u32, spec: &ParticleSpec, fluid: &FluidSpec, b: f64, f: f64) -> f64 {
    match phase_lag(&chain(n), spec, fluid, &FieldCommand::rotating(b, f, 0.0, 0.0)).unwrap() {
        TorqueBalance::Synchronous { phase_lag } => phase_lag,
        other => panic!("expected synchrony, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn torque_balance_identity(
        n in 3u32..200,
        radius in 50e-9f64..2e-6,
        chi in 0.1f64..5.0,
        eta in 0.5e-3f64..20e-3,
        b in 1e-3f64..20e-3,
        s in 0.0f64..0.999,
    ) {
        let spec = ParticleSpec::new(radius, chi).unwrap();
        let fluid = FluidSpec::new(eta).unwrap();
        let c = chain(n);
        // the rate that demands exactly sin 2α = s
        let omega = s * critical_rotation_rate(n, &spec, &fluid, b).unwrap();
        let alpha = 0.5 * s.asin();
        let magnetic = chain_magnetic_torque(&c, &spec, b, alpha).unwrap();
        let drag = chain_drag_torque(&c, &spec, &fluid, omega).unwrap();
        let scale = magnetic.abs().max(drag.abs()).max(f64::MIN_POSITIVE);
        prop_assert!((magnetic - drag).abs() / scale < 1e-9, "{magnetic} vs {drag}");
        let ratio = synchrony_ratio(n, &spec, &fluid, b, omega).unwrap();
        prop_assert!((ratio - s).abs() < 1e-9);
    }

    #[test]
    fn tangential_force_is_odd_in_alpha(alpha in -PI..PI, r in 0.1e-6f64..10e-6, m in 1e-20f64..1e-15) {
        let plus = pair_force(m, r, alpha).unwrap();
        let minus = pair_force(m, r, -alpha).unwrap();
        prop_assert!((plus.tangential + minus.tangential).abs() <= 1e-12 * plus.tangential.abs().max(1e-300));
        prop_assert!((plus.radial - minus.radial).abs() <= 1e-12 * plus.radial.abs().max(1e-300));
    }

    #[test]
    fn synchronous_lag_lies_in_stable_branch(n in 3u32..100, f in 0.0f64..30.0, b in 1e-3f64..20e-3) {
        let spec = ParticleSpec::default();
        let fluid = FluidSpec::default();
        let field = FieldCommand::rotating(b, f, 0.0, 0.0);
        if let TorqueBalance::Synchronous { phase_lag } = phase_lag(&chain(n), &spec, &fluid, &field).unwrap() {
            prop_assert!((0.0..=PI / 4.0).contains(&phase_lag));
        }
    }
}

#[test]
fn tangential_force_vanishes_at_right_angles() {
    for k in -4..=4 {
        let f = pair_force(1e-17, 1e-6, k as f64 * PI / 2.0).unwrap();
        let scale = pair_force(1e-17, 1e-6, PI / 4.0).unwrap().tangential;
        assert!(f.tangential.abs() < 1e-12 * scale, "k = {k}: {}", f.tangential);
    }
}

#[test]
fn phase_lag_monotone_on_grids() {
    let spec = ParticleSpec::default();
    let fluid = FluidSpec::default();
    let n = 10;
    let fc = step_out_frequency(&chain(n), &spec, &fluid, 8e-3).unwrap();

    // increasing in f
    let freqs: Vec<f64> = (1..=6).map(|k| fc * k as f64 / 7.0).collect();
    let lags: Vec<f64> = freqs.iter().map(|&f| lag(n, &spec, &fluid, 8e-3, f)).collect();
    assert!(lags.windows(2).all(|w| w[0] < w[1]), "{lags:?}");

    // increasing in viscosity
    let f = 0.3 * fc;
    let lags: Vec<f64> = [1.0, 1.3, 1.6, 1.9, 2.2]
        .iter()
        .map(|&k| lag(n, &spec, &FluidSpec::new(fluid.viscosity * k).unwrap(), 8e-3, f))
        .collect();
    assert!(lags.windows(2).all(|w| w[0] < w[1]), "{lags:?}");

    // decreasing in B
    let lags: Vec<f64> = [8e-3, 9e-3, 10e-3, 12e-3, 15e-3]
        .iter()
        .map(|&b| lag(n, &spec, &fluid, b, f))
        .collect();
    assert!(lags.windows(2).all(|w| w[0] > w[1]), "{lags:?}");
}

#[test]
fn ode_lag_is_constant_below_step_out() {
    let spec = ParticleSpec::default();
    let fluid = FluidSpec::default();
    let c = chain(10);
    let field = FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0);
    let trace = steady_rotation(&c, &spec, &fluid, &field).unwrap();
    let t_end = *trace.times.last().unwrap();
    let last_periods = 2.0 / field.frequency;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (t, phi) in trace.times.iter().zip(&trace.angles) {
        if *t >= t_end - last_periods {
            let l = field.azimuth_at(*t) - phi;
            lo = lo.min(l);
            hi = hi.max(l);
        }
    }
    assert!(hi - lo < 1e-6, "lag spread {}", hi - lo);
    let expected = lag(10, &spec, &fluid, 8e-3, 6.0);
    assert!((trace.steady_lag - expected).abs() < 1e-6);
}

#[test]
fn ode_slips_above_step_out() {
    let spec = ParticleSpec::default();
    let fluid = FluidSpec::default();
    let c = chain(10);
    let fc = step_out_frequency(&c, &spec, &fluid, 8e-3).unwrap();
    for k in [1.05, 1.5, 3.0] {
        let field = FieldCommand::rotating(8e-3, fc * k, 0.0, 0.0);
        let trace = steady_rotation(&c, &spec, &fluid, &field).unwrap();
        assert!(trace.mean_rotation_rate < field.angular_frequency(), "f = {k}·fc");
    }
}

#[test]
fn static_field_relaxes_without_overshoot() {
    let spec = ParticleSpec::default();
    let fluid = FluidSpec::default();
    let field = FieldCommand::static_field(8e-3, 0.0, 0.0);
    let c = ChainState::new(10, Vec2::zeros(), 0.3).unwrap();
    let trace = ode_rotation_oracle(&c, &spec, &fluid, &field, 1e-4, 0.5).unwrap();
    assert!(trace.angles.windows(2).all(|w| w[1] <= w[0] && w[1] >= 0.0));
    assert!(trace.angles.last().unwrap().abs() < 1e-6);
}
