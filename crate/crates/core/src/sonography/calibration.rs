use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::{chain_directivity, density_response, expected_pixel, ContrastModelParams, ProbeSpec, SonographyError};
use crate::magnetics::{ChainState, FieldCommand, FieldMode};
use crate::Vec2;

/// Orientation samples per half field period.
const PHASE_SAMPLES: usize = 72;
const DEPTH_SAMPLES: usize = 16;

/// Imaging geometry the calibration reproduces: a uniform layer of chains
/// aligned with `field`, seen through a ROI spanning `depth_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSetup {
    pub probe: ProbeSpec,
    /// Starting point; `density_scale` and `intensity_max` are fitted.
    pub params: ContrastModelParams,
    /// Shallowest and deepest ROI row centre, m.
    pub depth_range: (f64, f64),
    pub field: FieldCommand,
}

/// Fitted parameters with per-anchor residuals (model − target).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: ContrastModelParams,
    pub residuals: Vec<f64>,
}

fn orientation_factors(setup: &CalibrationSetup) -> Vec<f64> {
    let prop = setup.probe.propagation_dir;
    let field = &setup.field;
    let directivity_at = |phi: f64| {
        let mut c = ChainState::new(2, Vec2::zeros(), phi).expect("two particles form a chain");
        c.tilt = field.elevation_at_azimuth(phi);
        chain_directivity(&c, &prop, &setup.params)
    };
    match field.mode {
        FieldMode::Rotating if field.frequency > 0.0 => {
            let half_period = 0.5 / field.frequency;
            (0..PHASE_SAMPLES)
                .map(|k| directivity_at(field.azimuth_at(k as f64 * half_period / PHASE_SAMPLES as f64)))
                .collect()
        }
        _ => vec![directivity_at(field.yaw)],
    }
}

fn attenuation_factors(setup: &CalibrationSetup) -> Vec<f64> {
    let (d0, d1) = setup.depth_range;
    (0..DEPTH_SAMPLES)
        .map(|k| {
            let depth = d0 + (d1 - d0) * (k as f64 + 0.5) / DEPTH_SAMPLES as f64;
            setup.params.attenuation(depth) * setup.probe.gain
        })
        .collect()
}

fn mean_over(rho: f64, params: &ContrastModelParams, dirs: &[f64], atts: &[f64]) -> f64 {
    let resp = density_response(rho, params);
    let mut sum = 0.0;
    for d in dirs {
        for a in atts {
            sum += expected_pixel(resp * d * a + params.background, params.speckle_sigma);
        }
    }
    sum / (dirs.len() * atts.len()) as f64
}

/// Expected ROI mean intensity of a uniform layer at density `rho`,
/// averaged over field orientation, ROI depth and speckle.
pub fn expected_roi_mean(rho: f64, setup: &CalibrationSetup, params: &ContrastModelParams) -> f64 {
    let s = CalibrationSetup { params: *params, ..*setup };
    mean_over(rho, params, &orientation_factors(&s), &attenuation_factors(&s))
}

/// Least-squares fit of `density_scale` and `intensity_max` to
/// `(rho, target mean)` anchors.
pub fn calibrate(anchors: &[(f64, f64)], setup: &CalibrationSetup) -> Result<Calibration, SonographyError> {
    if anchors.len() < 2 {
        return Err(SonographyError::DegenerateAnchors(format!("{} anchor(s), need 2", anchors.len())));
    }
    let rho_min = anchors.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let rho_max = anchors.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    if !(rho_max - rho_min > 1e-9 * rho_max.abs().max(1.0)) {
        return Err(SonographyError::DegenerateAnchors("all anchors share one density".into()));
    }
    if anchors.iter().any(|&(r, t)| !(r >= 0.0) || !(0.0..=255.0).contains(&t)) {
        return Err(SonographyError::DegenerateAnchors("density must be >= 0, target in [0, 255]".into()));
    }
    setup.params.validate()?;
    setup.probe.validate()?;

    let dirs = orientation_factors(setup);
    let atts = attenuation_factors(setup);
    let with = |x: &Vector2<f64>| ContrastModelParams {
        density_scale: x[0].exp(),
        intensity_max: x[1].exp().min(255.0),
        ..setup.params
    };
    let residuals = |x: &Vector2<f64>| -> Vec<f64> {
        let p = with(x);
        anchors.iter().map(|&(r, t)| mean_over(r, &p, &dirs, &atts) - t).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    // Levenberg–Marquardt in log parameters keeps both positive
    let mut x = Vector2::new(setup.params.density_scale.ln(), setup.params.intensity_max.ln());
    let mut r = residuals(&x);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let h = 1e-6;
        let mut jt_j = Matrix2::zeros();
        let mut jt_r = Vector2::zeros();
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|i| {
                let mut xp = x;
                xp[i] += h;
                residuals(&xp).iter().zip(&r).map(|(a, b)| (a - b) / h).collect()
            })
            .collect();
        for k in 0..anchors.len() {
            let g = Vector2::new(cols[0][k], cols[1][k]);
            jt_j += g * g.transpose();
            jt_r += g * r[k];
        }
        let mut improved = false;
        for _ in 0..30 {
            let damped = jt_j + Matrix2::from_diagonal(&jt_j.diagonal()) * lambda + Matrix2::identity() * 1e-12;
            let Some(step) = damped.lu().solve(&(-jt_r)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = x + step;
            let rt = residuals(&trial);
            if cost(&rt) < cost(&r) {
                x = trial;
                r = rt;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved || cost(&r) < 1e-20 {
            break;
        }
    }
    let params = with(&x);
    if !params.density_scale.is_finite() || !params.intensity_max.is_finite() {
        return Err(SonographyError::CalibrationFailed("parameters diverged".into()));
    }
    Ok(Calibration { params, residuals: r })
}
