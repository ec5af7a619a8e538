use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{chain_directivity, density_response, ContrastModelParams, ProbeSpec, UltrasoundFrame};
use crate::swarm::{M2_TO_MM2, SwarmScene};
use crate::Vec2;

/// Smoothed area density (µg/mm²) and mass-weighted mean directivity on the
/// probe's pixel grid, row-major.
pub fn density_image(scene: &SwarmScene, probe: &ProbeSpec, params: &ContrastModelParams) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (probe.rows(), probe.cols());
    let mut mass = vec![0.0f64; rows * cols];
    let mut weighted = vec![0.0f64; rows * cols];

    let particle_mass = scene.simulated_particle_mass_ug();
    let sigma_px = params.smoothing / probe.pixel_pitch;
    let reach = (3.0 * sigma_px).ceil() as i64;
    let isotropic = params.isotropic_directivity();
    let mut splat = |pos: &Vec2, m: f64, dir: f64| {
        let (r, c) = probe.to_pixel(pos);
        let (rc, cc) = (r.floor() as i64, c.floor() as i64);
        if rc + reach < 0 || cc + reach < 0 || rc - reach >= rows as i64 || cc - reach >= cols as i64 {
            return;
        }
        // normalise over the whole kernel so mass leaving the frame is lost, not rescaled
        let mut norm = 0.0;
        for i in rc - reach..=rc + reach {
            for j in cc - reach..=cc + reach {
                let (dr, dc) = (i as f64 + 0.5 - r, j as f64 + 0.5 - c);
                norm += (-(dr * dr + dc * dc) / (2.0 * sigma_px * sigma_px)).exp();
            }
        }
        for i in (rc - reach).max(0)..=(rc + reach).min(rows as i64 - 1) {
            for j in (cc - reach).max(0)..=(cc + reach).min(cols as i64 - 1) {
                let (dr, dc) = (i as f64 + 0.5 - r, j as f64 + 0.5 - c);
                let w = (-(dr * dr + dc * dc) / (2.0 * sigma_px * sigma_px)).exp() / norm;
                let k = i as usize * cols + j as usize;
                mass[k] += w * m;
                weighted[k] += w * m * dir;
            }
        }
    };
    for chain in &scene.chains {
        let d = chain_directivity(chain, &probe.propagation_dir, params);
        splat(&chain.center, chain.n_particles as f64 * particle_mass, d);
    }
    for p in &scene.free_particles {
        splat(p, particle_mass, isotropic);
    }
    let pixel_area = probe.pixel_pitch * probe.pixel_pitch * M2_TO_MM2;
    for (m, w) in mass.iter_mut().zip(weighted.iter_mut()) {
        *w = if *m > 0.0 { *w / *m } else { 0.0 };
        *m /= pixel_area;
    }
    (mass, weighted)
}

/// Renders one frame of `scene`. Deterministic in `(scene, probe, params, seed)`.
pub fn render_frame(
    scene: &SwarmScene,
    probe: &ProbeSpec,
    params: &ContrastModelParams,
    seed: u64,
) -> UltrasoundFrame {
    let (rows, cols) = (probe.rows(), probe.cols());
    let (density, directivity) = density_image(scene, probe, params);
    let sigma = params.speckle_sigma;
    let mu = -0.5 * sigma * sigma;
    let mut pixels = vec![0u8; rows * cols];
    pixels.par_chunks_mut(cols).enumerate().for_each(|(row, out)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        let depth = (row as f64 + 0.5) * probe.pixel_pitch;
        let scale = params.attenuation(depth) * probe.gain;
        for (col, px) in out.iter_mut().enumerate() {
            let k = row * cols + col;
            let signal = density_response(density[k], params) * directivity[k] * scale;
            let z: f64 = rng.sample(StandardNormal);
            let value = (signal + params.background) * (mu + sigma * z).exp();
            *px = value.round().clamp(0.0, 255.0) as u8;
        }
    });

    UltrasoundFrame {
        width: cols,
        height: rows,
        pixels,
        pixel_pitch: probe.pixel_pitch,
        timestamp: scene.time,
    }
}

/// Expected clipped pixel value `E[min(x·S, 255)]` for unit-mean log-normal speckle `S`.
pub fn expected_pixel(x: f64, speckle_sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if speckle_sigma == 0.0 {
        return x.min(255.0);
    }
    let s = speckle_sigma;
    let mu = -0.5 * s * s;
    let n = Normal::standard();
    let ln_k = (255.0 / x).ln();
    x * n.cdf((ln_k - mu - s * s) / s) + 255.0 * (1.0 - n.cdf((ln_k - mu) / s))
}
