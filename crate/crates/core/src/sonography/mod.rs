//! Synthetic B-mode imaging of the particle scene and ROI analytics.
//!
//! Backscatter is modelled, not propagated: each pixel's echo is the
//! saturating density response of the local (smoothed) area density, scaled
//! by the mean orientation directivity of the chains there, depth
//! attenuation and gain, on top of a faint gelatin background. Multiplicative
//! log-normal speckle and 8-bit quantization finish the frame.

mod analysis;
mod calibration;
mod export;
mod render;

pub use analysis::{
    alias_frequency, detect_swarm, dominant_frequency, power_spectrum, roi_mean_intensity, trace,
    DEFAULT_DETECTION_FACTOR,
};
pub use calibration::{calibrate, expected_roi_mean, Calibration, CalibrationSetup};
pub use export::{read_pgm, write_pgm, write_trace_csv, FrameMetadata};
pub use render::{density_image, expected_pixel, render_frame};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::magnetics::ChainState;
use crate::{Rect, Vec2};

#[derive(Debug, Error)]
pub enum SonographyError {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("region of interest is empty or outside the frame")]
    EmptyRoi,
    #[error("trace too short: {0} samples")]
    TraceTooShort(usize),
    #[error("trace has no modulation")]
    NoSpectralPeak,
    #[error("calibration anchors are degenerate: {0}")]
    DegenerateAnchors(String),
    #[error("calibration did not converge: {0}")]
    CalibrationFailed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> SonographyError {
    SonographyError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Linear-array probe on the tank wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSpec {
    /// Centre of the array face, tank coordinates (m).
    pub origin: Vec2,
    /// Unit propagation direction, in plane.
    pub propagation_dir: Vec2,
    pub imaging_depth: f64,
    /// Lateral extent of the image, m.
    pub aperture_width: f64,
    pub pixel_pitch: f64,
    pub frame_rate: f64,
    /// Abstract linear gain.
    pub gain: f64,
}

impl Default for ProbeSpec {
    /// Mid-wall probe looking across the 25 mm side of the tank.
    fn default() -> Self {
        Self {
            origin: Vec2::new(22.5e-3, 0.0),
            propagation_dir: Vec2::new(0.0, 1.0),
            imaging_depth: 30e-3,
            aperture_width: 38e-3,
            pixel_pitch: 0.1e-3,
            frame_rate: 22.0,
            gain: 2.0,
        }
    }
}

impl ProbeSpec {
    pub fn validate(&self) -> Result<(), SonographyError> {
        if (self.propagation_dir.norm() - 1.0).abs() > 1e-9 {
            return Err(invalid("propagation_dir", "must be unit length"));
        }
        if !(self.imaging_depth > 0.0) {
            return Err(invalid("imaging_depth", "must be > 0"));
        }
        if !(self.aperture_width > 0.0) {
            return Err(invalid("aperture_width", "must be > 0"));
        }
        if !(self.pixel_pitch > 0.0) {
            return Err(invalid("pixel_pitch", "must be > 0"));
        }
        if !(self.frame_rate > 0.0) {
            return Err(invalid("frame_rate", "must be > 0"));
        }
        if !(self.gain >= 0.0) {
            return Err(invalid("gain", "must be >= 0"));
        }
        Ok(())
    }

    /// Lateral image axis: propagation turned clockwise.
    pub fn lateral_dir(&self) -> Vec2 {
        Vec2::new(self.propagation_dir.y, -self.propagation_dir.x)
    }

    pub fn rows(&self) -> usize {
        (self.imaging_depth / self.pixel_pitch).round() as usize
    }

    pub fn cols(&self) -> usize {
        (self.aperture_width / self.pixel_pitch).round() as usize
    }

    /// Tank position of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> Vec2 {
        let lateral = (col as f64 + 0.5 - 0.5 * self.cols() as f64) * self.pixel_pitch;
        let depth = (row as f64 + 0.5) * self.pixel_pitch;
        self.origin + self.lateral_dir() * lateral + self.propagation_dir * depth
    }

    /// Continuous `(row, col)` of a tank position; pixel centres sit at `k + 0.5`.
    pub fn to_pixel(&self, p: &Vec2) -> (f64, f64) {
        let rel = p - self.origin;
        let row = rel.dot(&self.propagation_dir) / self.pixel_pitch;
        let col = rel.dot(&self.lateral_dir()) / self.pixel_pitch + 0.5 * self.cols() as f64;
        (row, col)
    }

    pub fn depth_of(&self, p: &Vec2) -> f64 {
        (p - self.origin).dot(&self.propagation_dir)
    }

    /// Pixels whose centres fall inside `rect`, or `None` when none do.
    pub fn roi_for_rect(&self, rect: &Rect) -> Option<Roi> {
        let corners = [
            rect.min,
            rect.max,
            Vec2::new(rect.min.x, rect.max.y),
            Vec2::new(rect.max.x, rect.min.y),
        ];
        let (mut r0, mut r1, mut c0, mut c1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for c in &corners {
            let (r, col) = self.to_pixel(c);
            r0 = r0.min(r);
            r1 = r1.max(r);
            c0 = c0.min(col);
            c1 = c1.max(col);
        }
        // first and last pixel index whose centre lies inside
        let row0 = (r0 - 0.5).ceil().max(0.0) as usize;
        let row1 = ((r1 - 0.5).floor() + 1.0).min(self.rows() as f64);
        let col0 = (c0 - 0.5).ceil().max(0.0) as usize;
        let col1 = ((c1 - 0.5).floor() + 1.0).min(self.cols() as f64);
        if row1 <= row0 as f64 || col1 <= col0 as f64 {
            return None;
        }
        Some(Roi {
            row0,
            col0,
            rows: row1 as usize - row0,
            cols: col1 as usize - col0,
        })
    }
}

/// One 8-bit B-mode image, row 0 nearest the probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UltrasoundFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities.
    pub pixels: Vec<u8>,
    pub pixel_pitch: f64,
    pub timestamp: f64,
}

impl UltrasoundFrame {
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }
}

/// Rectangle of pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Roi {
    pub fn full(frame: &UltrasoundFrame) -> Self {
        Self {
            row0: 0,
            col0: 0,
            rows: frame.height,
            cols: frame.width,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.rows > 0 && self.cols > 0 && self.row0 + self.rows <= height && self.col0 + self.cols <= width
    }
}

/// Mean ROI intensity per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityTrace {
    pub values: Vec<f64>,
    pub frame_rate: f64,
    /// Timestamp of the first sample, s.
    pub start_time: f64,
}

impl IntensityTrace {
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.frame_rate
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    pub fn peak_to_trough(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Contrast model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastModelParams {
    /// Directivity floor `ε` for chains parallel to propagation.
    pub directivity_floor: f64,
    /// Directivity exponent `p`.
    pub directivity_power: f64,
    /// Density scale `ρ0` of the saturating response, µg/mm².
    pub density_scale: f64,
    /// Response ceiling, intensity units.
    pub intensity_max: f64,
    /// Standard deviation of log speckle.
    pub speckle_sigma: f64,
    /// One-way amplitude loss, dB/cm of depth.
    pub attenuation_db_per_cm: f64,
    /// Mean echo of particle-free gelatin, intensity units.
    pub background: f64,
    /// Gaussian point-spread of the density field, m.
    pub smoothing: f64,
}

impl Default for ContrastModelParams {
    fn default() -> Self {
        Self {
            directivity_floor: 0.2,
            directivity_power: 2.0,
            density_scale: 2.3,
            intensity_max: 160.0,
            speckle_sigma: 0.35,
            // 0.5 dB/cm/MHz at a 10 MHz centre frequency
            attenuation_db_per_cm: 5.0,
            background: 4.0,
            smoothing: 0.15e-3,
        }
    }
}

impl ContrastModelParams {
    pub fn validate(&self) -> Result<(), SonographyError> {
        if !(self.directivity_floor > 0.0 && self.directivity_floor < 1.0) {
            return Err(invalid("directivity_floor", "must lie in (0, 1)"));
        }
        if !(self.directivity_power >= 1.0) {
            return Err(invalid("directivity_power", "must be >= 1"));
        }
        if !(self.density_scale > 0.0) {
            return Err(invalid("density_scale", "must be > 0"));
        }
        if !(self.intensity_max > 0.0 && self.intensity_max <= 255.0) {
            return Err(invalid("intensity_max", "must lie in (0, 255]"));
        }
        if !(self.speckle_sigma >= 0.0) {
            return Err(invalid("speckle_sigma", "must be >= 0"));
        }
        if !(self.attenuation_db_per_cm >= 0.0) {
            return Err(invalid("attenuation_db_per_cm", "must be >= 0"));
        }
        if !(self.background >= 0.0) {
            return Err(invalid("background", "must be >= 0"));
        }
        if !(self.smoothing > 0.0) {
            return Err(invalid("smoothing", "must be > 0"));
        }
        Ok(())
    }

    /// Amplitude factor after travelling `depth` metres.
    pub fn attenuation(&self, depth: f64) -> f64 {
        10f64.powf(-self.attenuation_db_per_cm * depth.max(0.0) * 100.0 / 20.0)
    }

    /// Directivity averaged over uniformly distributed in-plane orientations.
    pub fn isotropic_directivity(&self) -> f64 {
        let p = self.directivity_power;
        let mean_sin_p = gamma((p + 1.0) / 2.0) / (std::f64::consts::PI.sqrt() * gamma(p / 2.0 + 1.0));
        self.directivity_floor + (1.0 - self.directivity_floor) * mean_sin_p
    }

    /// Upper `quantile` of an empty-scene pixel.
    pub fn noise_floor(&self, quantile: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal};
        let z = Normal::standard().inverse_cdf(quantile);
        let mu = -0.5 * self.speckle_sigma * self.speckle_sigma;
        self.background * (mu + self.speckle_sigma * z).exp()
    }
}

/// Backscatter factor of a chain at angle `theta` to the propagation axis:
/// `ε + (1 − ε)|sin θ|^p`, maximal for a chain across the beam.
pub fn directivity(theta: f64, params: &ContrastModelParams) -> f64 {
    let eps = params.directivity_floor;
    eps + (1.0 - eps) * theta.sin().abs().powf(params.directivity_power)
}

/// Directivity of a chain whose 3D axis is set by its azimuth and tilt.
pub fn chain_directivity(chain: &ChainState, propagation: &Vec2, params: &ContrastModelParams) -> f64 {
    let (st, ct) = chain.tilt.sin_cos();
    let axis = [ct * chain.axis_angle.cos(), ct * chain.axis_angle.sin(), st];
    let cos_theta = (axis[0] * propagation.x + axis[1] * propagation.y).clamp(-1.0, 1.0);
    directivity(cos_theta.acos(), params)
}

/// Saturating intensity `I_max(1 − e^{−ρ/ρ0})` at area density `rho`.
pub fn density_response(rho: f64, params: &ContrastModelParams) -> f64 {
    params.intensity_max * (1.0 - (-rho.max(0.0) / params.density_scale).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn directivity_extremes() {
        let p = ContrastModelParams::default();
        assert_relative_eq!(directivity(FRAC_PI_2, &p), 1.0);
        assert_relative_eq!(directivity(0.0, &p), p.directivity_floor);
        assert_relative_eq!(directivity(PI, &p), p.directivity_floor, epsilon = 1e-12);
    }

    #[test]
    fn directivity_yaw_grid_is_symmetric_valley() {
        let p = ContrastModelParams::default();
        // yaw 0 puts the chain across a beam travelling along +y
        let values: Vec<f64> = (0..=12)
            .map(|k| directivity(FRAC_PI_2 - (15.0 * k as f64).to_radians(), &p))
            .collect();
        for k in 0..=12 {
            assert_relative_eq!(values[k], values[12 - k], epsilon = 1e-12);
        }
        assert!(values[..=6].windows(2).all(|w| w[1] < w[0]));
        assert!(values[6..].windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn density_response_shape() {
        let p = ContrastModelParams::default();
        assert_eq!(density_response(0.0, &p), 0.0);
        let mut last = 0.0;
        let mut last_slope = f64::INFINITY;
        for k in 1..100 {
            let rho = 0.1 * k as f64;
            let v = density_response(rho, &p);
            let slope = v - last;
            assert!(v > last && v < p.intensity_max);
            assert!(slope < last_slope);
            last = v;
            last_slope = slope;
        }
    }

    #[test]
    fn isotropic_directivity_for_square_law() {
        let p = ContrastModelParams::default();
        let numeric: f64 = (0..100_000)
            .map(|k| directivity((k as f64 + 0.5) * PI / 100_000.0, &p))
            .sum::<f64>()
            / 100_000.0;
        assert_relative_eq!(p.isotropic_directivity(), numeric, epsilon = 1e-9);
        assert_relative_eq!(p.isotropic_directivity(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn tilt_only_projects() {
        let p = ContrastModelParams::default();
        let prop = Vec2::new(0.0, 1.0);
        let mut c = ChainState::new(10, Vec2::zeros(), FRAC_PI_2).unwrap();
        let flat = chain_directivity(&c, &prop, &p);
        c.tilt = 6f64.to_radians();
        let tilted = chain_directivity(&c, &prop, &p);
        let cos_theta = 6f64.to_radians().cos();
        assert_relative_eq!(flat, p.directivity_floor, epsilon = 1e-12);
        assert_relative_eq!(tilted, directivity(cos_theta.acos(), &p), epsilon = 1e-12);
    }

    #[test]
    fn probe_pixel_mapping_round_trips() {
        let probe = ProbeSpec::default();
        let p = probe.pixel_center(120, 33);
        let (r, c) = probe.to_pixel(&p);
        assert_relative_eq!(r, 120.5, epsilon = 1e-9);
        assert_relative_eq!(c, 33.5, epsilon = 1e-9);
        assert_relative_eq!(probe.depth_of(&p), 12.05e-3, epsilon = 1e-12);
    }

    #[test]
    fn roi_for_rect_selects_inside_centres() {
        let probe = ProbeSpec::default();
        let rect = Rect::new(probe.pixel_center(10, 20) - Vec2::new(1e-9, 1e-9), probe.pixel_center(14, 25));
        let roi = probe.roi_for_rect(&rect).unwrap();
        assert_eq!(roi, Roi { row0: 10, col0: 20, rows: 5, cols: 6 });
    }
}
