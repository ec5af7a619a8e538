use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{IntensityTrace, Roi, SonographyError, UltrasoundFrame};

/// Peak-to-median spectral power ratio above which a trace counts as modulated.
pub const DEFAULT_DETECTION_FACTOR: f64 = 10.0;

pub fn roi_mean_intensity(frame: &UltrasoundFrame, roi: &Roi) -> Result<f64, SonographyError> {
    if !roi.fits(frame.width, frame.height) {
        return Err(SonographyError::EmptyRoi);
    }
    let mut sum = 0u64;
    for r in roi.row0..roi.row0 + roi.rows {
        let row = &frame.pixels[r * frame.width + roi.col0..r * frame.width + roi.col0 + roi.cols];
        sum += row.iter().map(|&p| p as u64).sum::<u64>();
    }
    Ok(sum as f64 / roi.pixel_count() as f64)
}

/// ROI mean of each frame, in order.
pub fn trace(frames: &[UltrasoundFrame], roi: &Roi, frame_rate: f64) -> Result<IntensityTrace, SonographyError> {
    let values = frames
        .iter()
        .map(|f| roi_mean_intensity(f, roi))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IntensityTrace {
        values,
        frame_rate,
        start_time: frames.first().map_or(0.0, |f| f.timestamp),
    })
}

/// One-sided power spectrum of the mean-removed, Hann-windowed trace.
/// Returns `(frequency, power)` for bins `0..=n/2`.
pub fn power_spectrum(trace: &IntensityTrace) -> Result<Vec<(f64, f64)>, SonographyError> {
    let n = trace.values.len();
    if n < 8 {
        return Err(SonographyError::TraceTooShort(n));
    }
    let mean = trace.mean();
    let mut buf: Vec<Complex<f64>> = trace
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok(buf[..=n / 2]
        .iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * trace.frame_rate / n as f64, c.norm_sqr() / n as f64))
        .collect())
}

/// Strongest non-DC frequency, refined by parabolic interpolation of the
/// log power. Above Nyquist this is the aliased reading.
pub fn dominant_frequency(trace: &IntensityTrace) -> Result<f64, SonographyError> {
    let spec = power_spectrum(trace)?;
    let (k, &(_, p)) = spec
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .ok_or(SonographyError::NoSpectralPeak)?;
    if !(p > 0.0) {
        return Err(SonographyError::NoSpectralPeak);
    }
    let df = trace.frame_rate / trace.values.len() as f64;
    let mut offset = 0.0;
    if k > 1 && k + 1 < spec.len() {
        let (a, b, c) = (spec[k - 1].1.max(1e-300).ln(), p.ln(), spec[k + 1].1.max(1e-300).ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok((k as f64 + offset) * df)
}

/// Frequency at which a tone of `frequency` appears when sampled at `sample_rate`.
pub fn alias_frequency(frequency: f64, sample_rate: f64) -> f64 {
    let folded = frequency.abs().rem_euclid(sample_rate);
    folded.min(sample_rate - folded)
}

/// Whether the trace carries a tone at the image modulation frequency
/// `2·drive_frequency` (as sampled), at least `factor` times the median power.
pub fn detect_swarm(trace: &IntensityTrace, drive_frequency: f64, factor: f64) -> Result<bool, SonographyError> {
    let spec = power_spectrum(trace)?;
    let target = alias_frequency(2.0 * drive_frequency, trace.frame_rate);
    let df = trace.frame_rate / trace.values.len() as f64;
    let k = (target / df).round() as usize;
    // the Hann main lobe spans one bin either side
    let peak = spec[k.saturating_sub(1).max(1)..=(k + 1).min(spec.len() - 1)]
        .iter()
        .map(|&(_, p)| p)
        .fold(0.0, f64::max);
    let mut rest: Vec<f64> = spec.iter().skip(1).map(|&(_, p)| p).collect();
    rest.sort_by(f64::total_cmp);
    let median = rest[rest.len() / 2];
    Ok(peak > factor * median)
}
