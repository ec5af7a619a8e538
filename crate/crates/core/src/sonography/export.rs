use std::io::{Cursor, Read, Write};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{IntensityTrace, Roi, SonographyError, UltrasoundFrame};

/// JSON sidecar written next to every exported frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetadata {
    pub frame_index: u64,
    pub timestamp: f64,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
    pub roi: Option<Roi>,
    pub roi_mean_intensity: Option<f64>,
}

/// Binary (P5) PGM.
pub fn write_pgm<W: Write>(frame: &UltrasoundFrame, out: W) -> Result<(), SonographyError> {
    PnmEncoder::new(out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&frame.pixels, frame.width as u32, frame.height as u32, ExtendedColorType::L8)?;
    Ok(())
}

/// Reads a PGM back; pitch and timestamp come from `meta`.
pub fn read_pgm<R: Read>(mut input: R, meta: &FrameMetadata) -> Result<UltrasoundFrame, SonographyError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let img = image::load(Cursor::new(bytes), ImageFormat::Pnm)?.into_luma8();
    Ok(UltrasoundFrame {
        width: img.width() as usize,
        height: img.height() as usize,
        pixels: img.into_raw(),
        pixel_pitch: meta.pixel_pitch,
        timestamp: meta.timestamp,
    })
}

/// `frame_index,time_s,mean_intensity` rows.
pub fn write_trace_csv<W: Write>(trace: &IntensityTrace, out: W) -> Result<(), SonographyError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", "time_s", "mean_intensity"])?;
    for (k, v) in trace.values.iter().enumerate() {
        let t = trace.start_time + k as f64 / trace.frame_rate;
        w.write_record([k.to_string(), format!("{t:.6}"), format!("{v:.6}")])?;
    }
    w.flush()?;
    Ok(())
}
