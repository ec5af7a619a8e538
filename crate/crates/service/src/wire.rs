//! JSON message schema spoken over the WebSocket.
//!
//! Every message is one text frame holding an envelope:
//!
//! ```text
//! { "version": 1, "session": "<id>", "seq": 42, "type": "SceneStats", "payload": { ... } }
//! ```
//!
//! Wire units are millimetres, degrees, hertz, millitesla and seconds.

use base64::Engine;
use magswarm_core::navigation::{retune, Arrival};
use magswarm_core::{FieldCommand, FieldMode, NavSource, SwarmRegion, UltrasoundFrame, Vec2};
use serde::{Deserialize, Serialize};

pub const WIRE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub version: u32,
    pub session: String,
    pub seq: u64,
    #[serde(flatten)]
    pub message: WireMessage,
}

/// What clients send. Envelope fields are optional on the way in.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Inbound {
    #[serde(default)]
    pub version: Option<u32>,
    #[serde(flatten)]
    pub message: WireMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum WireMessage {
    Hello(Hello),
    Frame(FramePayload),
    SceneStats(SceneStats),
    FieldCommandSet(FieldPatch),
    NavPlanSet(NavPlan),
    Pause(Empty),
    Resume(Resume),
    Error(ErrorPayload),
}

/// Payload of messages that carry nothing; `{}` or `null` on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Empty {}

/// Bounds the server enforces on field commands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_magnitude_mt: f64,
    pub max_pitch_deg: f64,
    pub max_frequency_hz: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_magnitude_mt: 20.0,
            max_pitch_deg: 15.0,
            max_frequency_hz: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub server: String,
    pub frame_rate_hz: f64,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_mm: f64,
    pub limits: Limits,
    pub time_scale: f64,
    pub paused: bool,
    pub field: FieldWire,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelEncoding {
    /// Row-major 8-bit greys, standard base64 with padding.
    Base64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    /// Gapless per session.
    pub frame_index: u64,
    pub time_s: f64,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_mm: f64,
    pub encoding: PixelEncoding,
    pub pixels: String,
    /// Field in force when the frame was taken.
    pub field: FieldWire,
}

impl FramePayload {
    pub fn new(frame_index: u64, frame: &UltrasoundFrame, field: &FieldCommand) -> Self {
        Self {
            frame_index,
            time_s: frame.timestamp,
            width: frame.width,
            height: frame.height,
            pixel_pitch_mm: frame.pixel_pitch * 1e3,
            encoding: PixelEncoding::Base64,
            pixels: base64::engine::general_purpose::STANDARD.encode(&frame.pixels),
            field: FieldWire::from(field),
        }
    }

    pub fn decode_pixels(&self) -> Result<Vec<u8>, base64::DecodeError> {
        base64::engine::general_purpose::STANDARD.decode(&self.pixels)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldWire {
    pub mode: FieldMode,
    pub magnitude_mt: f64,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub frequency_hz: f64,
}

impl From<&FieldCommand> for FieldWire {
    fn from(f: &FieldCommand) -> Self {
        Self {
            mode: f.mode,
            magnitude_mt: f.magnitude * 1e3,
            yaw_deg: f.yaw.to_degrees(),
            pitch_deg: f.pitch.to_degrees(),
            frequency_hz: f.frequency,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionWire {
    pub x_mm: f64,
    pub y_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    pub mean_density: f64,
}

impl From<&SwarmRegion> for RegionWire {
    fn from(r: &SwarmRegion) -> Self {
        Self {
            x_mm: r.rect.min.x * 1e3,
            y_mm: r.rect.min.y * 1e3,
            width_mm: r.rect.width() * 1e3,
            height_mm: r.rect.height() * 1e3,
            mean_density: r.mean_density,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalWire {
    pub target_index: usize,
    pub time_s: f64,
}

impl From<&Arrival> for ArrivalWire {
    fn from(a: &Arrival) -> Self {
        Self {
            target_index: a.target_index,
            time_s: a.time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavStatus {
    pub waypoints_mm: Vec<[f64; 2]>,
    pub current_target: usize,
    pub completed: bool,
    pub loss_of_track: bool,
    pub arrivals: Vec<ArrivalWire>,
    pub max_cross_track_mm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub time_s: f64,
    pub paused: bool,
    pub centroid_mm: Option<[f64; 2]>,
    pub region: Option<RegionWire>,
    pub field: FieldWire,
    /// Mean ROI intensity of the last completed 66-frame slot.
    pub slot_mean_intensity: Option<f64>,
    pub nav: Option<NavStatus>,
    pub clients: usize,
}

/// Partial field update; absent fields keep their value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<FieldMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_mt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_deg: Option<f64>,
    /// Added to the current yaw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_delta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_hz: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectanglePlan {
    pub width_mm: f64,
    pub height_mm: f64,
}

/// Replaces the navigation plan. Give either explicit waypoints or a
/// rectangle anchored at the current swarm centroid; neither clears it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavPlan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints_mm: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<RectanglePlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<NavSource>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resume {
    /// Pause again once scene time reaches this, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_scale: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    OutOfBounds,
    InvalidRequest,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
}

impl ErrorPayload {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Applies `patch` at scene time `time`, keeping the in-plane field
/// direction continuous.
pub fn apply_patch(
    current: &FieldCommand,
    patch: &FieldPatch,
    time: f64,
    limits: &Limits,
) -> Result<FieldCommand, ErrorPayload> {
    let bad = |m: String| Err(ErrorPayload::new(ErrorCode::InvalidRequest, m));
    let out_of_bounds = |m: String| Err(ErrorPayload::new(ErrorCode::OutOfBounds, m));
    if patch.yaw_deg.is_some() && patch.yaw_delta_deg.is_some() {
        return bad("give yaw_deg or yaw_delta_deg, not both".into());
    }
    let values = [patch.magnitude_mt, patch.yaw_deg, patch.yaw_delta_deg, patch.pitch_deg, patch.frequency_hz];
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return bad("field values must be finite".into());
    }

    let mut next = *current;
    if let Some(mode) = patch.mode {
        next.mode = mode;
    }
    if let Some(b) = patch.magnitude_mt {
        if !(0.0..=limits.max_magnitude_mt).contains(&b) {
            return out_of_bounds(format!("magnitude {b} mT outside [0, {}]", limits.max_magnitude_mt));
        }
        next.magnitude = b * 1e-3;
    }
    if let Some(p) = patch.pitch_deg {
        if !(0.0..=limits.max_pitch_deg).contains(&p) {
            return out_of_bounds(format!("pitch {p} deg outside [0, {}]", limits.max_pitch_deg));
        }
        next.pitch = p.to_radians();
    }
    if let Some(f) = patch.frequency_hz {
        if !(0.0..=limits.max_frequency_hz).contains(&f) {
            return out_of_bounds(format!("frequency {f} Hz outside [0, {}]", limits.max_frequency_hz));
        }
        next.frequency = f;
    }
    next.yaw = match (patch.yaw_deg, patch.yaw_delta_deg) {
        (Some(y), _) => y.to_radians(),
        (_, Some(d)) => current.yaw + d.to_radians(),
        _ => current.yaw,
    };
    let next = retune(current, &next, time);
    next.validate().map_err(|e| ErrorPayload::new(ErrorCode::InvalidRequest, e.to_string()))?;
    Ok(next)
}

pub fn to_mm(p: &Vec2) -> [f64; 2] {
    [p.x * 1e3, p.y * 1e3]
}

pub fn from_mm(p: &[f64; 2]) -> Vec2 {
    Vec2::new(p[0] * 1e-3, p[1] * 1e-3)
}
