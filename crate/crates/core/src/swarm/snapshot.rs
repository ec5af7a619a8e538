//! Versioned scene snapshots for replay.
//!
//! A snapshot is a single JSON object:
//!
//! ```text
//! { "format": "magswarm-scene", "version": 1,
//!   "time": <s>, "field": <FieldCommand>, "scene": <SwarmScene> }
//! ```
//!
//! Floating-point values round-trip exactly, so stepping a restored scene
//! reproduces the original trajectory bit for bit.

use serde::{Deserialize, Serialize};

use super::{SwarmError, SwarmScene};
use crate::magnetics::FieldCommand;

pub const SNAPSHOT_FORMAT: &str = "magswarm-scene";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub format: String,
    pub version: u32,
    pub time: f64,
    pub field: FieldCommand,
    pub scene: SwarmScene,
}

impl SceneSnapshot {
    pub fn capture(scene: &SwarmScene, field: &FieldCommand) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            time: scene.time,
            field: *field,
            scene: scene.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self, SwarmError> {
        let snap: SceneSnapshot = serde_json::from_str(text).map_err(|e| SwarmError::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(SwarmError::Snapshot(format!("unexpected format {:?}", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(SwarmError::Snapshot(format!("unsupported version {}", snap.version)));
        }
        Ok(snap)
    }
}
