//! Output files, held in memory until the scenario has finished.

use std::fs;
use std::path::{Path, PathBuf};

use magswarm_core::sonography::{roi_mean_intensity, write_pgm, FrameMetadata};
use magswarm_core::{Roi, UltrasoundFrame};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.toml";

/// Files of one run, keyed by path relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        let path = path.into();
        self.files.retain(|(p, _)| *p != path);
        self.files.push((path, bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, path: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("results serialize");
        text.push('\n');
        self.add(path, text.into_bytes());
    }

    /// A frame as `frames/<name>.pgm` with its JSON sidecar.
    pub fn add_frame(&mut self, name: &str, index: u64, frame: &UltrasoundFrame, roi: Option<&Roi>) -> Result<(), CliError> {
        let mut pgm = Vec::new();
        write_pgm(frame, &mut pgm).map_err(|e| CliError::Runtime(e.to_string()))?;
        let meta = FrameMetadata {
            frame_index: index,
            timestamp: frame.timestamp,
            width: frame.width,
            height: frame.height,
            pixel_pitch: frame.pixel_pitch,
            roi: roi.copied(),
            roi_mean_intensity: roi.and_then(|r| roi_mean_intensity(frame, r).ok()),
        };
        self.add(format!("frames/{name}.pgm"), pgm);
        self.add_json(&format!("frames/{name}.json"), &meta);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.iter().find(|(p, _)| p == Path::new(path)).map(|(_, b)| b.as_slice())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    /// Writes every file under `dir`. On failure, files written so far are removed.
    pub fn commit(&self, dir: &Path) -> Result<(), CliError> {
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| -> std::io::Result<()> {
            for (rel, bytes) in &self.files {
                let path = dir.join(rel);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                fs::write(&path, bytes)?;
                written.push(path);
            }
            Ok(())
        })();
        if let Err(e) = result {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(CliError::Runtime(format!("writing {}: {e}", dir.display())));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    scenario: &'a str,
    seed: u64,
    files: Vec<String>,
    config: &'a ScenarioConfig,
}

/// Run manifest: versions, seed and the complete effective config.
pub fn manifest_text(scenario: &str, config: &ScenarioConfig) -> String {
    manifest_with_files(scenario, config, &Artifacts::default())
}

pub fn manifest_with_files(scenario: &str, config: &ScenarioConfig, artifacts: &Artifacts) -> String {
    let manifest = Manifest {
        tool: "magswarm",
        version: env!("CARGO_PKG_VERSION"),
        core_version: magswarm_core::VERSION,
        scenario,
        seed: config.seed,
        files: artifacts.paths().map(|p| p.to_string_lossy().replace('\\', "/")).collect(),
        config,
    };
    toml::to_string(&manifest).expect("manifest serializes")
}

/// Writes `rows` as CSV under `header`.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Fixed-precision float for CSV cells.
pub fn fmt(v: f64) -> String {
    let s = format!("{v:.6}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}
