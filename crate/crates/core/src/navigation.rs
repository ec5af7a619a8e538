//! Waypoint plans and pure-pursuit steering of the swarm.
//!
//! Yaw convention: the rolling swarm moves along the field yaw, so a yaw of
//! 0 drives towards +x and π/2 towards +y.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::magnetics::{FieldCommand, FieldMode};
use crate::sonography::{ProbeSpec, UltrasoundFrame};
use crate::swarm::{largest_component, SwarmParams, SwarmScene};
use crate::Vec2;

#[derive(Debug, Error)]
pub enum NavigationError {
    #[error("rectangle must have positive width and height, got {width} x {height}")]
    DegenerateRectangle { width: f64, height: f64 },
    #[error("waypoint plan is empty")]
    EmptyPlan,
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec2,
    /// Arrival radius, m.
    pub tolerance: f64,
}

impl Waypoint {
    pub fn new(position: Vec2, tolerance: f64) -> Result<Self, NavigationError> {
        if !(tolerance > 0.0) {
            return Err(NavigationError::InvalidParameter {
                name: "tolerance",
                reason: "must be > 0".into(),
            });
        }
        Ok(Self { position, tolerance })
    }
}

/// Where the controller's centroid comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavSource {
    /// Mass centroid of the gathered region in the scene.
    GroundTruth,
    /// Thresholded intensity centroid of the latest frame.
    ImageBased,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    pub source: NavSource,
    /// How long to hold the last command without a centroid, s.
    pub loss_timeout: f64,
    /// Minimum pixel intensity counted by the image centroid.
    pub image_threshold: u8,
    /// Fewer qualifying pixels than this means no estimate.
    pub min_pixels: usize,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            source: NavSource::GroundTruth,
            loss_timeout: 2.0,
            image_threshold: 40,
            min_pixels: 20,
        }
    }
}

/// A waypoint reached at a simulated time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub target_index: usize,
    pub time: f64,
}

/// Controller state, advanced once per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub current_target: usize,
    pub centroid_estimate: Option<Vec2>,
    pub source: NavSource,
    pub arrivals: Vec<Arrival>,
    /// Time the centroid was first missing, while it stays missing.
    pub lost_since: Option<f64>,
    pub loss_of_track: bool,
    pub completed: bool,
    pub last_command: Option<FieldCommand>,
}

impl NavState {
    pub fn new(source: NavSource) -> Self {
        Self {
            current_target: 0,
            centroid_estimate: None,
            source,
            arrivals: Vec::new(),
            lost_since: None,
            loss_of_track: false,
            completed: false,
            last_command: None,
        }
    }
}

/// Corners of a rectangle in counter-clockwise order starting at `origin`.
/// The loop closes by returning to the first corner.
pub fn plan_rectangle(origin: Vec2, width: f64, height: f64, tolerance: f64) -> Result<Vec<Waypoint>, NavigationError> {
    if !(width > 0.0 && height > 0.0) {
        return Err(NavigationError::DegenerateRectangle { width, height });
    }
    [
        origin,
        origin + Vec2::new(width, 0.0),
        origin + Vec2::new(width, height),
        origin + Vec2::new(0.0, height),
    ]
    .into_iter()
    .map(|p| Waypoint::new(p, tolerance))
    .collect()
}

/// Length of the closed loop through `plan`.
pub fn loop_length(plan: &[Waypoint]) -> f64 {
    (0..plan.len())
        .map(|k| (plan[(k + 1) % plan.len()].position - plan[k].position).norm())
        .sum()
}

/// Planned segment the controller is on while heading for `target`.
pub fn current_leg(plan: &[Waypoint], target: usize, visited: usize) -> Option<(Vec2, Vec2)> {
    (visited > 0).then(|| {
        let prev = (target + plan.len() - 1) % plan.len();
        (plan[prev].position, plan[target].position)
    })
}

/// Intensity-weighted centroid of pixels at or above `threshold`.
pub fn image_centroid(frame: &UltrasoundFrame, probe: &ProbeSpec, threshold: u8, min_pixels: usize) -> Option<Vec2> {
    let (mut sw, mut sr, mut sc, mut count) = (0.0, 0.0, 0.0, 0usize);
    for row in 0..frame.height {
        for col in 0..frame.width {
            let v = frame.get(row, col);
            if v >= threshold && v > 0 {
                let w = v as f64;
                sw += w;
                sr += w * (row as f64 + 0.5);
                sc += w * (col as f64 + 0.5);
                count += 1;
            }
        }
    }
    if count < min_pixels.max(1) {
        return None;
    }
    let (r, c) = (sr / sw, sc / sw);
    let lateral = (c - 0.5 * probe.cols() as f64) * probe.pixel_pitch;
    Some(probe.origin + probe.lateral_dir() * lateral + probe.propagation_dir * r * probe.pixel_pitch)
}

/// Mass centroid of the chains and free particles inside the largest
/// connected cluster of cells at or above the swarm threshold.
pub fn ground_truth_centroid(scene: &SwarmScene, params: &SwarmParams) -> Option<Vec2> {
    let grid = scene.region_grid(params).ok()?;
    let comp = largest_component(&grid, params.swarm_threshold)?;
    let inside = |p: &Vec2| grid.cell_of(p).is_some_and(|(ix, iy)| comp.contains(ix, iy));
    let mut sum = Vec2::zeros();
    let mut mass = 0.0;
    for c in scene.chains.iter().filter(|c| inside(&c.center)) {
        sum += c.center * c.n_particles as f64;
        mass += c.n_particles as f64;
    }
    for p in scene.free_particles.iter().filter(|p| inside(p)) {
        sum += p;
        mass += 1.0;
    }
    (mass > 0.0).then(|| sum / mass)
}

/// `command` with its yaw replaced, shifting the rotation phase so the
/// in-plane field direction is continuous at `time`.
pub fn with_yaw(command: &FieldCommand, yaw: f64, time: f64) -> FieldCommand {
    let mut out = *command;
    if command.mode == FieldMode::Rotating {
        let before = command.azimuth_at(time);
        out.yaw = yaw;
        let after = out.azimuth_at(time);
        out.phase0 = crate::magnetics::wrap_two_pi(out.phase0 + before - after);
    } else {
        out.yaw = yaw;
    }
    out
}

/// Switches from `current` to `next` at `time` without a jump in the
/// in-plane field direction; `next.phase0` is recomputed and `next.yaw`
/// is applied through [`with_yaw`]. A static field starts rotating from
/// its own direction.
pub fn retune(current: &FieldCommand, next: &FieldCommand, time: f64) -> FieldCommand {
    let mut out = *next;
    let yaw = next.yaw;
    out.yaw = current.yaw;
    if out.mode == FieldMode::Static {
        out.frequency = 0.0;
        out.phase0 = 0.0;
    } else {
        let psi = match current.mode {
            FieldMode::Rotating => current.phase0 + current.angular_frequency() * time,
            FieldMode::Static => -std::f64::consts::FRAC_PI_2,
        };
        out.phase0 = crate::magnetics::wrap_two_pi(psi - out.angular_frequency() * time);
    }
    with_yaw(&out, crate::magnetics::wrap_two_pi(yaw), time)
}

fn stopped(command: &FieldCommand) -> FieldCommand {
    FieldCommand {
        mode: FieldMode::Static,
        pitch: 0.0,
        frequency: 0.0,
        ..*command
    }
}

/// One controller update at `time` from `nav.centroid_estimate`.
///
/// Points the yaw from the centroid to the current target, takes pitch,
/// frequency and magnitude from `base`, and advances through the plan. The
/// loop is complete after returning to the first waypoint, at which point
/// the field stops rotating. Without a centroid the last command is held
/// for `loss_timeout`, after which rotation stops.
pub fn steer(
    nav: &mut NavState,
    plan: &[Waypoint],
    base: &FieldCommand,
    time: f64,
    config: &NavConfig,
) -> Result<FieldCommand, NavigationError> {
    if plan.is_empty() {
        return Err(NavigationError::EmptyPlan);
    }
    let last = nav.last_command.unwrap_or(*base);
    if nav.completed {
        let cmd = stopped(&last);
        nav.last_command = Some(cmd);
        return Ok(cmd);
    }
    let Some(centroid) = nav.centroid_estimate else {
        let since = *nav.lost_since.get_or_insert(time);
        nav.loss_of_track = true;
        let cmd = if time - since >= config.loss_timeout { stopped(&last) } else { last };
        nav.last_command = Some(cmd);
        return Ok(cmd);
    };
    nav.lost_since = None;
    nav.loss_of_track = false;

    while (plan[nav.current_target].position - centroid).norm() <= plan[nav.current_target].tolerance {
        nav.arrivals.push(Arrival {
            target_index: nav.current_target,
            time,
        });
        if nav.arrivals.len() > plan.len() {
            nav.completed = true;
            let cmd = stopped(&last);
            nav.last_command = Some(cmd);
            return Ok(cmd);
        }
        nav.current_target = (nav.current_target + 1) % plan.len();
    }

    let d = plan[nav.current_target].position - centroid;
    let mut from = *base;
    // keep the running phase so heading updates never jump the field
    if last.mode == FieldMode::Rotating && base.mode == FieldMode::Rotating {
        from.yaw = last.yaw;
        from.phase0 = last.phase0;
    }
    let cmd = with_yaw(&from, d.y.atan2(d.x), time);
    nav.last_command = Some(cmd);
    Ok(cmd)
}

/// One line of the navigation log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavLogRow {
    pub time_s: f64,
    pub target_index: usize,
    pub centroid_x_mm: Option<f64>,
    pub centroid_y_mm: Option<f64>,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub freq_hz: f64,
    pub slot_mean_intensity: Option<f64>,
}

pub const NAV_LOG_HEADER: [&str; 8] = [
    "time_s",
    "target_index",
    "centroid_x_mm",
    "centroid_y_mm",
    "yaw_deg",
    "pitch_deg",
    "freq_hz",
    "slot_mean_intensity",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_nav_log<W: Write>(rows: &[NavLogRow], out: W) -> Result<(), NavigationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NAV_LOG_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:.6}", r.time_s),
            r.target_index.to_string(),
            opt(r.centroid_x_mm),
            opt(r.centroid_y_mm),
            format!("{:.6}", r.yaw_deg),
            format!("{:.6}", r.pitch_deg),
            format!("{:.6}", r.freq_hz),
            opt(r.slot_mean_intensity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_nav_log<R: std::io::Read>(input: R) -> Result<Vec<NavLogRow>, NavigationError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(NavigationError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn base() -> FieldCommand {
        FieldCommand::rotating(8e-3, 6.0, 0.0, 6f64.to_radians())
    }

    #[test]
    fn retune_keeps_direction_continuous() {
        let t = 1.37;
        let flat = FieldCommand::rotating(8e-3, 6.0, 0.3, 0.0);
        for next in [base(), FieldCommand::rotating(5e-3, 4.0, 1.2, 0.0)] {
            let out = retune(&flat, &next, t);
            assert_relative_eq!(out.yaw, next.yaw, epsilon = 1e-12);
            assert_relative_eq!(out.frequency, next.frequency);
            let jump = crate::magnetics::wrap_pi(out.azimuth_at(t) - flat.azimuth_at(t));
            // tilting the plane may move the azimuth a little, never by a jump
            assert!(jump.abs() < 0.1, "{jump}");
        }
        let held = retune(&flat, &FieldCommand::static_field(8e-3, 0.5, 0.0), t);
        assert_eq!(held.phase0, 0.0);
        assert_eq!(held.frequency, 0.0);
    }

    #[test]
    fn unit_square_corners_in_order() {
        let plan = plan_rectangle(Vec2::zeros(), 1.0, 1.0, 0.1).unwrap();
        let pts: Vec<Vec2> = plan.iter().map(|w| w.position).collect();
        assert_eq!(pts, vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(0.0, 1.0)]);
        assert_relative_eq!(loop_length(&plan), 4.0);
        let r = plan_rectangle(Vec2::new(3.0, 1.0), 2.0, 0.5, 0.1).unwrap();
        assert_relative_eq!(loop_length(&r), 2.0 * (2.0 + 0.5));
    }

    #[test]
    fn degenerate_rectangle_is_rejected() {
        assert!(plan_rectangle(Vec2::zeros(), 0.0, 1.0, 0.1).is_err());
        assert!(plan_rectangle(Vec2::zeros(), 1.0, -1.0, 0.1).is_err());
        assert!(plan_rectangle(Vec2::zeros(), 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn west_of_target_steers_east() {
        let plan = vec![Waypoint::new(Vec2::new(1e-3, 0.0), 1e-5).unwrap()];
        let mut nav = NavState::new(NavSource::GroundTruth);
        nav.centroid_estimate = Some(Vec2::new(0.0, 0.0));
        let cmd = steer(&mut nav, &plan, &base(), 0.0, &NavConfig::default()).unwrap();
        assert_relative_eq!(cmd.yaw, 0.0, epsilon = 1e-12);
        assert_relative_eq!(cmd.pitch, base().pitch);
        assert_relative_eq!(cmd.frequency, 6.0);
        nav.centroid_estimate = Some(Vec2::new(1e-3, -1e-3));
        let cmd = steer(&mut nav, &plan, &base(), 0.1, &NavConfig::default()).unwrap();
        assert_relative_eq!(cmd.yaw, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn reaching_target_advances_and_loop_completes() {
        let plan = plan_rectangle(Vec2::zeros(), 1e-3, 1e-3, 5e-5).unwrap();
        let mut nav = NavState::new(NavSource::GroundTruth);
        let config = NavConfig::default();
        nav.centroid_estimate = Some(Vec2::zeros());
        steer(&mut nav, &plan, &base(), 0.0, &config).unwrap();
        assert_eq!(nav.current_target, 1);
        for (k, t) in [(1usize, 1.0), (2, 2.0), (3, 3.0)] {
            nav.centroid_estimate = Some(plan[k].position);
            steer(&mut nav, &plan, &base(), t, &config).unwrap();
            assert_eq!(nav.current_target, (k + 1) % 4);
        }
        nav.centroid_estimate = Some(plan[0].position);
        let cmd = steer(&mut nav, &plan, &base(), 4.0, &config).unwrap();
        assert!(nav.completed);
        assert_eq!(cmd.mode, FieldMode::Static);
        assert_eq!(nav.arrivals.len(), 5);
    }

    #[test]
    fn loss_of_track_holds_then_stops() {
        let plan = vec![Waypoint::new(Vec2::new(1e-3, 0.0), 1e-5).unwrap()];
        let mut nav = NavState::new(NavSource::ImageBased);
        let config = NavConfig { loss_timeout: 1.0, ..NavConfig::default() };
        nav.centroid_estimate = Some(Vec2::new(0.0, 1e-3));
        let held = steer(&mut nav, &plan, &base(), 0.0, &config).unwrap();
        nav.centroid_estimate = None;
        assert_eq!(steer(&mut nav, &plan, &base(), 0.5, &config).unwrap(), held);
        assert!(nav.loss_of_track);
        assert_eq!(steer(&mut nav, &plan, &base(), 1.2, &config).unwrap(), held);
        let stop = steer(&mut nav, &plan, &base(), 1.6, &config).unwrap();
        assert_eq!(stop.mode, FieldMode::Static);
        nav.centroid_estimate = Some(Vec2::zeros());
        assert_eq!(steer(&mut nav, &plan, &base(), 2.0, &config).unwrap().mode, FieldMode::Rotating);
        assert!(!nav.loss_of_track);
    }

    #[test]
    fn yaw_change_keeps_field_continuous() {
        let f = base();
        let t = 0.37;
        let g = with_yaw(&f, 1.2, t);
        let a = f.direction_at(t);
        let b = g.direction_at(t);
        // same in-plane heading at the switch; only the tilt plane moves
        let ha = a[1].atan2(a[0]);
        let hb = b[1].atan2(b[0]);
        assert!(crate::magnetics::wrap_pi(ha - hb).abs() < 0.2);
    }

    fn frame_with(pixels: &[(usize, usize, u8)]) -> (UltrasoundFrame, ProbeSpec) {
        let probe = ProbeSpec::default();
        let mut f = UltrasoundFrame {
            width: probe.cols(),
            height: probe.rows(),
            pixels: vec![0; probe.cols() * probe.rows()],
            pixel_pitch: probe.pixel_pitch,
            timestamp: 0.0,
        };
        for &(r, c, v) in pixels {
            f.pixels[r * f.width + c] = v;
        }
        (f, probe)
    }

    #[test]
    fn single_bright_pixel_centroid() {
        let (f, probe) = frame_with(&[(120, 40, 200)]);
        let c = image_centroid(&f, &probe, 100, 1).unwrap();
        let expected = probe.pixel_center(120, 40);
        assert_relative_eq!(c, expected, epsilon = 1e-12);
        assert!(image_centroid(&f, &probe, 100, 2).is_none());
    }

    #[test]
    fn two_blobs_give_midpoint() {
        let (f, probe) = frame_with(&[(100, 50, 150), (101, 50, 150), (140, 90, 150), (141, 90, 150)]);
        let c = image_centroid(&f, &probe, 100, 1).unwrap();
        let mid = 0.5 * (probe.pixel_center(100, 50) + probe.pixel_center(141, 90));
        assert_relative_eq!(c, mid, epsilon = 1e-12);
    }

    #[test]
    fn nav_log_round_trip() {
        let rows = vec![
            NavLogRow {
                time_s: 1.5,
                target_index: 2,
                centroid_x_mm: Some(22.5),
                centroid_y_mm: None,
                yaw_deg: 90.0,
                pitch_deg: 6.0,
                freq_hz: 6.0,
                slot_mean_intensity: Some(70.25),
            },
        ];
        let mut buf = Vec::new();
        write_nav_log(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("time_s,target_index,centroid_x_mm,centroid_y_mm,yaw_deg,pitch_deg,freq_hz,slot_mean_intensity\n"));
        assert_eq!(read_nav_log(buf.as_slice()).unwrap(), rows);
    }
}
