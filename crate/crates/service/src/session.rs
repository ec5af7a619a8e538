//! The simulation actor: the one owner of the scene.
//!
//! Network tasks send [`Command`]s in; the actor applies them between
//! frames, so a frame never sees a half-applied command. Outgoing messages
//! are numbered here and pushed into each client's [`Outbox`].

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use magswarm_core::navigation::{ground_truth_centroid, plan_rectangle, NavConfig, Waypoint};
use magswarm_core::runner::{build_scene, NavRun, SceneSetup, SimConfig, Simulation, SLOT_FRAMES};
use magswarm_core::sonography::roi_mean_intensity;
use magswarm_core::swarm::default_tank;
use magswarm_core::{FieldCommand, FluidSpec, NavSource, ParticleSpec, Roi, UltrasoundFrame};
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::wire::*;
use crate::ServiceError;

/// Everything that fixes a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub session_id: String,
    pub seed: u64,
    /// Scene seconds per wall-clock second.
    pub time_scale: f64,
    pub start_paused: bool,
    pub particle: ParticleSpec,
    pub fluid: FluidSpec,
    pub setup: SceneSetup,
    pub sim: SimConfig,
    pub field: FieldCommand,
    pub limits: Limits,
    /// Undelivered reliable messages a client may accumulate before it is dropped.
    pub max_backlog: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            session_id: "session-1".into(),
            seed: 1,
            time_scale: 1.0,
            start_paused: false,
            particle: ParticleSpec::default(),
            fluid: FluidSpec::default(),
            setup: SceneSetup::default(),
            sim: SimConfig::default(),
            field: FieldCommand::rotating(8e-3, 6.0, 0.0, 0.0),
            limits: Limits::default(),
            max_backlog: 4096,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(ServiceError::Config("time_scale must be > 0".into()));
        }
        if self.session_id.is_empty() {
            return Err(ServiceError::Config("session_id must not be empty".into()));
        }
        self.particle.validate().map_err(magswarm_core::Error::from)?;
        self.fluid.validate().map_err(magswarm_core::Error::from)?;
        self.sim.validate()?;
        self.field.validate().map_err(magswarm_core::Error::from)?;
        Ok(())
    }

    pub fn build(&self) -> Result<Simulation, ServiceError> {
        self.validate()?;
        let scene = build_scene(&self.setup, self.particle, self.fluid, default_tank(), self.seed)?;
        let sim = SimConfig { render_seed: self.seed, ..self.sim };
        Ok(Simulation::new(scene, self.field, sim)?)
    }
}

/// Per-client outgoing queue. Frames are keep-latest: a newer frame replaces
/// any frame the client has not taken yet. Other messages are never dropped.
#[derive(Debug, Default)]
pub struct Outbox {
    queue: Mutex<VecDeque<Outgoing>>,
    notify: Notify,
    closed: AtomicBool,
}

#[derive(Clone, Debug)]
struct Outgoing {
    frame: bool,
    text: Arc<str>,
}

impl Outbox {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn push(&self, text: Arc<str>, frame: bool, max_backlog: usize) {
        let mut q = self.queue.lock().expect("outbox lock");
        if frame {
            q.retain(|m| !m.frame);
        }
        q.push_back(Outgoing { frame, text });
        let overflow = q.len() > max_backlog;
        drop(q);
        if overflow {
            self.close();
        }
        self.notify.notify_one();
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Next message, or `None` once closed.
    pub async fn next(&self) -> Option<Arc<str>> {
        loop {
            if self.is_closed() {
                return None;
            }
            if let Some(m) = self.queue.lock().expect("outbox lock").pop_front() {
                return Some(m.text);
            }
            self.notify.notified().await;
        }
    }
}

pub type ClientId = u64;

/// Input to the actor.
#[derive(Debug)]
pub enum Command {
    Connect { client: ClientId, outbox: Arc<Outbox> },
    Disconnect { client: ClientId },
    Message { client: ClientId, message: WireMessage },
    Reject { client: ClientId, error: ErrorPayload },
    Shutdown,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Mode {
    Paused,
    Running,
}

/// ROI statistics over 66-frame slots when no navigation run is active.
#[derive(Debug, Default)]
struct SlotTracker {
    roi: Option<Roi>,
    frames: usize,
    sum: f64,
    count: usize,
    last: Option<f64>,
}

impl SlotTracker {
    fn on_frame(&mut self, sim: &Simulation, frame: &UltrasoundFrame) {
        if self.frames % SLOT_FRAMES == 0 {
            if self.count > 0 {
                self.last = Some(self.sum / self.count as f64);
            }
            self.sum = 0.0;
            self.count = 0;
            self.roi = sim.roi().or(self.roi);
        }
        self.frames += 1;
        if let Some(m) = self.roi.as_ref().and_then(|r| roi_mean_intensity(frame, r).ok()) {
            self.sum += m;
            self.count += 1;
        }
    }
}

pub struct Session {
    config: SessionConfig,
    sim: Simulation,
    nav: Option<NavRun>,
    slots: SlotTracker,
    mode: Mode,
    time_scale: f64,
    until: Option<f64>,
    seq: u64,
    clients: BTreeMap<ClientId, Arc<Outbox>>,
    next_stats: f64,
    /// Wall clock and scene time the pacing is measured from.
    anchor: (Instant, f64),
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, ServiceError> {
        let sim = config.build()?;
        let mode = if config.start_paused { Mode::Paused } else { Mode::Running };
        Ok(Self {
            time_scale: config.time_scale,
            next_stats: sim.time(),
            anchor: (Instant::now(), sim.time()),
            sim,
            nav: None,
            slots: SlotTracker::default(),
            mode,
            until: None,
            seq: 0,
            clients: BTreeMap::new(),
            config,
        })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    fn envelope(&mut self, message: WireMessage) -> Arc<str> {
        self.seq += 1;
        let env = Envelope {
            version: WIRE_VERSION,
            session: self.config.session_id.clone(),
            seq: self.seq,
            message,
        };
        serde_json::to_string(&env).expect("wire messages serialize").into()
    }

    fn broadcast(&mut self, message: WireMessage) {
        let frame = matches!(message, WireMessage::Frame(_));
        let text = self.envelope(message);
        self.clients.retain(|_, out| !out.is_closed());
        for out in self.clients.values() {
            out.push(text.clone(), frame, self.config.max_backlog);
        }
    }

    fn send_to(&mut self, client: ClientId, message: WireMessage) {
        let text = self.envelope(message);
        if let Some(out) = self.clients.get(&client) {
            out.push(text, false, self.config.max_backlog);
        }
    }

    fn hello(&self) -> Hello {
        let probe = &self.sim.config.probe;
        Hello {
            server: format!("magswarm-service {}", env!("CARGO_PKG_VERSION")),
            frame_rate_hz: probe.frame_rate,
            width: probe.cols(),
            height: probe.rows(),
            pixel_pitch_mm: probe.pixel_pitch * 1e3,
            limits: self.config.limits,
            time_scale: self.time_scale,
            paused: self.mode == Mode::Paused,
            field: FieldWire::from(&self.sim.field),
        }
    }

    pub fn stats(&self) -> SceneStats {
        let summary = self.sim.summary();
        SceneStats {
            time_s: summary.time,
            paused: self.mode == Mode::Paused,
            centroid_mm: summary.centroid.as_ref().map(to_mm),
            region: summary.region.as_ref().map(RegionWire::from),
            field: FieldWire::from(&self.sim.field),
            slot_mean_intensity: match &self.nav {
                Some(nav) => nav.slot_means.last().copied(),
                None => self.slots.last,
            },
            nav: self.nav.as_ref().map(|n| NavStatus {
                waypoints_mm: n.plan.iter().map(|w| to_mm(&w.position)).collect(),
                current_target: n.state.current_target,
                completed: n.completed(),
                loss_of_track: n.state.loss_of_track,
                arrivals: n.state.arrivals.iter().map(ArrivalWire::from).collect(),
                max_cross_track_mm: n.max_cross_track * 1e3,
            }),
            clients: self.clients.len(),
        }
    }

    fn emit_stats(&mut self) {
        let stats = self.stats();
        self.broadcast(WireMessage::SceneStats(stats));
    }

    fn reanchor(&mut self) {
        self.anchor = (Instant::now(), self.sim.time());
    }

    /// Applies one command; returns false on shutdown.
    pub fn handle(&mut self, command: Command) -> bool {
        match command {
            Command::Connect { client, outbox } => {
                self.clients.insert(client, outbox);
                let hello = self.hello();
                self.send_to(client, WireMessage::Hello(hello));
            }
            Command::Disconnect { client } => {
                if let Some(out) = self.clients.remove(&client) {
                    out.close();
                }
            }
            Command::Reject { client, error } => self.send_to(client, WireMessage::Error(error)),
            Command::Message { client, message } => {
                if let Err(e) = self.apply(message) {
                    self.send_to(client, WireMessage::Error(e));
                } else if self.mode == Mode::Paused {
                    // nothing else will report the change until the scene moves
                    self.emit_stats();
                }
            }
            Command::Shutdown => {
                for out in self.clients.values() {
                    out.close();
                }
                return false;
            }
        }
        true
    }

    fn apply(&mut self, message: WireMessage) -> Result<(), ErrorPayload> {
        let invalid = |m: String| ErrorPayload::new(ErrorCode::InvalidRequest, m);
        match message {
            WireMessage::FieldCommandSet(patch) => {
                let next = apply_patch(&self.sim.field, &patch, self.sim.time(), &self.config.limits)?;
                // a manual command takes the swarm off the plan
                self.nav = None;
                self.sim.set_field(next).map_err(|e| invalid(e.to_string()))?;
            }
            WireMessage::NavPlanSet(plan) => self.set_plan(plan)?,
            WireMessage::Pause(_) => {
                self.mode = Mode::Paused;
                self.until = None;
            }
            WireMessage::Resume(r) => {
                if let Some(s) = r.time_scale {
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(invalid("time_scale must be > 0".into()));
                    }
                    self.time_scale = s;
                }
                if let Some(t) = r.until_time_s {
                    if !t.is_finite() {
                        return Err(invalid("until_time_s must be finite".into()));
                    }
                }
                self.until = r.until_time_s;
                self.mode = Mode::Running;
                self.reanchor();
            }
            other => {
                return Err(invalid(format!("{} is sent by the server only", message_name(&other))));
            }
        }
        Ok(())
    }

    fn set_plan(&mut self, plan: NavPlan) -> Result<(), ErrorPayload> {
        let invalid = |m: String| ErrorPayload::new(ErrorCode::InvalidRequest, m);
        let tolerance = plan.tolerance_mm.unwrap_or(0.04) * 1e-3;
        let waypoints: Vec<Waypoint> = match (&plan.waypoints_mm, &plan.rectangle) {
            (Some(_), Some(_)) => return Err(invalid("give waypoints_mm or rectangle, not both".into())),
            (None, None) => {
                self.nav = None;
                return Ok(());
            }
            (Some(points), None) => points
                .iter()
                .map(|p| Waypoint::new(from_mm(p), tolerance))
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(e.to_string()))?,
            (None, Some(rect)) => {
                let origin = ground_truth_centroid(&self.sim.scene, &self.sim.config.swarm)
                    .ok_or_else(|| invalid("no swarm to anchor the rectangle at".into()))?;
                plan_rectangle(origin, rect.width_mm * 1e-3, rect.height_mm * 1e-3, tolerance)
                    .map_err(|e| invalid(e.to_string()))?
            }
        };
        if waypoints.iter().any(|w| !self.sim.scene.tank.contains(&w.position)) {
            return Err(invalid("waypoint outside the tank".into()));
        }
        let config = NavConfig {
            source: plan.source.unwrap_or(NavSource::GroundTruth),
            ..NavConfig::default()
        };
        let nav = NavRun::new(waypoints, self.sim.field, config).map_err(|e| invalid(e.to_string()))?;
        self.nav = Some(nav);
        Ok(())
    }

    /// Advances one frame, broadcasting it and any due stats.
    pub fn tick(&mut self) -> Result<(), ServiceError> {
        let field = self.sim.field;
        let frame = self.sim.advance_frame()?;
        let index = self.sim.frame_index - 1;
        if let Some(nav) = &mut self.nav {
            let cmd = nav.on_frame(&self.sim, &frame)?;
            self.sim.set_field(cmd)?;
        } else {
            self.slots.on_frame(&self.sim, &frame);
        }
        self.broadcast(WireMessage::Frame(FramePayload::new(index, &frame, &field)));
        if self.sim.time() + 1e-9 >= self.next_stats {
            self.next_stats += 1.0;
            self.emit_stats();
        }
        if self.until.is_some_and(|t| self.sim.time() + 1e-9 >= t) {
            self.until = None;
            self.mode = Mode::Paused;
            self.emit_stats();
        }
        Ok(())
    }

    fn next_frame_due(&self) -> Instant {
        let next = self.sim.frame_time(self.sim.frame_index);
        let wall = (next - self.anchor.1).max(0.0) / self.time_scale;
        self.anchor.0 + Duration::from_secs_f64(wall)
    }

    /// Runs until [`Command::Shutdown`] or all senders are gone.
    pub fn run(mut self, commands: Receiver<Command>) {
        loop {
            let wait = match self.mode {
                Mode::Paused => None,
                Mode::Running => Some(self.next_frame_due().saturating_duration_since(Instant::now())),
            };
            let received = match wait {
                None => commands.recv().map_err(|_| RecvTimeoutError::Disconnected),
                Some(d) if d.is_zero() => commands.try_recv().map_err(|e| match e {
                    std::sync::mpsc::TryRecvError::Empty => RecvTimeoutError::Timeout,
                    std::sync::mpsc::TryRecvError::Disconnected => RecvTimeoutError::Disconnected,
                }),
                Some(d) => commands.recv_timeout(d),
            };
            match received {
                Ok(cmd) => {
                    if !self.handle(cmd) {
                        return;
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return,
                Err(RecvTimeoutError::Timeout) => {
                    if let Err(e) = self.tick() {
                        tracing::error!("simulation failed: {e}");
                        self.mode = Mode::Paused;
                        self.broadcast(WireMessage::Error(ErrorPayload::new(ErrorCode::Internal, e.to_string())));
                    }
                    if Instant::now() > self.next_frame_due() + Duration::from_millis(250) {
                        // fell behind; don't try to catch up in a burst
                        self.reanchor();
                    }
                }
            }
        }
    }
}

fn message_name(m: &WireMessage) -> &'static str {
    match m {
        WireMessage::Hello(_) => "Hello",
        WireMessage::Frame(_) => "Frame",
        WireMessage::SceneStats(_) => "SceneStats",
        WireMessage::FieldCommandSet(_) => "FieldCommandSet",
        WireMessage::NavPlanSet(_) => "NavPlanSet",
        WireMessage::Pause(_) => "Pause",
        WireMessage::Resume(_) => "Resume",
        WireMessage::Error(_) => "Error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(out: &Outbox) -> Vec<Envelope> {
        out.queue
            .lock()
            .unwrap()
            .drain(..)
            .map(|m| serde_json::from_str(&m.text).unwrap())
            .collect()
    }

    #[test]
    fn outbox_keeps_latest_frame_only() {
        let out = Outbox::default();
        out.push("f1".into(), true, 10);
        out.push("s1".into(), false, 10);
        out.push("f2".into(), true, 10);
        let q: Vec<String> = out.queue.lock().unwrap().iter().map(|m| m.text.to_string()).collect();
        assert_eq!(q, ["s1", "f2"]);
    }

    #[test]
    fn outbox_closes_on_backlog() {
        let out = Outbox::default();
        for _ in 0..4 {
            out.push("s".into(), false, 3);
        }
        assert!(out.is_closed());
    }

    #[test]
    fn commands_apply_between_frames() {
        let config = SessionConfig { start_paused: true, ..SessionConfig::default() };
        let mut s = Session::new(config).unwrap();
        let out = Outbox::new();
        s.handle(Command::Connect { client: 1, outbox: out.clone() });
        let patch = FieldPatch { yaw_delta_deg: Some(90.0), ..FieldPatch::default() };
        s.handle(Command::Message { client: 1, message: WireMessage::FieldCommandSet(patch) });
        s.handle(Command::Message {
            client: 1,
            message: WireMessage::FieldCommandSet(FieldPatch { pitch_deg: Some(30.0), ..FieldPatch::default() }),
        });
        s.tick().unwrap();
        let msgs = drain(&out);
        let kinds: Vec<&str> = msgs.iter().map(|e| message_name(&e.message)).collect();
        assert_eq!(kinds, ["Hello", "SceneStats", "Error", "Frame", "SceneStats"]);
        assert!(msgs.windows(2).all(|w| w[1].seq > w[0].seq));
        let WireMessage::SceneStats(stats) = &msgs[1].message else { unreachable!() };
        assert!((stats.field.yaw_deg - 90.0).abs() < 1e-9);
        let WireMessage::Error(e) = &msgs[2].message else { unreachable!() };
        assert_eq!(e.code, ErrorCode::OutOfBounds);
        let WireMessage::Frame(f) = &msgs[3].message else { unreachable!() };
        assert_eq!(f.frame_index, 0);
        assert!((f.field.yaw_deg - 90.0).abs() < 1e-9);
    }

    #[test]
    fn resume_until_pauses_again() {
        let config = SessionConfig { start_paused: true, ..SessionConfig::default() };
        let mut s = Session::new(config).unwrap();
        s.handle(Command::Message {
            client: 0,
            message: WireMessage::Resume(Resume { until_time_s: Some(0.2), time_scale: None }),
        });
        assert_eq!(s.mode, Mode::Running);
        while s.mode == Mode::Running {
            s.tick().unwrap();
        }
        assert!(s.sim.time() >= 0.2 && s.sim.time() < 0.2 + 1.0 / 22.0 + 1e-9);
    }

    #[test]
    fn server_messages_are_rejected() {
        let mut s = Session::new(SessionConfig { start_paused: true, ..SessionConfig::default() }).unwrap();
        let err = s.apply(WireMessage::Error(ErrorPayload::new(ErrorCode::Internal, "x"))).unwrap_err();
        assert_eq!(err.code, ErrorCode::InvalidRequest);
    }
}
