//! Live-session wire protocol: newline-delimited JSON messages with a
//! `type` discriminator, plus the transport-independent connection state
//! machine the server drives.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{Drive, ExternalPoseSample, ManualParams, NoiseParams};
use crate::display::{to_voltage, CalibrationMatrix, DEFAULT_ACTIVATION_THRESHOLD};
use crate::geometry::Vec3;
use crate::metrics::{evaluate, SdMode, Trial, DEFAULT_BIN_WIDTH};
use crate::path::{builtin_path, LightPath};
use crate::record::{ControllerKind, DisplayMode, Outcome, TrajectoryRecord};
use crate::render::Frame;
use crate::session::{ControllerConfig, Session, SessionConfig, SessionEvent, DEFAULT_FOLLOW_SPEED};

/// Frames go out on every n-th tick by default (about 50 Hz at 5 ms).
pub const DEFAULT_DECIMATION: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
}

/// Optional overrides carried by `start`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mouse_sensitivity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tremor_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_id: Option<String>,
    /// Inline path; takes precedence over `path_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<LightPath>,
    pub display: DisplayMode,
    pub controller: ControllerKind,
    #[serde(default, skip_serializing_if = "is_default")]
    pub params: StartParams,
}

fn is_default(p: &StartParams) -> bool {
    *p == StartParams::default()
}

impl StartRequest {
    pub fn to_config(&self) -> Result<SessionConfig, String> {
        let path = match (&self.path, &self.path_id) {
            (Some(p), _) => p.clone(),
            (None, Some(id)) => builtin_path(id).map_err(|e| e.to_string())?,
            (None, None) => return Err("start needs `path_id` or `path`".into()),
        };
        let p = self.params;
        let speed = p.speed.unwrap_or(DEFAULT_FOLLOW_SPEED);
        let controller = match self.controller {
            ControllerKind::Manual => {
                let d = ManualParams::default();
                ControllerConfig::Manual(ManualParams {
                    linear_speed: p.linear_speed.unwrap_or(d.linear_speed),
                    mouse_sensitivity: p.mouse_sensitivity.unwrap_or(d.mouse_sensitivity),
                })
            }
            ControllerKind::External => ControllerConfig::External,
            ControllerKind::Ideal => ControllerConfig::Ideal { speed },
            ControllerKind::Noisy => {
                let d = NoiseParams::default();
                ControllerConfig::Noisy {
                    speed,
                    noise: NoiseParams {
                        tremor_sigma: p.tremor_sigma.unwrap_or(d.tremor_sigma),
                        drift_theta: p.drift_theta.unwrap_or(d.drift_theta),
                        drift_sigma: p.drift_sigma.unwrap_or(d.drift_sigma),
                        seed: p.seed.unwrap_or(d.seed),
                    },
                }
            }
        };
        let mut cfg = SessionConfig::new(path, self.display, controller);
        if let Some(r) = p.target_radius {
            cfg.target_radius = r;
        }
        if let Some(t) = p.timeout_s {
            cfg.timeout_s = t;
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Start(StartRequest),
    /// `forward` is −1, 0 or +1; `dyaw`/`dpitch` are raw mouse deltas.
    Input { forward: i64, dyaw: f64, dpitch: f64 },
    Pose { pos: [f64; 3], quat: [f64; 4] },
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Started,
    TargetReached,
    Aborted,
}

/// Per-session summary sent after the terminal event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub path_id: String,
    pub outcome: Outcome,
    pub n_samples: usize,
    pub transit_time_s: Option<f64>,
    pub avg_sd_cm: Option<f64>,
    pub correlation_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Event {
        kind: EventKind,
        t_ms: u64,
    },
    Frame {
        t_ms: u64,
        grid: Vec<f64>,
        /// Electrode voltages, only in tongue-display sessions.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        volts: Option<Vec<f64>>,
    },
    Metrics(SessionMetrics),
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error { message: message.into() }
    }

    pub fn is_terminal_event(&self) -> bool {
        matches!(self, ServerMessage::Event { kind: EventKind::TargetReached | EventKind::Aborted, .. })
    }

    /// One JSON object followed by `\n`.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages serialize");
        s.push('\n');
        s
    }
}

impl ClientMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("client messages serialize");
        s.push('\n');
        s
    }
}

const CLIENT_TYPES: [&str; 4] = ["start", "input", "pose", "abort"];

/// Parses one client line, separating unknown types from malformed input.
pub fn parse_client_message(line: &str) -> Result<ClientMessage, ProtocolError> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match value.get("type").and_then(|t| t.as_str()) {
        None => return Err(ProtocolError::Malformed("missing string field `type`".into())),
        Some(t) if !CLIENT_TYPES.contains(&t) => return Err(ProtocolError::UnknownType(t.to_string())),
        Some(_) => {}
    }
    serde_json::from_value(value).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

/// How a served session's clock advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    /// One tick per `tick_ms` of wall time.
    #[default]
    Realtime,
    /// Scripted controllers run to completion as fast as possible.
    Fast,
    /// Exactly one tick after each `input` or `pose` message.
    Lockstep,
}

#[derive(Debug, Clone)]
pub struct ConnectionOptions {
    pub decimation: u32,
    pub calibration: CalibrationMatrix,
    pub bin_width: f64,
}

impl Default for ConnectionOptions {
    fn default() -> Self {
        Self { decimation: DEFAULT_DECIMATION, calibration: CalibrationMatrix::default(), bin_width: DEFAULT_BIN_WIDTH }
    }
}

/// Protocol state of one client connection: at most one session at a
/// time, no I/O. The server feeds it parsed lines and clock ticks and
/// forwards whatever it returns.
#[derive(Debug)]
pub struct Connection {
    opts: ConnectionOptions,
    session: Option<Session>,
    finished: Vec<TrajectoryRecord>,
}

impl Connection {
    pub fn new(opts: ConnectionOptions) -> Self {
        Self { opts, session: None, finished: Vec::new() }
    }

    pub fn is_running(&self) -> bool {
        self.session.as_ref().is_some_and(|s| !s.is_terminal())
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    /// Records of sessions that ended since the last call.
    pub fn take_finished(&mut self) -> Vec<TrajectoryRecord> {
        std::mem::take(&mut self.finished)
    }

    pub fn handle_line(&mut self, line: &str) -> Vec<ServerMessage> {
        match parse_client_message(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![ServerMessage::error(e.to_string())],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Start(req) => self.start(&req),
            ClientMessage::Input { forward, dyaw, dpitch } => match self.running() {
                Some(s) => {
                    s.push_input(Drive::from_sign(forward), dyaw, dpitch);
                    Vec::new()
                }
                None => vec![ServerMessage::error("`input` before `start`")],
            },
            ClientMessage::Pose { pos, quat } => match self.running() {
                Some(s) => {
                    let t = s.clock_ms();
                    let sample = ExternalPoseSample { position: Vec3::from(pos), quat, source_time_ms: t };
                    match s.push_pose(&sample) {
                        Ok(_) => Vec::new(),
                        Err(e) => vec![ServerMessage::error(e.to_string())],
                    }
                }
                None => vec![ServerMessage::error("`pose` before `start`")],
            },
            ClientMessage::Abort => match self.running() {
                Some(s) => {
                    let ev = s.abort().expect("running session aborts");
                    self.conclude(ev)
                }
                None => vec![ServerMessage::error("no running session to abort")],
            },
        }
    }

    fn running(&mut self) -> Option<&mut Session> {
        self.session.as_mut().filter(|s| !s.is_terminal())
    }

    fn start(&mut self, req: &StartRequest) -> Vec<ServerMessage> {
        if self.is_running() {
            return vec![ServerMessage::error("a session is already running")];
        }
        let session = req.to_config().and_then(|cfg| Session::new(cfg).map_err(|e| e.to_string()));
        let mut session = match session {
            Ok(s) => s,
            Err(e) => return vec![ServerMessage::error(e)],
        };
        let frame = session.start().expect("fresh session starts");
        let mut out = vec![ServerMessage::Event { kind: EventKind::Started, t_ms: 0 }];
        out.push(self.frame_message(&session, 0, &frame));
        self.session = Some(session);
        out
    }

    fn frame_message(&self, session: &Session, t_ms: u64, frame: &Frame) -> ServerMessage {
        let volts = (session.config().display == DisplayMode::Tdu)
            .then(|| to_voltage(frame, &self.opts.calibration, DEFAULT_ACTIVATION_THRESHOLD).ok())
            .flatten()
            .map(|v| v.volts);
        ServerMessage::Frame { t_ms, grid: frame.cells().to_vec(), volts }
    }

    /// Advances a running session by one tick.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let Some(session) = self.running() else {
            return Vec::new();
        };
        let out = session.tick().expect("running session ticks");
        let tick_index = out.t_ms / u64::from(session.config().tick_ms);
        let session = self.session.as_ref().expect("session present");
        let mut msgs = Vec::new();
        if tick_index % u64::from(self.opts.decimation.max(1)) == 0 {
            msgs.push(self.frame_message(session, out.t_ms, &out.frame));
        }
        if let Some(ev) = out.event {
            msgs.extend(self.conclude(ev));
        }
        msgs
    }

    /// Aborts any running session when the client goes away.
    pub fn disconnect(&mut self) {
        if let Some(s) = self.running() {
            let ev = s.abort().expect("running session aborts");
            self.conclude(ev);
        }
    }

    fn conclude(&mut self, ev: SessionEvent) -> Vec<ServerMessage> {
        let session = self.session.as_ref().expect("session present");
        let record = session.record().clone();
        let (kind, outcome) = match ev {
            SessionEvent::TargetReached { .. } => (EventKind::TargetReached, Outcome::Completed),
            SessionEvent::Aborted { .. } => (EventKind::Aborted, Outcome::Aborted),
        };
        let path = &session.config().path;
        let report = Trial::from_record(&record, path, self.opts.bin_width)
            .and_then(|t| evaluate(std::slice::from_ref(&t), SdMode::AboutPath));
        let metrics = SessionMetrics {
            path_id: path.id().to_string(),
            outcome,
            n_samples: record.samples.len(),
            transit_time_s: crate::metrics::transit_time(&record).ok(),
            avg_sd_cm: report.as_ref().ok().map(|r| r.avg_sd_cm),
            correlation_pct: report.as_ref().ok().map(|r| r.correlation_pct),
        };
        self.finished.push(record);
        vec![ServerMessage::Event { kind, t_ms: ev.t_ms() }, ServerMessage::Metrics(metrics)]
    }
}

impl Connection {
    /// True while the running session is driven by a scripted controller.
    pub fn is_scripted(&self) -> bool {
        self.is_running() && self.session.as_ref().is_some_and(|s| s.config().controller.is_scripted())
    }
}

/// Feeds `inbound` to a connection under the given clock and collects
/// everything it sends back. Scripted sessions run to their end right after
/// `start` under `Fast` and `Realtime`, since pacing only changes wall-clock
/// timing and not the message sequence. Sessions driven by the client step
/// once per `input`/`pose` message under every clock here.
pub fn run_script(conn: &mut Connection, inbound: &[ClientMessage], clock: ClockMode) -> Vec<ServerMessage> {
    let mut out = Vec::new();
    for msg in inbound {
        let steps = matches!(msg, ClientMessage::Input { .. } | ClientMessage::Pose { .. });
        out.extend(conn.handle(msg.clone()));
        if clock != ClockMode::Lockstep && conn.is_scripted() {
            while conn.is_running() {
                out.extend(conn.tick());
            }
        } else if steps {
            out.extend(conn.tick());
        }
    }
    out
}
