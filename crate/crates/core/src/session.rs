//! Experiment session: logical 5 ms clock, per-tick control → render →
//! record loop, and the idle → running → completed/aborted lifecycle.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    step_manual, ControlCommand, ControlError, Drive, ExternalPoseSample, ManualParams, NoiseParams,
    NoisyFollower, PathFollower, PoseLatch,
};
use crate::geometry::Pose;
use crate::path::{distance_to_target, LightPath};
use crate::record::{ControllerKind, DisplayMode, Outcome, RecordHeader, TrajectoryRecord};
use crate::render::{render_frame, CameraModel, CutoffParams, Frame};

pub const DEFAULT_TICK_MS: u32 = 5;
pub const DEFAULT_TARGET_RADIUS: f64 = 0.5;
pub const DEFAULT_TIMEOUT_S: f64 = 300.0;
/// Speed of the scripted followers, cm/s.
pub const DEFAULT_FOLLOW_SPEED: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("session is {0:?}; expected {1}")]
    Phase(Phase, &'static str),
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControllerConfig {
    Manual(ManualParams),
    External,
    Ideal { speed: f64 },
    Noisy { speed: f64, noise: NoiseParams },
}

impl ControllerConfig {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerConfig::Manual(_) => ControllerKind::Manual,
            ControllerConfig::External => ControllerKind::External,
            ControllerConfig::Ideal { .. } => ControllerKind::Ideal,
            ControllerConfig::Noisy { .. } => ControllerKind::Noisy,
        }
    }

    pub fn ideal() -> Self {
        ControllerConfig::Ideal { speed: DEFAULT_FOLLOW_SPEED }
    }

    pub fn noisy(noise: NoiseParams) -> Self {
        ControllerConfig::Noisy { speed: DEFAULT_FOLLOW_SPEED, noise }
    }

    pub fn is_scripted(&self) -> bool {
        matches!(self, ControllerConfig::Ideal { .. } | ControllerConfig::Noisy { .. })
    }

    fn seed(&self) -> Option<u64> {
        match self {
            ControllerConfig::Noisy { noise, .. } => Some(noise.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub path: LightPath,
    pub display: DisplayMode,
    pub controller: ControllerConfig,
    pub tick_ms: u32,
    pub target_radius: f64,
    pub timeout_s: f64,
    pub camera: CameraModel,
    pub cutoff: CutoffParams,
}

impl SessionConfig {
    pub fn new(path: LightPath, display: DisplayMode, controller: ControllerConfig) -> Self {
        Self {
            path,
            display,
            controller,
            tick_ms: DEFAULT_TICK_MS,
            target_radius: DEFAULT_TARGET_RADIUS,
            timeout_s: DEFAULT_TIMEOUT_S,
            camera: CameraModel::default(),
            cutoff: CutoffParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::Config(m.to_string()));
        if self.tick_ms == 0 {
            return bad("tick_ms must be positive");
        }
        if !(self.target_radius > 0.0 && self.target_radius.is_finite()) {
            return bad("target_radius must be positive");
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad("timeout_s must be positive");
        }
        if !self.camera.is_valid() {
            return bad("camera needs 0 < fov_deg < 180, grid ≥ 1x1 and near ≥ 0");
        }
        if !(self.cutoff.inflexion > 0.0 && self.cutoff.k > 0.0) {
            return bad("cutoff inflexion and k must be positive");
        }
        match self.controller {
            ControllerConfig::Manual(m) if !(m.linear_speed > 0.0 && m.mouse_sensitivity.is_finite()) => {
                bad("manual linear_speed must be positive")
            }
            ControllerConfig::Ideal { speed } | ControllerConfig::Noisy { speed, .. } if !(speed > 0.0 && speed.is_finite()) => {
                bad("follower speed must be positive")
            }
            ControllerConfig::Noisy { noise, .. } if !noise.is_valid() => bad("noise parameters must be non-negative"),
            _ => Ok(()),
        }
    }

    pub fn dt(&self) -> f64 {
        f64::from(self.tick_ms) / 1000.0
    }

    fn timeout_ms(&self) -> u64 {
        (self.timeout_s * 1000.0).round() as u64
    }

    pub fn header(&self) -> RecordHeader {
        RecordHeader {
            path_id: self.path.id().to_string(),
            controller: self.controller.kind(),
            display: self.display,
            tick_ms: self.tick_ms,
            target_radius: self.target_radius,
            seed: self.controller.seed(),
            outcome: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Running,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEvent {
    TargetReached { t_ms: u64 },
    Aborted { t_ms: u64 },
}

impl SessionEvent {
    pub fn t_ms(&self) -> u64 {
        match *self {
            SessionEvent::TargetReached { t_ms } | SessionEvent::Aborted { t_ms } => t_ms,
        }
    }
}

#[derive(Debug, Default)]
struct PendingInput {
    forward: Drive,
    dyaw: f64,
    dpitch: f64,
}

/// Manual input accumulator. Deltas arriving between ticks are summed;
/// the drive state is latched until changed. Clones share the same buffer.
#[derive(Debug, Clone, Default)]
pub struct InputMailbox {
    pending: Arc<Mutex<PendingInput>>,
}

impl InputMailbox {
    /// Queues raw input: `dyaw`/`dpitch` are mouse units.
    pub fn push(&self, forward: Drive, dyaw: f64, dpitch: f64) {
        let mut p = self.pending.lock();
        p.forward = forward;
        if dyaw.is_finite() {
            p.dyaw += dyaw;
        }
        if dpitch.is_finite() {
            p.dpitch += dpitch;
        }
    }

    /// Consumes accumulated deltas into a command in degrees.
    fn take(&self, sensitivity: f64) -> ControlCommand {
        let mut p = self.pending.lock();
        let cmd = ControlCommand::clamped(p.forward, p.dyaw * sensitivity, p.dpitch * sensitivity);
        p.dyaw = 0.0;
        p.dpitch = 0.0;
        cmd
    }
}

// one per session, so the size spread between variants does not matter
#[allow(clippy::large_enum_variant)]
#[derive(Debug)]
enum ControllerState {
    Manual(ManualParams),
    External,
    Ideal { follower: PathFollower, speed: f64 },
    Noisy { follower: NoisyFollower, speed: f64 },
}

impl ControllerState {
    fn new(cfg: &ControllerConfig, path: &LightPath) -> Self {
        match *cfg {
            ControllerConfig::Manual(m) => ControllerState::Manual(m),
            ControllerConfig::External => ControllerState::External,
            ControllerConfig::Ideal { speed } => ControllerState::Ideal { follower: PathFollower::new(path), speed },
            ControllerConfig::Noisy { speed, noise } => {
                ControllerState::Noisy { follower: NoisyFollower::new(path, noise), speed }
            }
        }
    }
}

/// Output of one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub t_ms: u64,
    pub frame: Frame,
    pub event: Option<SessionEvent>,
}

#[derive(Debug)]
pub struct Session {
    config: SessionConfig,
    phase: Phase,
    clock_ms: u64,
    pose: Pose,
    record: TrajectoryRecord,
    controller: ControllerState,
    inputs: InputMailbox,
    latch: PoseLatch,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let controller = ControllerState::new(&config.controller, &config.path);
        let record = TrajectoryRecord::new(config.header());
        let pose = Pose::looking_down(config.path.start());
        Ok(Self {
            config,
            phase: Phase::Idle,
            clock_ms: 0,
            pose,
            record,
            controller,
            inputs: InputMailbox::default(),
            latch: PoseLatch::default(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn record(&self) -> &TrajectoryRecord {
        &self.record
    }

    /// Handle for feeding manual input from another context.
    pub fn inputs(&self) -> InputMailbox {
        self.inputs.clone()
    }

    /// Handle for publishing external poses from another context.
    pub fn pose_latch(&self) -> PoseLatch {
        self.latch.clone()
    }

    pub fn push_input(&self, forward: Drive, dyaw: f64, dpitch: f64) {
        self.inputs.push(forward, dyaw, dpitch);
    }

    pub fn push_pose(&self, sample: &ExternalPoseSample) -> Result<Pose, SessionError> {
        Ok(self.latch.publish(sample)?)
    }

    /// Places the camera at the path start looking straight down, starts
    /// the clock and records the t = 0 sample.
    pub fn start(&mut self) -> Result<Frame, SessionError> {
        if self.phase != Phase::Idle {
            return Err(SessionError::Phase(self.phase, "idle"));
        }
        self.phase = Phase::Running;
        self.clock_ms = 0;
        self.pose = Pose::looking_down(self.config.path.start());
        self.record.push(0, self.pose);
        Ok(self.render())
    }

    pub fn render(&self) -> Frame {
        render_frame(&self.pose, &self.config.path, &self.config.camera, &self.config.cutoff)
    }

    pub fn tick(&mut self) -> Result<TickOutput, SessionError> {
        if self.phase != Phase::Running {
            return Err(SessionError::Phase(self.phase, "running"));
        }
        let dt = self.config.dt();
        self.clock_ms += u64::from(self.config.tick_ms);
        self.pose = match &mut self.controller {
            ControllerState::Manual(params) => {
                let cmd = self.inputs.take(params.mouse_sensitivity);
                step_manual(&self.pose, &cmd, params, dt)
            }
            ControllerState::External => self.latch.latest().unwrap_or(self.pose),
            ControllerState::Ideal { follower, speed } => follower.step_ideal(&self.pose, *speed, dt),
            ControllerState::Noisy { follower, speed } => follower.step_noisy(&self.pose, *speed, dt),
        };
        let frame = self.render();
        self.record.push(self.clock_ms, self.pose);

        let event = if distance_to_target(&self.pose, &self.config.path) <= self.config.target_radius {
            Some(self.finish(Outcome::Completed))
        } else if self.clock_ms >= self.config.timeout_ms() {
            Some(self.finish(Outcome::Aborted))
        } else {
            None
        };
        Ok(TickOutput { t_ms: self.clock_ms, frame, event })
    }

    /// Aborts a running session (operator abort or disconnect).
    pub fn abort(&mut self) -> Result<SessionEvent, SessionError> {
        if self.phase != Phase::Running {
            return Err(SessionError::Phase(self.phase, "running"));
        }
        Ok(self.finish(Outcome::Aborted))
    }

    fn finish(&mut self, outcome: Outcome) -> SessionEvent {
        self.record.header.outcome = Some(outcome);
        let t_ms = self.clock_ms;
        match outcome {
            Outcome::Completed => {
                self.phase = Phase::Completed;
                SessionEvent::TargetReached { t_ms }
            }
            Outcome::Aborted => {
                self.phase = Phase::Aborted;
                SessionEvent::Aborted { t_ms }
            }
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.phase, Phase::Completed | Phase::Aborted)
    }

    /// Runs ticks until the session ends.
    pub fn run_to_end(&mut self) -> Result<SessionEvent, SessionError> {
        loop {
            if let Some(ev) = self.tick()?.event {
                return Ok(ev);
            }
        }
    }

    pub fn export_record(&self) -> Result<Vec<u8>, SessionError> {
        if !self.is_terminal() {
            return Err(SessionError::Phase(self.phase, "completed or aborted"));
        }
        Ok(self.record.to_jsonl())
    }

    pub fn into_record(self) -> TrajectoryRecord {
        self.record
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{UnitQuat, Vec3};
    use crate::path::{builtin_path, LightPath};

    fn manual(path: LightPath) -> SessionConfig {
        SessionConfig::new(path, DisplayMode::Vdu, ControllerConfig::Manual(ManualParams::default()))
    }

    #[test]
    fn start_pose_looks_down() {
        for id in ["path1", "path2"] {
            let path = builtin_path(id).unwrap();
            let mut s = Session::new(manual(path.clone())).unwrap();
            s.start().unwrap();
            assert_eq!(s.pose().view_axis(), Vec3::new(0.0, 0.0, -1.0));
            assert_eq!(s.record().samples[0].t_ms, 0);
            assert_eq!(s.record().samples[0].pose.position, path.start());
            assert_eq!(s.phase(), Phase::Running);
        }
    }

    #[test]
    fn lifecycle_errors() {
        let mut s = Session::new(manual(builtin_path("path1").unwrap())).unwrap();
        assert!(matches!(s.tick(), Err(SessionError::Phase(Phase::Idle, _))));
        assert!(s.export_record().is_err());
        s.start().unwrap();
        assert!(s.start().is_err());
        assert!(s.export_record().is_err());
        s.abort().unwrap();
        assert_eq!(s.phase(), Phase::Aborted);
        assert!(s.start().is_err());
        assert!(s.tick().is_err());
        assert!(s.abort().is_err());
    }

    #[test]
    fn idle_controller_times_out() {
        let mut cfg = manual(builtin_path("path1").unwrap());
        cfg.timeout_s = 1.0;
        let mut s = Session::new(cfg).unwrap();
        s.start().unwrap();
        let ev = s.run_to_end().unwrap();
        assert_eq!(ev, SessionEvent::Aborted { t_ms: 1000 });
        assert_eq!(s.record().samples.len(), 201);
        assert!(s.record().has_exact_cadence());
        assert_eq!(s.record().header.outcome, Some(Outcome::Aborted));
        let bytes = s.export_record().unwrap();
        assert_eq!(String::from_utf8(bytes.clone()).unwrap().lines().count(), 202);
        assert_eq!(TrajectoryRecord::read_jsonl(bytes.as_slice()).unwrap(), *s.record());
    }

    #[test]
    fn ideal_completion_tick() {
        // straight 15 cm segment
        let path = LightPath::new("line", vec![Vec3::new(-4.5, 0.0, 12.0), Vec3::new(4.5, 0.0, 0.0)]).unwrap();
        assert!((path.length() - 15.0).abs() < 1e-12);
        let mut s = Session::new(SessionConfig::new(path, DisplayMode::Vdu, ControllerConfig::ideal())).unwrap();
        s.start().unwrap();
        let ev = s.run_to_end().unwrap();
        let t = ev.t_ms() as f64 / 1000.0;
        assert!((t - 7.25).abs() <= 0.005, "{t}");
        assert_eq!(Some(ev.t_ms()), s.record().last_t_ms());
        assert_eq!(s.phase(), Phase::Completed);
    }

    #[test]
    fn manual_inputs_accumulate_between_ticks() {
        let mut s = Session::new(manual(builtin_path("path1").unwrap())).unwrap();
        s.start().unwrap();
        // two mouse deltas of 100 units at 0.1°/unit: 20° total
        s.push_input(Drive::Idle, 100.0, 0.0);
        s.push_input(Drive::Forward, 100.0, 0.0);
        let before = s.pose();
        s.tick().unwrap();
        let expected = UnitQuat::from_axis_angle(Vec3::Z, 20f64.to_radians()) * before.orientation;
        let got = s.pose().orientation.to_array();
        for (a, b) in got.iter().zip(expected.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
        // the drive state stays latched, deltas do not
        let p1 = s.pose();
        s.tick().unwrap();
        assert_eq!(s.pose().orientation, p1.orientation);
        assert!((s.pose().position.distance(p1.position) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn turn_per_tick_is_clamped() {
        let mut s = Session::new(manual(builtin_path("path1").unwrap())).unwrap();
        s.start().unwrap();
        s.push_input(Drive::Idle, 0.0, 10_000.0);
        s.tick().unwrap();
        let axis = s.pose().view_axis();
        // 45° pitch from straight down
        assert!((axis.z + 45f64.to_radians().cos()).abs() < 1e-12);
    }

    #[test]
    fn external_pose_drives_session() {
        let path = builtin_path("path1").unwrap();
        let mut s = Session::new(SessionConfig::new(path.clone(), DisplayMode::Tdu, ControllerConfig::External)).unwrap();
        s.start().unwrap();
        s.tick().unwrap();
        assert_eq!(s.pose().position, path.start());
        let sample = ExternalPoseSample { position: path.target(), quat: [1.0, 0.0, 0.0, 0.0], source_time_ms: 3 };
        s.pose_latch().publish(&sample).unwrap();
        let out = s.tick().unwrap();
        assert_eq!(out.event, Some(SessionEvent::TargetReached { t_ms: 10 }));
        assert!(s.push_pose(&ExternalPoseSample { quat: [0.9, 0.0, 0.0, 0.0], ..sample }).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = manual(builtin_path("path1").unwrap());
        cfg.target_radius = 0.0;
        assert!(Session::new(cfg.clone()).is_err());
        cfg.target_radius = 0.5;
        cfg.camera.fov_deg = 180.0;
        assert!(Session::new(cfg.clone()).is_err());
        cfg.camera.fov_deg = 60.0;
        cfg.controller = ControllerConfig::Ideal { speed: 0.0 };
        assert!(Session::new(cfg).is_err());
    }
}
