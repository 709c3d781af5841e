//! Pose controllers: manual (keyboard and mouse semantics), ideal path
//! follower, noisy hand-held follower, and the external pose latch that
//! stands in for an optical tracker.

use std::sync::Arc;

use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, UnitQuat, Vec3};
use crate::path::{LightPath, Polyline};

/// Largest yaw or pitch change accepted in a single tick, degrees.
pub const MAX_TURN_PER_TICK_DEG: f64 = 45.0;
/// Allowed deviation of an external quaternion's norm from one.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("external pose quaternion has norm {0}, expected 1 ± 1e-6")]
    NonUnitQuaternion(f64),
    #[error("external pose position is not finite")]
    NonFinitePosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Drive {
    Backward,
    #[default]
    Idle,
    Forward,
}

impl Drive {
    pub fn sign(self) -> f64 {
        match self {
            Drive::Backward => -1.0,
            Drive::Idle => 0.0,
            Drive::Forward => 1.0,
        }
    }

    /// Maps any integer onto its sign.
    pub fn from_sign(v: i64) -> Self {
        match v.signum() {
            1 => Drive::Forward,
            -1 => Drive::Backward,
            _ => Drive::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    pub forward: Drive,
    /// Yaw about world z, degrees.
    pub dyaw: f64,
    /// Pitch about the camera's local x, degrees.
    pub dpitch: f64,
}

impl ControlCommand {
    /// Command with turns clamped to ±45° per tick.
    pub fn clamped(forward: Drive, dyaw: f64, dpitch: f64) -> Self {
        let c = |v: f64| if v.is_finite() { v.clamp(-MAX_TURN_PER_TICK_DEG, MAX_TURN_PER_TICK_DEG) } else { 0.0 };
        Self { forward, dyaw: c(dyaw), dpitch: c(dpitch) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManualParams {
    /// cm/s
    pub linear_speed: f64,
    /// Degrees per unit of mouse delta.
    pub mouse_sensitivity: f64,
}

impl Default for ManualParams {
    fn default() -> Self {
        Self { linear_speed: 2.0, mouse_sensitivity: 0.1 }
    }
}

/// Hand-instability model: Ornstein–Uhlenbeck drift plus white tremor,
/// applied independently on x and y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// cm/√s per axis
    pub tremor_sigma: f64,
    /// Mean reversion rate of the drift, 1/s.
    pub drift_theta: f64,
    /// cm/√s per axis
    pub drift_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { tremor_sigma: 0.15, drift_theta: 0.5, drift_sigma: 0.3, seed: 0 }
    }
}

impl NoiseParams {
    pub fn is_valid(&self) -> bool {
        [self.tremor_sigma, self.drift_theta, self.drift_sigma]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Yaw about world z, then pitch about the camera's local x, then move
/// along the new view axis.
pub fn step_manual(pose: &Pose, cmd: &ControlCommand, params: &ManualParams, dt: f64) -> Pose {
    let yaw = UnitQuat::from_axis_angle(Vec3::Z, cmd.dyaw.to_radians());
    let pitch = UnitQuat::from_axis_angle(Vec3::X, cmd.dpitch.to_radians());
    let orientation = yaw * pose.orientation * pitch;
    let axis = orientation.rotate(-Vec3::Z);
    let position = pose.position + axis * (cmd.forward.sign() * params.linear_speed * dt);
    Pose { position, orientation }
}

/// Scripted subject that moves along the path polyline at constant speed,
/// looking along the local tangent, and stops at the target.
#[derive(Debug, Clone)]
pub struct PathFollower {
    line: Polyline,
    arc: f64,
}

impl PathFollower {
    pub fn new(path: &LightPath) -> Self {
        Self { line: Polyline::new(path), arc: 0.0 }
    }

    /// Arc length travelled so far, cm.
    pub fn arc(&self) -> f64 {
        self.arc
    }

    pub fn polyline(&self) -> &Polyline {
        &self.line
    }

    pub fn step_ideal(&mut self, pose: &Pose, speed: f64, dt: f64) -> Pose {
        if dt <= 0.0 {
            return *pose;
        }
        self.arc = (self.arc + speed * dt).min(self.line.length());
        Pose {
            position: self.line.point_at(self.arc),
            orientation: UnitQuat::looking_along(self.line.tangent_at(self.arc)),
        }
    }
}

/// Drift and tremor state for the noisy follower. Draws come from ChaCha8
/// seeded with `seed_from_u64(seed)`; normals via the ziggurat sampler of
/// `rand_distr::StandardNormal`. Four draws per step, in the order
/// drift x, drift y, tremor x, tremor y.
#[derive(Debug, Clone)]
pub struct HandNoise {
    params: NoiseParams,
    drift: [f64; 2],
    rng: ChaCha8Rng,
}

impl HandNoise {
    pub fn new(params: NoiseParams) -> Self {
        Self { params, drift: [0.0; 2], rng: ChaCha8Rng::seed_from_u64(params.seed) }
    }

    pub fn params(&self) -> &NoiseParams {
        &self.params
    }

    /// Advances the drift and returns this tick's lateral perturbation.
    pub fn sample(&mut self, dt: f64) -> [f64; 2] {
        let p = self.params;
        let sq = dt.sqrt();
        let mut normal = || -> f64 { self.rng.sample(StandardNormal) };
        let n = [normal(), normal(), normal(), normal()];
        for (d, w) in self.drift.iter_mut().zip(&n[..2]) {
            *d = *d * (1.0 - p.drift_theta * dt) + p.drift_sigma * sq * w;
        }
        [
            self.drift[0] + p.tremor_sigma * sq * n[2],
            self.drift[1] + p.tremor_sigma * sq * n[3],
        ]
    }
}

/// Ideal follower with hand noise added laterally.
#[derive(Debug, Clone)]
pub struct NoisyFollower {
    follower: PathFollower,
    noise: HandNoise,
    ideal: Pose,
}

impl NoisyFollower {
    pub fn new(path: &LightPath, noise: NoiseParams) -> Self {
        Self {
            follower: PathFollower::new(path),
            noise: HandNoise::new(noise),
            ideal: Pose::looking_down(path.start()),
        }
    }

    /// The noise-free pose underneath the last step.
    pub fn ideal_pose(&self) -> Pose {
        self.ideal
    }

    pub fn step_noisy(&mut self, pose: &Pose, speed: f64, dt: f64) -> Pose {
        if dt <= 0.0 {
            return *pose;
        }
        self.ideal = self.follower.step_ideal(&self.ideal, speed, dt);
        let [dx, dy] = self.noise.sample(dt);
        Pose {
            position: self.ideal.position + Vec3::new(dx, dy, 0.0),
            orientation: self.ideal.orientation,
        }
    }
}

/// Pose reported by an external tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalPoseSample {
    pub position: Vec3,
    /// Raw `[w, x, y, z]`; validated on acceptance.
    pub quat: [f64; 4],
    pub source_time_ms: u64,
}

/// Validates an external sample, renormalizing quaternions within the
/// tolerance band.
pub fn accept_external_pose(sample: &ExternalPoseSample) -> Result<Pose, ControlError> {
    if !sample.position.is_finite() {
        return Err(ControlError::NonFinitePosition);
    }
    let orientation = UnitQuat::try_from_components(sample.quat, QUAT_NORM_TOLERANCE)
        .map_err(ControlError::NonUnitQuaternion)?;
    Ok(Pose { position: sample.position, orientation })
}

/// Last-writer-wins mailbox for external poses. Clones share the slot, so
/// a tracker bridge can publish from another thread while the session
/// tick reads.
#[derive(Debug, Clone, Default)]
pub struct PoseLatch {
    slot: Arc<Mutex<Option<Pose>>>,
}

impl PoseLatch {
    pub fn publish(&self, sample: &ExternalPoseSample) -> Result<Pose, ControlError> {
        let pose = accept_external_pose(sample)?;
        *self.slot.lock() = Some(pose);
        Ok(pose)
    }

    /// Latest published pose, if any. The value stays latched.
    pub fn latest(&self) -> Option<Pose> {
        *self.slot.lock()
    }
}
