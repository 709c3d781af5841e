//! World-frame vectors, unit quaternions and camera poses.
//!
//! The world frame is right-handed with z up and all lengths in
//! centimeters. The origin sits at the bottom center of the 12 cm
//! working cube, so the cube spans `x, y ∈ [-6, 6]` and `z ∈ [0, 12]`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Side of the working cube in cm.
pub const CUBE_SIDE: f64 = 12.0;
/// Half side of the working cube in cm.
pub const CUBE_HALF: f64 = CUBE_SIDE / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, rhs: Vec3) -> f64 {
        (self - rhs).norm()
    }

    /// Returns `None` for a zero-length vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn lerp(self, rhs: Vec3, t: f64) -> Vec3 {
        self + (rhs - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// True when the point lies inside the closed working cube.
    pub fn in_cube(self) -> bool {
        self.x.abs() <= CUBE_HALF
            && self.y.abs() <= CUBE_HALF
            && (0.0..=CUBE_SIDE).contains(&self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Rotation quaternion kept at unit norm.
///
/// Serialized as `[w, x, y, z]`. Deserialization does not normalize; use
/// [`UnitQuat::try_from_components`] when the source is untrusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl From<[f64; 4]> for UnitQuat {
    fn from(a: [f64; 4]) -> Self {
        UnitQuat { w: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.to_array()
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Normalizes the raw components. Returns `None` for a zero or
    /// non-finite quaternion.
    pub fn normalize_components(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        Some(UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n })
    }

    /// Accepts raw components whose norm is within `tolerance` of one,
    /// renormalizing them. Returns the offending norm otherwise.
    pub fn try_from_components(c: [f64; 4], tolerance: f64) -> Result<Self, f64> {
        let n = raw_norm(c);
        if !n.is_finite() || (n - 1.0).abs() > tolerance {
            return Err(n);
        }
        Ok(UnitQuat::normalize_components(c[0], c[1], c[2], c[3]).expect("norm close to one"))
    }

    /// Rotation of `angle` radians about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Self::IDENTITY;
        };
        let (s, c) = (angle / 2.0).sin_cos();
        UnitQuat::normalize_components(c, a.x * s, a.y * s, a.z * s).unwrap_or(Self::IDENTITY)
    }

    /// Shortest-arc rotation taking direction `from` onto direction `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Self {
        let (Some(a), Some(b)) = (from.normalized(), to.normalized()) else {
            return Self::IDENTITY;
        };
        let d = a.dot(b);
        if d < -1.0 + 1e-12 {
            // antiparallel: any axis orthogonal to `a`
            let helper = if a.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
            let axis = a.cross(helper);
            return Self::from_axis_angle(axis, std::f64::consts::PI);
        }
        let c = a.cross(b);
        UnitQuat::normalize_components(1.0 + d, c.x, c.y, c.z).unwrap_or(Self::IDENTITY)
    }

    /// Orientation whose view axis (local −z) points along `dir`.
    pub fn looking_along(dir: Vec3) -> Self {
        Self::rotation_between(-Vec3::Z, dir)
    }

    pub fn w(self) -> f64 {
        self.w
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        raw_norm(self.to_array())
    }

    pub fn conjugate(self) -> Self {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn renormalized(self) -> Self {
        UnitQuat::normalize_components(self.w, self.x, self.y, self.z).unwrap_or(Self::IDENTITY)
    }

    /// Hamilton product without renormalization.
    fn product(self, r: UnitQuat) -> UnitQuat {
        let q = self;
        UnitQuat {
            w: q.w * r.w - q.x * r.x - q.y * r.y - q.z * r.z,
            x: q.w * r.x + q.x * r.w + q.y * r.z - q.z * r.y,
            y: q.w * r.y - q.x * r.z + q.y * r.w + q.z * r.x,
            z: q.w * r.z + q.x * r.y - q.y * r.x + q.z * r.w,
        }
    }

    /// Rotates `v` by this quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w (u × v) + 2 u × (u × v)
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotates `v` by the inverse of this quaternion.
    pub fn inverse_rotate(self, v: Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;

    /// Composition `self ∘ rhs` (apply `rhs` first), renormalized.
    fn mul(self, rhs: UnitQuat) -> UnitQuat {
        self.product(rhs).renormalized()
    }
}

fn raw_norm(c: [f64; 4]) -> f64 {
    c.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Camera or tool state: position plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuat,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuat) -> Self {
        Self { position, orientation }
    }

    /// Pose at `position` looking straight down (world −z).
    pub fn looking_down(position: Vec3) -> Self {
        Self { position, orientation: UnitQuat::IDENTITY }
    }

    pub fn view_axis(&self) -> Vec3 {
        view_axis(self)
    }

    /// Expresses a world point in this pose's local frame.
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        self.orientation.inverse_rotate(p - self.position)
    }
}

/// Unit vector along which the pose looks: local −z rotated into the world.
pub fn view_axis(pose: &Pose) -> Vec3 {
    pose.orientation.rotate(-Vec3::Z)
}
