//! Light paths: ordered light points running from the top of the cube
//! (start) to the bottom (target).

use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3, CUBE_HALF, CUBE_SIDE};

/// Number of parameter steps used to tabulate arc length when spacing
/// points along an analytic curve.
const ARC_TABLE_STEPS: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("invalid path parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("path needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} is not finite")]
    NonFinite { index: usize },
    #[error("point {index} {point:?} lies outside the working cube")]
    OutsideCube { index: usize, point: [f64; 3] },
    #[error("points {index} and {next} coincide", next = index + 1)]
    Duplicate { index: usize },
    #[error("start point must have the maximal z and target the minimal z")]
    NotTopToBottom,
    #[error("unknown built-in path `{0}` (expected path1 or path2)")]
    UnknownBuiltin(String),
    #[error("path file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Curved,
    Helical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub kind: PathKind,
    /// Vertical drop from start to target, cm.
    pub height: f64,
    /// Lateral eccentricity, cm. Curve amplitude and helix radius are half of it.
    pub lateral_extent: f64,
    /// Helix revolutions; ignored for curved paths.
    pub turns: f64,
    pub n_points: usize,
}

impl PathParams {
    pub fn curved() -> Self {
        Self { kind: PathKind::Curved, height: 12.0, lateral_extent: 6.0, turns: 1.5, n_points: 40 }
    }

    pub fn helical() -> Self {
        Self { kind: PathKind::Helical, ..Self::curved() }
    }

    pub fn validate(&self) -> Result<(), PathError> {
        let bad = |field, reason: &str| Err(PathError::InvalidParam { field, reason: reason.into() });
        if !(self.height > 0.0 && self.height <= CUBE_SIDE) {
            return bad("height", "must be in (0, 12] cm to fit the cube");
        }
        if !(self.lateral_extent >= 0.0 && self.lateral_extent <= 2.0 * CUBE_HALF) {
            return bad("lateral_extent", "must be in [0, 12] cm to fit the cube");
        }
        if self.kind == PathKind::Helical && !(self.turns.is_finite() && self.turns >= 0.0) {
            return bad("turns", "must be finite and non-negative");
        }
        if self.n_points < 2 {
            return bad("n_points", "must be at least 2");
        }
        Ok(())
    }

    /// Analytic curve at parameter `t ∈ [0, 1]`; `t = 0` is the top.
    fn eval(&self, t: f64) -> Vec3 {
        let a = self.lateral_extent / 2.0;
        let z = self.height * (1.0 - t);
        match self.kind {
            PathKind::Curved => Vec3::new(a * (PI * t).sin(), 0.3 * a * (2.0 * PI * t).sin(), z),
            PathKind::Helical => {
                let phi = 2.0 * PI * self.turns * t;
                Vec3::new(a * phi.cos(), a * phi.sin(), z)
            }
        }
    }

    fn default_id(&self) -> &'static str {
        match self.kind {
            PathKind::Curved => "path1",
            PathKind::Helical => "path2",
        }
    }
}

/// Validated, ordered light points. The first point is the start and the
/// last one the target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LightPath {
    id: String,
    points: Vec<Vec3>,
}

#[derive(Deserialize)]
struct RawPath {
    id: String,
    points: Vec<[f64; 3]>,
}

impl<'de> Deserialize<'de> for LightPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawPath::deserialize(d)?;
        LightPath::new(raw.id, raw.points.into_iter().map(Vec3::from).collect())
            .map_err(serde::de::Error::custom)
    }
}

impl LightPath {
    pub fn new(id: impl Into<String>, points: Vec<Vec3>) -> Result<Self, PathError> {
        if points.len() < 2 {
            return Err(PathError::TooFewPoints(points.len()));
        }
        for (index, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(PathError::NonFinite { index });
            }
            if !p.in_cube() {
                return Err(PathError::OutsideCube { index, point: p.to_array() });
            }
        }
        if let Some(index) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(PathError::Duplicate { index });
        }
        let first = points[0].z;
        let last = points[points.len() - 1].z;
        if points.iter().any(|p| p.z > first || p.z < last) || first == last {
            return Err(PathError::NotTopToBottom);
        }
        Ok(Self { id: id.into(), points })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn start(&self) -> Vec3 {
        self.points[0]
    }

    pub fn target(&self) -> Vec3 {
        self.points[self.points.len() - 1]
    }

    pub fn target_index(&self) -> usize {
        self.points.len() - 1
    }

    /// Total polyline length in cm.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn from_reader(r: impl Read) -> Result<Self, PathError> {
        serde_json::from_reader(r).map_err(|e| PathError::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, PathError> {
        serde_json::from_str(s).map_err(|e| PathError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("path serializes")
    }
}

/// Builds a light path with points evenly spaced by arc length along the
/// analytic curve described by `params`, ordered top to bottom.
pub fn make_path(params: &PathParams) -> Result<LightPath, PathError> {
    params.validate()?;
    let n = params.n_points;

    // cumulative arc length on a fine parameter grid
    let mut table = Vec::with_capacity(ARC_TABLE_STEPS + 1);
    table.push(0.0);
    let mut prev = params.eval(0.0);
    for i in 1..=ARC_TABLE_STEPS {
        let p = params.eval(i as f64 / ARC_TABLE_STEPS as f64);
        let last = table[i - 1];
        table.push(last + prev.distance(p));
        prev = p;
    }
    let total = table[ARC_TABLE_STEPS];

    let mut points = Vec::with_capacity(n);
    for k in 0..n {
        let t = if k == 0 {
            0.0
        } else if k == n - 1 {
            1.0
        } else {
            let s = total * k as f64 / (n - 1) as f64;
            let j = table.partition_point(|&c| c <= s).clamp(1, ARC_TABLE_STEPS);
            let (c0, c1) = (table[j - 1], table[j]);
            let frac = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
            (j as f64 - 1.0 + frac) / ARC_TABLE_STEPS as f64
        };
        points.push(params.eval(t));
    }
    LightPath::new(params.default_id(), points)
}

/// The two reference paths: `path1` (curved S-bend) and `path2` (helix).
pub fn builtin_path(id: &str) -> Result<LightPath, PathError> {
    match id {
        "path1" => make_path(&PathParams::curved()),
        "path2" => make_path(&PathParams::helical()),
        other => Err(PathError::UnknownBuiltin(other.to_string())),
    }
}

pub fn distance_to_target(pose: &Pose, path: &LightPath) -> f64 {
    pose.position.distance(path.target())
}

/// Arc-length parameterization of a path's polyline.
#[derive(Debug, Clone)]
pub struct Polyline {
    points: Vec<Vec3>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(path: &LightPath) -> Self {
        let points = path.points().to_vec();
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + w[0].distance(w[1]));
        }
        Self { points, cumulative }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        let j = self.cumulative.partition_point(|&c| c <= s);
        j.clamp(1, self.points.len() - 1) - 1
    }

    /// Point at arc length `s`, clamped to the polyline ends.
    pub fn point_at(&self, s: f64) -> Vec3 {
        if s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return *self.points.last().unwrap();
        }
        let i = self.segment_at(s);
        let (c0, c1) = (self.cumulative[i], self.cumulative[i + 1]);
        self.points[i].lerp(self.points[i + 1], (s - c0) / (c1 - c0))
    }

    /// Unit direction of the segment containing arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec3 {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        (self.points[i + 1] - self.points[i]).normalized().unwrap_or(-Vec3::Z)
    }

    /// Distance from `p` to the closest point of the polyline.
    pub fn distance_from(&self, p: Vec3) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let t = ((p - w[0]).dot(d) / d.dot(d)).clamp(0.0, 1.0);
                p.distance(w[0] + d * t)
            })
            .fold(f64::INFINITY, f64::min)
    }
}
