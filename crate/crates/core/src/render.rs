//! Subjective-view rendering of light points onto the low-resolution grid.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Vec3};
use crate::path::LightPath;

/// Intensities below this are written as zero (not perceptible).
pub const VISIBILITY_FLOOR: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub grid_w: usize,
    pub grid_h: usize,
    /// Full field of view, degrees, same horizontally and vertically.
    pub fov_deg: f64,
    /// Near plane distance, cm.
    pub near: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { grid_w: 12, grid_h: 12, fov_deg: 60.0, near: 0.05 }
    }
}

impl CameraModel {
    pub fn is_valid(&self) -> bool {
        self.grid_w >= 1
            && self.grid_h >= 1
            && self.fov_deg > 0.0
            && self.fov_deg < 180.0
            && self.near >= 0.0
    }

    fn half_extent(&self) -> f64 {
        (self.fov_deg.to_radians() / 2.0).tan()
    }
}

/// Sigmoid distance cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffParams {
    /// Distance at which intensity is one half, cm.
    pub inflexion: f64,
    /// Steepness, 1/cm.
    pub k: f64,
}

impl Default for CutoffParams {
    fn default() -> Self {
        Self { inflexion: 2.0, k: 2.5 }
    }
}

/// Logistic falloff `1 / (1 + exp(k (d - inflexion)))`.
pub fn depth_cutoff(d: f64, p: &CutoffParams) -> f64 {
    1.0 / (1.0 + (p.k * (d - p.inflexion)).exp())
}

/// A projected point: grid cell plus depth along the view axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub col: usize,
    pub row: usize,
    pub depth: f64,
}

/// Pinhole projection of a world point into the camera grid.
///
/// Columns follow local +x and rows follow local +y; row 0 is the top of the
/// displayed matrix. Points at or behind the near plane or outside the
/// frustum are not visible.
pub fn project_point(pose: &Pose, cam: &CameraModel, p: Vec3) -> Option<Projection> {
    let local = pose.to_local(p);
    let depth = -local.z;
    if depth <= cam.near || depth.is_nan() {
        return None;
    }
    let half = cam.half_extent();
    let ndc_x = local.x / (depth * half);
    let ndc_y = local.y / (depth * half);
    if !(ndc_x.abs() <= 1.0 && ndc_y.abs() <= 1.0) {
        return None;
    }
    Some(Projection { col: cell(ndc_x, cam.grid_w), row: cell(ndc_y, cam.grid_h), depth })
}

fn cell(ndc: f64, n: usize) -> usize {
    let c = ((ndc + 1.0) / 2.0 * n as f64).floor() as usize;
    c.min(n - 1)
}

/// Row-major grid of intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    cells: Vec<f64>,
}

impl Frame {
    pub fn blank(width: usize, height: usize) -> Self {
        Self { width, height, cells: vec![0.0; width * height] }
    }

    /// Builds a frame from row-major cells. Returns `None` on a size
    /// mismatch or any value outside `[0, 1]`.
    pub fn from_cells(width: usize, height: usize, cells: Vec<f64>) -> Option<Self> {
        (cells.len() == width * height && cells.iter().all(|v| (0.0..=1.0).contains(v)))
            .then_some(Self { width, height, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn lit_cells(&self) -> usize {
        self.cells.iter().filter(|&&v| v > 0.0).count()
    }

    fn light(&mut self, col: usize, row: usize, intensity: f64) {
        let c = &mut self.cells[row * self.width + col];
        if intensity > *c {
            *c = intensity;
        }
    }
}

/// Renders `points` as seen from `pose`. Each visible point lights one cell
/// with the cutoff of its distance from the camera; coincident points keep
/// the brightest.
pub fn render_points(pose: &Pose, points: &[Vec3], cam: &CameraModel, cut: &CutoffParams) -> Frame {
    let mut frame = Frame::blank(cam.grid_w, cam.grid_h);
    for &p in points {
        let Some(proj) = project_point(pose, cam, p) else {
            continue;
        };
        let intensity = depth_cutoff(pose.position.distance(p), cut);
        if intensity >= VISIBILITY_FLOOR {
            frame.light(proj.col, proj.row, intensity);
        }
    }
    frame
}

pub fn render_frame(pose: &Pose, path: &LightPath, cam: &CameraModel, cut: &CutoffParams) -> Frame {
    render_points(pose, path.points(), cam, cut)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuat;

    #[test]
    fn cutoff_reference_values() {
        let p = CutoffParams::default();
        assert_eq!(depth_cutoff(2.0, &p), 0.5);
        // 1 / (1 + e^-5) and 1 / (1 + e^5)
        assert!((depth_cutoff(0.0, &p) - 0.993_307_149_075_715).abs() < 1e-12);
        assert!((depth_cutoff(0.0, &p) - 0.99331).abs() < 1e-5);
        assert!((depth_cutoff(4.0, &p) - 0.00669).abs() < 1e-5);
    }

    #[test]
    fn center_cells_follow_floor_convention() {
        let pose = Pose::looking_down(Vec3::new(0.0, 0.0, 10.0));
        let cam = CameraModel::default();
        let eps = 1e-6;
        let plus = project_point(&pose, &cam, Vec3::new(eps, eps, 9.0)).unwrap();
        assert_eq!((plus.col, plus.row), (6, 6));
        assert!((plus.depth - 1.0).abs() < 1e-12);
        let minus = project_point(&pose, &cam, Vec3::new(-eps, -eps, 9.0)).unwrap();
        assert_eq!((minus.col, minus.row), (5, 5));
    }

    #[test]
    fn behind_and_near_points_are_hidden() {
        let pose = Pose::looking_down(Vec3::new(0.0, 0.0, 5.0));
        let cam = CameraModel::default();
        assert!(project_point(&pose, &cam, Vec3::new(0.0, 0.0, 6.0)).is_none());
        assert!(project_point(&pose, &cam, Vec3::new(0.0, 0.0, 5.0)).is_none());
        assert!(project_point(&pose, &cam, Vec3::new(0.0, 0.0, 4.96)).is_none());
    }

    #[test]
    fn frustum_edge_maps_to_last_column() {
        let cam = CameraModel::default();
        let pose = Pose::looking_down(Vec3::new(0.0, 0.0, 10.0));
        let d = 3.0;
        let lateral = d * (30f64).to_radians().tan() * 0.99;
        let hit = project_point(&pose, &cam, Vec3::new(lateral, 0.0, 10.0 - d)).unwrap();
        assert_eq!(hit.col, 11);
        // exactly on the +1 edge clamps to the last index
        let edge = d * (30f64).to_radians().tan();
        let hit = project_point(&pose, &cam, Vec3::new(0.0, edge * (1.0 - 1e-15), 10.0 - d)).unwrap();
        assert_eq!(hit.row, 11);
        let outside = project_point(&pose, &cam, Vec3::new(lateral * 1.05, 0.0, 10.0 - d));
        assert!(outside.is_none());
    }

    #[test]
    fn max_compositing_keeps_nearest() {
        let pose = Pose::looking_down(Vec3::new(0.0, 0.0, 10.0));
        let cam = CameraModel::default();
        let cut = CutoffParams::default();
        let near = Vec3::new(0.01, 0.01, 9.0);
        let far = Vec3::new(0.03, 0.03, 7.0);
        let a = project_point(&pose, &cam, near).unwrap();
        let b = project_point(&pose, &cam, far).unwrap();
        assert_eq!((a.col, a.row), (b.col, b.row));
        for pts in [[near, far], [far, near]] {
            let f = render_points(&pose, &pts, &cam, &cut);
            let expected = depth_cutoff(pose.position.distance(near), &cut);
            assert_eq!(f.get(a.col, a.row), expected);
            assert_eq!(f.lit_cells(), 1);
        }
    }

    #[test]
    fn far_camera_sees_nothing() {
        let path = crate::path::builtin_path("path1").unwrap();
        // ten centimeters above the top of the path, looking down at it
        let pose = Pose::looking_down(Vec3::new(0.0, 0.0, 22.5));
        let f = render_frame(&pose, &path, &CameraModel::default(), &CutoffParams::default());
        assert_eq!(f.lit_cells(), 0);
    }

    #[test]
    fn floor_zeroes_faint_points() {
        let pose = Pose::new(Vec3::ZERO, UnitQuat::IDENTITY);
        let cam = CameraModel::default();
        let cut = CutoffParams::default();
        // cutoff(4.5) ≈ 0.0019 < floor, cutoff(4.0) ≈ 0.0067 > floor
        let faint = render_points(&pose, &[Vec3::new(0.0, 0.0, -4.5)], &cam, &cut);
        assert_eq!(faint.lit_cells(), 0);
        let dim = render_points(&pose, &[Vec3::new(0.0, 0.0, -4.0)], &cam, &cut);
        assert_eq!(dim.lit_cells(), 1);
    }
}
