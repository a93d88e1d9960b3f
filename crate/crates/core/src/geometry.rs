//! Pinhole camera geometry: poses, intrinsics, the prediction grid, and pose
//! error metrics.
//!
//! Conventions: the camera looks along +z, pixel origin is the top-left
//! corner, and a [`ScenePose`] maps camera-frame points into the world frame.

use std::io::{BufRead, Write};

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Subsampling factor between the input image and the prediction grid.
pub const GRID_STRIDE: usize = 8;

const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth {0} in the camera frame")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("image size {0}x{1} is not divisible by {GRID_STRIDE}")]
    BadGrid(usize, usize),
}

/// Rigid camera-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenePose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl ScenePose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a rotation matrix; the matrix is re-orthonormalised
    /// through the quaternion conversion.
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vec3) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// Camera placed at `eye` looking at `target`. `up` is the world
    /// direction that should appear towards the top of the image.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let z = (target - eye).normalize();
        // Image y grows downwards.
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let m = Matrix3::from_columns(&[x, y, z]);
        Self::from_matrix(&m, eye)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Camera-frame point to world frame.
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// World-frame point to camera frame (applies the inverse pose).
    pub fn inverse_transform(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.translation
    }
}

/// Pinhole intrinsics with a single focal length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(focal: f64, cx: f64, cy: f64, grid: &PixelGrid) -> Result<Self, GeometryError> {
        let intr = Self { focal, cx, cy };
        intr.validate(grid)?;
        Ok(intr)
    }

    /// Centred principal point and focal = `focal_ratio * width`.
    pub fn centered(grid: &PixelGrid, focal_ratio: f64) -> Result<Self, GeometryError> {
        Self::new(
            focal_ratio * grid.width as f64,
            grid.width as f64 / 2.0,
            grid.height as f64 / 2.0,
            grid,
        )
    }

    pub fn validate(&self, grid: &PixelGrid) -> Result<(), GeometryError> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal must be positive, got {}",
                self.focal
            )));
        }
        let inside = (0.0..=grid.width as f64).contains(&self.cx)
            && (0.0..=grid.height as f64).contains(&self.cy);
        if !inside {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, grid.width, grid.height
            )));
        }
        Ok(())
    }

    /// The 3x3 calibration matrix C.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal, 0.0, self.cx, //
            0.0, self.focal, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// Camera-frame point to pixel, or `None` behind the camera.
    pub fn project_camera(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= MIN_DEPTH {
            return None;
        }
        Some((
            self.focal * p.x / p.z + self.cx,
            self.focal * p.y / p.z + self.cy,
        ))
    }
}

/// Full-resolution image size plus the derived 1/8 prediction grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        if width == 0
            || height == 0
            || !width.is_multiple_of(GRID_STRIDE)
            || !height.is_multiple_of(GRID_STRIDE)
        {
            return Err(GeometryError::BadGrid(width, height));
        }
        Ok(Self { width, height })
    }

    /// Prediction grid width.
    pub fn w(&self) -> usize {
        self.width / GRID_STRIDE
    }

    /// Prediction grid height.
    pub fn h(&self) -> usize {
        self.height / GRID_STRIDE
    }

    pub fn cells(&self) -> usize {
        self.w() * self.h()
    }

    /// Full-resolution pixel coordinate of the centre of cell (u, v).
    pub fn cell_center(&self, u: usize, v: usize) -> (f64, f64) {
        cell_center(u, v)
    }

    /// Cell containing a full-resolution pixel position, if inside the image.
    pub fn cell_of(&self, px: f64, py: f64) -> Option<(usize, usize)> {
        if !(px >= 0.0 && py >= 0.0 && px < self.width as f64 && py < self.height as f64) {
            return None;
        }
        let u = (px / GRID_STRIDE as f64).floor() as usize;
        let v = (py / GRID_STRIDE as f64).floor() as usize;
        Some((u.min(self.w() - 1), v.min(self.h() - 1)))
    }
}

pub fn cell_center(u: usize, v: usize) -> (f64, f64) {
    let s = GRID_STRIDE as f64;
    (s * u as f64 + 3.5, s * v as f64 + 3.5)
}

/// Pixel position and depth of a world point seen from `pose`.
pub fn project(
    point_world: &Vec3,
    pose: &ScenePose,
    intr: &CameraIntrinsics,
) -> Result<((f64, f64), f64), GeometryError> {
    let c = pose.inverse_transform(point_world);
    if c.z <= MIN_DEPTH {
        return Err(GeometryError::NonPositiveDepth(c.z));
    }
    let uv = (
        intr.focal * c.x / c.z + intr.cx,
        intr.focal * c.y / c.z + intr.cy,
    );
    Ok((uv, c.z))
}

/// C⁻¹·(u, v, 1): the camera-frame ray through a pixel, with unit z.
pub fn backproject_ray(pixel: (f64, f64), intr: &CameraIntrinsics) -> Vec3 {
    Vec3::new(
        (pixel.0 - intr.cx) / intr.focal,
        (pixel.1 - intr.cy) / intr.focal,
        1.0,
    )
}

/// Angle in radians of the rotation taking `b` to `a`, in [0, π].
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let rel = a * b.inverse();
    let q = rel.quaternion();
    let v = q.imag().norm();
    2.0 * v.atan2(q.w.abs())
}

/// (translation error in cm, rotation error in degrees).
pub fn pose_error(estimate: &ScenePose, truth: &ScenePose) -> (f64, f64) {
    let t = 100.0 * (estimate.translation - truth.translation).norm();
    let r = rotation_angle(&estimate.rotation, &truth.rotation).to_degrees();
    (t, r.clamp(0.0, 180.0))
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame_id: usize,
    pub q: [f64; 4],
    pub t: [f64; 3],
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "H")]
    pub height: usize,
}

impl TrajectoryRecord {
    pub fn new(
        frame_id: usize,
        pose: &ScenePose,
        intr: &CameraIntrinsics,
        grid: &PixelGrid,
    ) -> Self {
        let q = pose.rotation.quaternion();
        Self {
            frame_id,
            q: [q.w, q.i, q.j, q.k],
            t: [pose.translation.x, pose.translation.y, pose.translation.z],
            focal: intr.focal,
            cx: intr.cx,
            cy: intr.cy,
            width: grid.width,
            height: grid.height,
        }
    }

    pub fn pose(&self) -> ScenePose {
        let q = nalgebra::Quaternion::new(self.q[0], self.q[1], self.q[2], self.q[3]);
        ScenePose::new(
            UnitQuaternion::from_quaternion(q),
            Vec3::new(self.t[0], self.t[1], self.t[2]),
        )
    }

    pub fn grid(&self) -> Result<PixelGrid, GeometryError> {
        PixelGrid::new(self.width, self.height)
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics, GeometryError> {
        CameraIntrinsics::new(self.focal, self.cx, self.cy, &self.grid()?)
    }
}

pub fn write_trajectory<W: Write>(
    out: &mut W,
    records: &[TrajectoryRecord],
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> std::io::Result<Vec<TrajectoryRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intr() -> CameraIntrinsics {
        let grid = PixelGrid::new(640, 480).unwrap();
        CameraIntrinsics::new(500.0, 320.0, 240.0, &grid).unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> ScenePose {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(-3.0..3.0);
        ScenePose::new(
            UnitQuaternion::from_scaled_axis(axis.normalize() * angle),
            Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ),
        )
    }

    #[test]
    fn project_on_axis() {
        let ((u, v), d) =
            project(&Vec3::new(0.0, 0.0, 1.0), &ScenePose::identity(), &intr()).unwrap();
        assert_eq!((u, v, d), (320.0, 240.0, 1.0));
        let ((u, v), _) =
            project(&Vec3::new(1.0, 0.0, 1.0), &ScenePose::identity(), &intr()).unwrap();
        assert_eq!((u, v), (820.0, 240.0));
    }

    #[test]
    fn project_behind_camera_fails() {
        let err = project(&Vec3::new(0.0, 0.0, -1.0), &ScenePose::identity(), &intr()).unwrap_err();
        assert!(matches!(err, GeometryError::NonPositiveDepth(_)));
        assert!(project(&Vec3::new(0.0, 0.0, 1e-10), &ScenePose::identity(), &intr()).is_err());
    }

    #[test]
    fn project_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = intr().matrix();
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let cam = Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..6.0),
            );
            let world = pose.transform(&cam);
            // K [R^T | -R^T t] applied to the homogeneous world point.
            let r = pose.rotation_matrix();
            let rt = r.transpose();
            let h = k * (rt * world - rt * pose.translation);
            let ((u, v), d) = project(&world, &pose, &intr()).unwrap();
            assert!((u - h.x / h.z).abs() < 1e-9);
            assert!((v - h.y / h.z).abs() < 1e-9);
            assert!((d - h.z).abs() < 1e-9);
        }
    }

    #[test]
    fn backproject_examples() {
        let i = intr();
        assert_eq!(
            backproject_ray((320.0, 240.0), &i),
            Vec3::new(0.0, 0.0, 1.0)
        );
        assert_eq!(
            backproject_ray((820.0, 240.0), &i),
            Vec3::new(1.0, 0.0, 1.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let px = (rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let back = i.matrix() * backproject_ray(px, &i);
            assert!((back.x - px.0).abs() < 1e-12 && (back.y - px.1).abs() < 1e-12);
            assert!((back.z - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pose_error_examples() {
        let p = ScenePose::identity();
        assert_eq!(pose_error(&p, &p), (0.0, 0.0));
        let shifted = ScenePose::new(p.rotation, Vec3::new(0.05, 0.0, 0.0));
        let (t, r) = pose_error(&shifted, &p);
        assert!((t - 5.0).abs() < 1e-12 && r == 0.0);
        let flipped = ScenePose::new(
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI),
            Vec3::zeros(),
        );
        let (t, r) = pose_error(&flipped, &p);
        assert_eq!(t, 0.0);
        assert!((r - 180.0).abs() < 1e-9);
    }

    #[test]
    fn grid_cell_centers() {
        let g = PixelGrid::new(64, 48).unwrap();
        assert_eq!((g.w(), g.h()), (8, 6));
        assert_eq!(g.cell_center(0, 0), (3.5, 3.5));
        assert_eq!(g.cell_center(2, 1), (19.5, 11.5));
        assert_eq!(g.cell_of(19.5, 11.5), Some((2, 1)));
        assert!(PixelGrid::new(63, 48).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        let g = PixelGrid::new(64, 48).unwrap();
        assert!(CameraIntrinsics::new(0.0, 32.0, 24.0, &g).is_err());
        assert!(CameraIntrinsics::new(50.0, 70.0, 24.0, &g).is_err());
    }

    #[test]
    fn look_at_points_camera_at_target() {
        let pose = ScenePose::look_at(
            Vec3::new(1.0, 2.0, 0.5),
            Vec3::new(3.0, -1.0, 0.2),
            Vec3::z(),
        );
        let c = pose.inverse_transform(&Vec3::new(3.0, -1.0, 0.2));
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.z > 0.0);
        // World up projects towards the top of the image (negative y).
        let up = pose.inverse_transform(&Vec3::new(3.0, -1.0, 1.2));
        assert!(up.y < 0.0);
    }

    #[test]
    fn trajectory_round_trip() {
        let grid = PixelGrid::new(64, 48).unwrap();
        let i = CameraIntrinsics::centered(&grid, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let recs: Vec<_> = (0..4)
            .map(|f| TrajectoryRecord::new(f, &random_pose(&mut rng), &i, &grid))
            .collect();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"W\":64"));
        let back = read_trajectory(&buf[..]).unwrap();
        assert_eq!(back, recs);
    }

    proptest! {
        #[test]
        fn double_inverse_is_identity(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
                                      tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0) {
            let p = ScenePose::new(UnitQuaternion::from_scaled_axis(Vec3::new(ax, ay, az) * 2.0), Vec3::new(tx, ty, tz));
            let back = p.inverse().inverse();
            let (a, b) = (p.rotation.quaternion(), back.rotation.quaternion());
            prop_assert!((a.coords - b.coords).abs().max() < 1e-9);
            prop_assert!((p.translation - back.translation).abs().max() < 1e-9);
        }

        #[test]
        fn projecting_transformed_camera_points(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pose = random_pose(&mut rng);
            let cam = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..5.0));
            let ((u, v), _) = project(&pose.transform(&cam), &pose, &intr()).unwrap();
            let (pu, pv) = intr().project_camera(&cam).unwrap();
            prop_assert!((u - pu).abs() < 1e-9 && (v - pv).abs() < 1e-9);
        }

        #[test]
        fn rotation_error_symmetric_and_triangle(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let ab = pose_error(&a, &b).1;
            let ba = pose_error(&b, &a).1;
            prop_assert!((ab - ba).abs() < 1e-6);
            let bc = pose_error(&b, &c).1;
            let ac = pose_error(&a, &c).1;
            prop_assert!(ac <= ab + bc + 1e-6);
            let m = a.rotation_matrix();
            prop_assert!(((m * m.transpose()) - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }
    }
}
