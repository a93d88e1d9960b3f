//! Camera pose from 2D-3D correspondences: a minimal three-point solver,
//! soft-inlier RANSAC over four-point samples, and Gauss-Newton refinement.

mod io;
mod p3p;
mod ransac;
mod refine;

use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, ScenePose, Vec3};

pub use io::{read_correspondences, write_correspondences};
pub use p3p::{p3p, solve_minimal};
pub use ransac::{ransac, ransac_with, soft_inlier_score, RansacConfig, RansacResult};
pub use refine::{refine, REFINE_STEP_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("degenerate configuration: {0}")]
    Degenerate(&'static str),
    #[error("minimal problem has no real solution")]
    NoRealSolution,
    #[error("every hypothesis failed")]
    AllHypothesesFailed,
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("only {0} inliers, need at least 4")]
    TooFewInliers(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad correspondence file: {0}")]
    BadFormat(String),
    #[error("io: {0}")]
    Io(String),
}

/// An observed pixel and the world point predicted for it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub pixel: (f64, f64),
    pub world: Vec3,
}

impl Correspondence {
    pub fn new(pixel: (f64, f64), world: Vec3) -> Self {
        Self { pixel, world }
    }
}

/// Pixel distance between the observation and the projected world point;
/// infinite when the point is not in front of the camera.
pub fn reprojection_error(pose: &ScenePose, intr: &CameraIntrinsics, c: &Correspondence) -> f64 {
    match project(&c.world, pose, intr) {
        Ok(((u, v), _)) => (u - c.pixel.0).hypot(v - c.pixel.1),
        Err(_) => f64::INFINITY,
    }
}

/// `e_i < tau` for every correspondence.
pub fn inlier_mask(
    pose: &ScenePose,
    intr: &CameraIntrinsics,
    corrs: &[Correspondence],
    tau: f64,
) -> Vec<bool> {
    corrs
        .iter()
        .map(|c| reprojection_error(pose, intr, c) < tau)
        .collect()
}
