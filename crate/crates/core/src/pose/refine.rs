use nalgebra::{Matrix3, Matrix6, Rotation3, Vector6};

use super::{inlier_mask, Correspondence, PoseError};
use crate::geometry::{CameraIntrinsics, ScenePose, Vec3};

/// Update norm below which refinement stops once the inlier set is stable.
pub const REFINE_STEP_TOL: f64 = 1e-9;

const MAX_HALVINGS: usize = 10;

/// World-to-camera transform used during optimisation.
#[derive(Clone, Copy)]
struct Extrinsics {
    r: Matrix3<f64>,
    t: Vec3,
}

impl Extrinsics {
    fn from_pose(p: &ScenePose) -> Self {
        let inv = p.inverse();
        Self {
            r: inv.rotation_matrix(),
            t: inv.translation,
        }
    }

    fn to_pose(self) -> ScenePose {
        ScenePose::from_matrix(&self.r, self.t).inverse()
    }

    /// Left-multiplies by exp(ω) and then shifts by δt.
    fn perturbed(&self, delta: &Vector6<f64>) -> Self {
        let w = Rotation3::new(Vec3::new(delta[0], delta[1], delta[2])).into_inner();
        Self {
            r: w * self.r,
            t: w * self.t + Vec3::new(delta[3], delta[4], delta[5]),
        }
    }

    fn residual(&self, c: &Correspondence, intr: &CameraIntrinsics) -> Option<(Vec3, [f64; 2])> {
        let xc = self.r * c.world + self.t;
        if xc.z <= 1e-9 {
            return None;
        }
        let u = intr.focal * xc.x / xc.z + intr.cx - c.pixel.0;
        let v = intr.focal * xc.y / xc.z + intr.cy - c.pixel.1;
        Some((xc, [u, v]))
    }

    /// Solves the normal equations for the update minimising the squared
    /// pixel residuals of `idx`.
    fn gauss_newton_step(
        &self,
        corrs: &[Correspondence],
        idx: &[usize],
        intr: &CameraIntrinsics,
    ) -> Option<Vector6<f64>> {
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for &i in idx {
            let Some((xc, r)) = self.residual(&corrs[i], intr) else {
                continue;
            };
            let (f, iz) = (intr.focal, 1.0 / xc.z);
            let du = Vec3::new(f * iz, 0.0, -f * xc.x * iz * iz);
            let dv = Vec3::new(0.0, f * iz, -f * xc.y * iz * iz);
            for (d, res) in [(du, r[0]), (dv, r[1])] {
                // ∂xc/∂ω = −[xc]×, ∂xc/∂δt = I
                let rot = xc.cross(&d);
                let row = Vector6::new(rot[0], rot[1], rot[2], d[0], d[1], d[2]);
                jtj += row * row.transpose();
                jtr += row * res;
            }
        }
        jtj.lu()
            .solve(&(-jtr))
            .filter(|s| s.iter().all(|v| v.is_finite()))
    }

    fn rss(&self, corrs: &[Correspondence], idx: &[usize], intr: &CameraIntrinsics) -> f64 {
        idx.iter()
            .map(|&i| match self.residual(&corrs[i], intr) {
                Some((_, r)) => r[0] * r[0] + r[1] * r[1],
                None => f64::INFINITY,
            })
            .sum()
    }
}

fn inlier_indices(
    pose: &ScenePose,
    intr: &CameraIntrinsics,
    corrs: &[Correspondence],
    tau: f64,
) -> Vec<usize> {
    inlier_mask(pose, intr, corrs, tau)
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// A few undamped Newton steps on the given correspondences, keeping only
/// steps that reduce the pixel error.
pub(super) fn polish_pose(
    pose: &ScenePose,
    corrs: &[Correspondence],
    intr: &CameraIntrinsics,
    iters: usize,
) -> ScenePose {
    let idx: Vec<usize> = (0..corrs.len()).collect();
    let mut ext = Extrinsics::from_pose(pose);
    let mut rss = ext.rss(corrs, &idx, intr);
    for _ in 0..iters {
        let Some(step) = ext.gauss_newton_step(corrs, &idx, intr) else {
            break;
        };
        let next = ext.perturbed(&step);
        let next_rss = next.rss(corrs, &idx, intr);
        if !(next_rss < rss) {
            break;
        }
        ext = next;
        rss = next_rss;
    }
    ext.to_pose()
}

/// Gauss-Newton on the summed squared pixel error of the inliers
/// (`e_i < tau`), re-selecting inliers after every accepted step.
pub fn refine(
    pose: &ScenePose,
    corrs: &[Correspondence],
    intr: &CameraIntrinsics,
    tau: f64,
    max_iters: usize,
) -> Result<ScenePose, PoseError> {
    let mut inliers = inlier_indices(pose, intr, corrs, tau);
    if inliers.len() < 4 {
        return Err(PoseError::TooFewInliers(inliers.len()));
    }
    let mut ext = Extrinsics::from_pose(pose);
    let mut current = *pose;
    for _ in 0..max_iters {
        let Some(step) = ext.gauss_newton_step(corrs, &inliers, intr) else {
            break;
        };
        let rss = ext.rss(corrs, &inliers, intr);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = ext.perturbed(&(step * scale));
            if cand.rss(corrs, &inliers, intr) <= rss {
                accepted = Some(cand);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };
        let next_pose = next.to_pose();
        let next_inliers = inlier_indices(&next_pose, intr, corrs, tau);
        if next_inliers.len() < 4 {
            break;
        }
        ext = next;
        current = next_pose;
        let stable = next_inliers == inliers;
        inliers = next_inliers;
        if stable && step.norm() * scale < REFINE_STEP_TOL {
            break;
        }
    }
    Ok(current)
}
