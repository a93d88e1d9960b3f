use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{inlier_mask, refine, reprojection_error, solve_minimal, Correspondence, PoseError};
use crate::exec::Exec;
use crate::geometry::{CameraIntrinsics, ScenePose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub n_hypotheses: usize,
    /// Inlier threshold in pixels.
    pub tau: f64,
    pub beta_soft: f64,
    pub max_refine_iters: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            n_hypotheses: 256,
            tau: 10.0,
            beta_soft: 0.5,
            max_refine_iters: 100,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), PoseError> {
        if self.n_hypotheses == 0 {
            return Err(PoseError::InvalidConfig(
                "n_hypotheses must be at least 1".into(),
            ));
        }
        if !(self.tau > 0.0) || !(self.beta_soft > 0.0) {
            return Err(PoseError::InvalidConfig(
                "tau and beta_soft must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub pose: ScenePose,
    /// Soft inlier score of the returned pose.
    pub score: f64,
    pub inliers: Vec<bool>,
    /// Index of the winning hypothesis.
    pub hypothesis: usize,
    /// False when refinement had too few inliers and the hypothesis was kept.
    pub refined: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Σ sigmoid(β·(τ − e_i)); points behind the camera add nothing.
pub fn soft_inlier_score(
    pose: &ScenePose,
    corrs: &[Correspondence],
    intr: &CameraIntrinsics,
    tau: f64,
    beta_soft: f64,
) -> f64 {
    corrs
        .iter()
        .map(|c| {
            let e = reprojection_error(pose, intr, c);
            if e.is_finite() {
                sigmoid(beta_soft * (tau - e))
            } else {
                0.0
            }
        })
        .sum()
}

pub fn ransac(
    corrs: &[Correspondence],
    intr: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<RansacResult, PoseError> {
    ransac_with(corrs, intr, cfg, Exec::default())
}

/// Hypothesise-and-verify over random four-point samples. Samples come
/// from one seeded generator before any solving, and the winner is the
/// highest score with ties going to the lowest index, so the result does not
/// depend on the execution schedule.
pub fn ransac_with(
    corrs: &[Correspondence],
    intr: &CameraIntrinsics,
    cfg: &RansacConfig,
    exec: Exec,
) -> Result<RansacResult, PoseError> {
    cfg.validate()?;
    if corrs.len() < 4 {
        return Err(PoseError::TooFewCorrespondences {
            needed: 4,
            got: corrs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let subsets: Vec<[usize; 4]> = (0..cfg.n_hypotheses)
        .map(|_| {
            let s = sample(&mut rng, corrs.len(), 4);
            [s.index(0), s.index(1), s.index(2), s.index(3)]
        })
        .collect();
    let scored = exec.map(subsets.len(), |h| {
        let quad = subsets[h].map(|i| corrs[i]);
        solve_minimal(&quad, intr).ok().map(|pose| {
            (
                soft_inlier_score(&pose, corrs, intr, cfg.tau, cfg.beta_soft),
                pose,
            )
        })
    });
    let mut best: Option<(usize, f64, ScenePose)> = None;
    for (h, s) in scored.into_iter().enumerate() {
        if let Some((score, pose)) = s {
            if best.as_ref().is_none_or(|(_, bs, _)| score > *bs) {
                best = Some((h, score, pose));
            }
        }
    }
    let (hypothesis, _, hyp_pose) = best.ok_or(PoseError::AllHypothesesFailed)?;
    let (pose, refined) = match refine(&hyp_pose, corrs, intr, cfg.tau, cfg.max_refine_iters) {
        Ok(p) => (p, true),
        Err(PoseError::TooFewInliers(_)) => (hyp_pose, false),
        Err(e) => return Err(e),
    };
    Ok(RansacResult {
        score: soft_inlier_score(&pose, corrs, intr, cfg.tau, cfg.beta_soft),
        inliers: inlier_mask(&pose, intr, corrs, cfg.tau),
        pose,
        hypothesis,
        refined,
    })
}
