//! Test-time localisation: predict coordinates, build 2D-3D
//! correspondences on the cell centres, and solve for the pose.

use crate::eval::{subregion_hits, summarize, EvalError, EvalReport, FrameResult, Thresholds};
use crate::exec::Exec;
use crate::geometry::{pose_error, CameraIntrinsics, PixelGrid, ScenePose};
use crate::hierarchy::LabelHierarchy;
use crate::image::Image;
use crate::net::{predict_coords, ConditionedNet, Mode, NetError, PredictionSet};
use crate::pose::{ransac_with, Correspondence, PoseError, RansacConfig, RansacResult};
use crate::synth::RenderedFrame;

/// One correspondence per grid cell, at the cell centre.
pub fn correspondences(
    pred: &PredictionSet,
    hier: &LabelHierarchy,
    grid: &PixelGrid,
) -> Vec<Correspondence> {
    predict_coords(pred, hier)
        .into_iter()
        .enumerate()
        .map(|(i, world)| Correspondence::new(grid.cell_center(i % grid.w(), i / grid.w()), world))
        .collect()
}

#[derive(Debug)]
pub struct Localization {
    pub pred: PredictionSet,
    pub correspondences: Vec<Correspondence>,
    pub result: Result<RansacResult, PoseError>,
}

/// RANSAC seed for frame `frame_id`, so every frame draws its own samples
/// independent of which other frames are processed.
pub fn frame_seed(base: u64, frame_id: usize) -> u64 {
    base.wrapping_add((frame_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn localize_image(
    net: &ConditionedNet,
    hier: &LabelHierarchy,
    image: &Image,
    intr: &CameraIntrinsics,
    grid: &PixelGrid,
    ransac: &RansacConfig,
    exec: Exec,
) -> Result<Localization, NetError> {
    let pred = net.forward(image, Mode::Infer, false)?.pred;
    let corrs = correspondences(&pred, hier, grid);
    let result = ransac_with(&corrs, intr, ransac, exec);
    Ok(Localization {
        pred,
        correspondences: corrs,
        result,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    pub frame_id: usize,
    pub pose: Option<ScenePose>,
    pub t_cm: f64,
    pub r_deg: f64,
    pub n_corr: usize,
    pub ransac_score: f64,
    pub subregion_hits: (usize, usize),
}

impl FrameOutcome {
    pub fn row(&self) -> FrameResult {
        FrameResult {
            frame_id: self.frame_id,
            t_cm: self.t_cm,
            r_deg: self.r_deg,
            n_corr: self.n_corr,
            ransac_score: self.ransac_score,
        }
    }
}

/// Localises every frame (frame-parallel, RANSAC serial inside) and
/// compares against the rendered poses. Failed frames count with infinite
/// error.
pub fn evaluate_frames(
    net: &ConditionedNet,
    hier: &LabelHierarchy,
    frames: &[(usize, RenderedFrame)],
    ransac: &RansacConfig,
    thresholds: Thresholds,
    exec: Exec,
) -> Result<(Vec<FrameOutcome>, EvalReport), EvalError> {
    let outcomes: Vec<Result<FrameOutcome, String>> = exec.map(frames.len(), |i| {
        let (id, frame) = &frames[i];
        let cfg = RansacConfig {
            seed: frame_seed(ransac.seed, *id),
            ..ransac.clone()
        };
        let loc = localize_image(
            net,
            hier,
            &frame.image,
            &frame.intrinsics,
            &frame.grid,
            &cfg,
            Exec::Serial,
        )
        .map_err(|e| e.to_string())?;
        let gt = frame.label_maps(hier).map_err(|e| e.to_string())?;
        let hits = subregion_hits(&loc.pred, &gt).map_err(|e| e.to_string())?;
        let (pose, t_cm, r_deg, score) = match &loc.result {
            Ok(r) => {
                let (t, rot) = pose_error(&r.pose, &frame.pose);
                (Some(r.pose), t, rot, r.score)
            }
            Err(_) => (None, f64::INFINITY, f64::INFINITY, 0.0),
        };
        Ok(FrameOutcome {
            frame_id: *id,
            pose,
            t_cm,
            r_deg,
            n_corr: loc.correspondences.len(),
            ransac_score: score,
            subregion_hits: hits,
        })
    });
    let outcomes = outcomes
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(EvalError::ShapeMismatch)?;
    let errors: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.t_cm, o.r_deg)).collect();
    let mut report = summarize(&errors, thresholds)?;
    let (hits, total) = outcomes.iter().fold((0, 0), |(h, t), o| {
        (h + o.subregion_hits.0, t + o.subregion_hits.1)
    });
    if total > 0 {
        report.subregion_accuracy = Some(hits as f64 / total as f64);
    }
    Ok((outcomes, report))
}
