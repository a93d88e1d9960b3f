//! In-memory end-to-end runs: scene, frames, hierarchy, training and
//! evaluation, all from one seeded spec.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, EvalReport, Thresholds};
use crate::exec::Exec;
use crate::geometry::{CameraIntrinsics, GeometryError, PixelGrid, ScenePose};
use crate::hierarchy::{HierarchyError, LabelHierarchy};
use crate::localize::{evaluate_frames, FrameOutcome};
use crate::net::{ConditionedNet, NetConfig};
use crate::pose::RansacConfig;
use crate::synth::{
    render_frame, sample_trajectory, train_test_split, RenderedFrame, SceneKind, SceneModel,
    SynthError,
};
use crate::train::{train, LogRecord, TrainConfig, TrainError, TrainSummary};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub n_points: usize,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    /// Focal length as a multiple of the image width.
    pub focal_ratio: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            kind: SceneKind::RandomBox,
            n_points: 50_000,
            n_frames: 80,
            width: 128,
            height: 96,
            focal_ratio: 0.6,
            seed: 0,
        }
    }
}

/// Noise seed of frame `i`.
pub fn noise_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64 + 1)
}

pub struct Dataset {
    pub scene: SceneModel,
    pub intrinsics: CameraIntrinsics,
    pub grid: PixelGrid,
    pub poses: Vec<ScenePose>,
    pub frames: Vec<RenderedFrame>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn build(spec: &SceneSpec, exec: Exec) -> Result<Self, ExperimentError> {
        let scene = SceneModel::generate(spec.kind, spec.n_points, spec.seed)?;
        let grid = PixelGrid::new(spec.width, spec.height)?;
        let intrinsics = CameraIntrinsics::centered(&grid, spec.focal_ratio)?;
        let poses = sample_trajectory(&scene, spec.n_frames, spec.seed, &intrinsics, &grid)?;
        let frames = exec
            .map(poses.len(), |i| {
                render_frame(
                    &scene,
                    &poses[i],
                    &intrinsics,
                    &grid,
                    noise_seed(spec.seed, i),
                )
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let (train, test) = train_test_split(poses.len());
        Ok(Self {
            scene,
            intrinsics,
            grid,
            poses,
            frames,
            train,
            test,
        })
    }

    pub fn train_frames(&self) -> Vec<RenderedFrame> {
        self.train.iter().map(|&i| self.frames[i].clone()).collect()
    }

    pub fn test_frames(&self) -> Vec<(usize, RenderedFrame)> {
        self.test
            .iter()
            .map(|&i| (i, self.frames[i].clone()))
            .collect()
    }

    /// Translation threshold at `fraction` of the scene diameter, 5° rotation.
    pub fn thresholds(&self, fraction: f64) -> Thresholds {
        Thresholds {
            t_cm: 100.0 * fraction * self.scene.bounds.diameter(),
            r_deg: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub k: usize,
    pub d: usize,
    pub mha_layers: usize,
    pub conditioned: bool,
    pub hierarchy_seed: u64,
    pub net_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            k: 8,
            d: 16,
            mha_layers: 2,
            conditioned: true,
            hierarchy_seed: 0,
            net_seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn net_config(&self, hier: &LabelHierarchy) -> NetConfig {
        NetConfig {
            conditioned: self.conditioned,
            ..NetConfig::for_hierarchy(self.d, hier, self.mha_layers, self.net_seed)
        }
    }
}

pub struct RunOutput {
    pub hierarchy: LabelHierarchy,
    pub net: ConditionedNet,
    pub summary: TrainSummary,
    pub outcomes: Vec<FrameOutcome>,
    pub report: EvalReport,
}

/// Builds the hierarchy, trains on the training split and evaluates on the
/// test split with thresholds at 5% of the scene diameter and 5°.
pub fn run(
    data: &Dataset,
    model: &ModelSpec,
    training: &TrainConfig,
    ransac: &RansacConfig,
    exec: Exec,
    on_step: impl FnMut(&LogRecord),
) -> Result<RunOutput, ExperimentError> {
    let hierarchy = LabelHierarchy::build(&data.scene.point_vecs(), model.k, model.hierarchy_seed)?;
    let mut net = ConditionedNet::new(model.net_config(&hierarchy));
    let summary = train(
        &mut net,
        &hierarchy,
        &data.train_frames(),
        training,
        on_step,
    )?;
    let (outcomes, report) = evaluate_frames(
        &net,
        &hierarchy,
        &data.test_frames(),
        ransac,
        data.thresholds(0.05),
        exec,
    )?;
    Ok(RunOutput {
        hierarchy,
        net,
        summary,
        outcomes,
        report,
    })
}
