//! Single-sample training loop over rendered frames.
//!
//! One epoch is one pass over the training frames in a seeded random order.
//! Everything random (order, augmentation, sparse keep masks) derives from
//! `TrainConfig::seed`, so a run is reproducible from its config alone.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::Vec3;
use crate::hierarchy::{CoordLabelMaps, HierarchyError, LabelHierarchy};
use crate::losses::{
    ce_loss, reprojection_loss, residual_loss, sce_loss, total_dense, total_sparse, DenseParts,
    LossError, LossReport, LossWeights, SparseParts,
};
use crate::net::{Adam, ConditionedNet, Mode, NetError};
use crate::sparse::{propagate_labels_with, random_keep_mask, PropagationConfig};
use crate::synth::{augment, RenderedFrame};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training frames")]
    NoFrames,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("non-finite loss at iteration {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Supervision {
    Dense,
    /// Keep `keep_fraction` of each frame's valid cells, then propagate the
    /// survivors over a `(2z+1)²` window.
    Sparse {
        keep_fraction: f64,
        z: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub augment: bool,
    pub weights: LossWeights,
    pub supervision: Supervision,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20000,
            lr: 1e-4,
            augment: true,
            weights: LossWeights::single_scene(),
            supervision: Supervision::Dense,
            seed: 0,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub epoch: usize,
    pub frame: usize,
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
    pub valid_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub epochs: usize,
    /// Iterations skipped because no cell carried a label.
    pub skipped: usize,
    pub final_total: f64,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.random()
}

/// Frames with their sparse keep masks applied. The mask of frame `i` is
/// drawn once from `(seed, i)` and stays fixed for the whole run.
pub fn sparsified_frames(
    frames: &[RenderedFrame],
    hier: &LabelHierarchy,
    keep_fraction: f64,
    seed: u64,
) -> Result<Vec<RenderedFrame>, TrainError> {
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let maps = f.label_maps(hier)?;
            let keep = random_keep_mask(&maps, keep_fraction, mix(seed, i as u64 + 1));
            let mut out = f.clone();
            for (m, k) in out.mask.iter_mut().zip(keep) {
                *m &= k;
            }
            for (c, m) in out.coords.iter_mut().zip(&out.mask) {
                if !m {
                    *c = Vec3::zeros();
                }
            }
            Ok(out)
        })
        .collect()
}

/// Computes the loss for one (possibly augmented) frame and its labels.
/// Returns `None` when no cell is labelled.
pub fn frame_loss(
    net: &ConditionedNet,
    hier: &LabelHierarchy,
    frame: &RenderedFrame,
    maps: &CoordLabelMaps,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Option<(LossReport, Vec<f64>)>, TrainError> {
    if maps.valid_count() == 0 {
        return Ok(None);
    }
    let out = net.forward(&frame.image, Mode::Train(maps), true)?;
    let pred = &out.pred;
    let (report, grads) = match cfg.supervision {
        Supervision::Dense => {
            let parts = DenseParts {
                ce_r: ce_loss(&pred.probs_r, pred.regions, &maps.region, &maps.mask)?,
                ce_s: ce_loss(&pred.probs_s, pred.k, &maps.sub, &maps.mask)?,
                residual: residual_loss(&pred.residual, &maps.residual, &maps.mask)?,
            };
            total_dense(&parts, &cfg.weights)
        }
        Supervision::Sparse { .. } => {
            let w = &cfg.weights;
            // World coordinates from the labelled sub-region centre, so the
            // reprojection gradient lands on the residual head only.
            let coords: Vec<Vec3> = (0..maps.len())
                .map(|i| {
                    if maps.mask[i] {
                        hier.level2_centers[maps.region[i]][maps.sub[i]] + pred.residual[i]
                    } else {
                        Vec3::zeros()
                    }
                })
                .collect();
            let reprojection = match reprojection_loss(
                &coords,
                &frame.cell_pixels,
                &frame.pose,
                &frame.intrinsics,
                &maps.mask,
            ) {
                Ok(t) => Some(t),
                Err(LossError::NoValidPixels) => None,
                Err(e) => return Err(e.into()),
            };
            let parts = SparseParts {
                sce_r: sce_loss(
                    &pred.probs_r,
                    pred.regions,
                    &maps.region,
                    &maps.mask,
                    w.lambda_ce,
                    w.lambda_rce,
                )?,
                sce_s: sce_loss(
                    &pred.probs_s,
                    pred.k,
                    &maps.sub,
                    &maps.mask,
                    w.lambda_ce,
                    w.lambda_rce,
                )?,
                residual: residual_loss(&pred.residual, &maps.residual, &maps.mask)?,
                reprojection,
            };
            total_sparse(&parts, w, epoch)
        }
    };
    let g = net.backward(&out, &grads)?;
    Ok(Some((report, g)))
}

/// Trains `net` in place. `on_step` sees every logged iteration.
pub fn train(
    net: &mut ConditionedNet,
    hier: &LabelHierarchy,
    frames: &[RenderedFrame],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LogRecord),
) -> Result<TrainSummary, TrainError> {
    if frames.is_empty() {
        return Err(TrainError::NoFrames);
    }
    let sparse_frames;
    let (frames, z) = match cfg.supervision {
        Supervision::Dense => (frames, None),
        Supervision::Sparse { keep_fraction, z } => {
            sparse_frames = sparsified_frames(frames, hier, keep_fraction, cfg.seed)?;
            (&sparse_frames[..], Some(z))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net.num_params(), cfg.lr);
    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0;
    let mut skipped = 0;
    let mut final_total = f64::NAN;
    for iter in 0..cfg.iterations {
        if order.is_empty() {
            epoch += 1;
            order = (0..frames.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let idx = order.pop().expect("non-empty order");
        let aug_seed: u64 = rng.random();
        let frame = if cfg.augment {
            augment(&frames[idx], aug_seed)
        } else {
            frames[idx].clone()
        };
        let mut maps = frame.label_maps(hier)?;
        if let Some(z) = z {
            maps = propagate_labels_with(&maps, PropagationConfig { z }, Exec::Serial);
        }
        let Some((report, g)) = frame_loss(net, hier, &frame, &maps, cfg, epoch)? else {
            skipped += 1;
            continue;
        };
        if !report.total.is_finite() {
            return Err(TrainError::NonFinite(iter));
        }
        adam.step(&mut net.params.data, &g);
        final_total = report.total;
        on_step(&LogRecord {
            iter,
            epoch,
            frame: idx,
            terms: report.terms,
            total: report.total,
            valid_pixels: report.valid_pixels,
        });
    }
    Ok(TrainSummary {
        iterations: cfg.iterations,
        epochs: epoch,
        skipped,
        final_total,
    })
}
