//! Pseudo-labels from sparse supervision.
//!
//! Sparse ground truth is spread to a square neighbourhood on the prediction
//! grid. Each newly covered cell copies the labels of its nearest source cell.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::hierarchy::CoordLabelMaps;

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("shape mismatch: maps are {expected} cells, mask has {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Half-width of the propagation window, in grid cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub z: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { z: 5 }
    }
}

/// Copies each valid cell's labels to every cell within Chebyshev distance
/// `z`. Cells covered by several sources take the nearest one (Euclidean
/// grid distance), ties going to the first source in row-major order.
pub fn propagate_labels(maps: &CoordLabelMaps, cfg: PropagationConfig) -> CoordLabelMaps {
    propagate_labels_with(maps, cfg, Exec::default())
}

pub fn propagate_labels_with(
    maps: &CoordLabelMaps,
    cfg: PropagationConfig,
    exec: Exec,
) -> CoordLabelMaps {
    let (w, h, z) = (maps.w as isize, maps.h as isize, cfg.z as isize);
    let source = exec.map(maps.len(), |i| {
        let (x, y) = ((i % maps.w) as isize, (i / maps.w) as isize);
        let mut best: Option<(isize, usize)> = None;
        // Row-major scan, so strict `<` keeps the first of equal-distance sources.
        for sy in (y - z).max(0)..=(y + z).min(h - 1) {
            for sx in (x - z).max(0)..=(x + z).min(w - 1) {
                let j = (sy * w + sx) as usize;
                if !maps.mask[j] {
                    continue;
                }
                let d2 = (sx - x).pow(2) + (sy - y).pow(2);
                if best.is_none_or(|(bd, _)| d2 < bd) {
                    best = Some((d2, j));
                }
            }
        }
        best.map(|(_, j)| j)
    });
    let mut out = maps.clone();
    for (i, s) in source.into_iter().enumerate() {
        if let Some(j) = s {
            out.region[i] = maps.region[j];
            out.sub[i] = maps.sub[j];
            out.residual[i] = maps.residual[j];
            out.mask[i] = true;
        }
    }
    out
}

/// Keeps labels only where both the original mask and `keep` are set.
pub fn sparsify_dense(maps: &CoordLabelMaps, keep: &[bool]) -> Result<CoordLabelMaps, SparseError> {
    if keep.len() != maps.len() {
        return Err(SparseError::ShapeMismatch {
            expected: maps.len(),
            got: keep.len(),
        });
    }
    let mut out = maps.clone();
    for (m, &k) in out.mask.iter_mut().zip(keep) {
        *m &= k;
    }
    Ok(out)
}

/// A keep mask selecting `round(fraction * valid)` of the valid cells
/// (at least one when any exist), uniformly at random.
pub fn random_keep_mask(maps: &CoordLabelMaps, fraction: f64, seed: u64) -> Vec<bool> {
    let valid: Vec<usize> = (0..maps.len()).filter(|&i| maps.mask[i]).collect();
    let mut keep = vec![false; maps.len()];
    if valid.is_empty() {
        return keep;
    }
    let n =
        ((fraction.clamp(0.0, 1.0) * valid.len() as f64).round() as usize).clamp(1, valid.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in sample(&mut rng, valid.len(), n).iter() {
        keep[valid[i]] = true;
    }
    keep
}
