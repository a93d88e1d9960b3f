//! Training objectives and their gradients.
//!
//! Every loss averages over the contributing (valid) cells and returns the
//! gradient with respect to its prediction input. Classification losses take
//! probabilities (`n x k`, row-major) and integer labels; cells with
//! `mask == false` contribute nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{backproject_ray, CameraIntrinsics, ScenePose, Vec3};
use crate::net::OutputGrads;

/// Constant standing in for log 0.
pub const LOG_ZERO: f64 = -4.0;

const MIN_CAMERA_NORM: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Scalar loss value, gradient w.r.t. the prediction, and the number of
/// contributing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
    pub count: usize,
}

impl LossTerm {
    fn zero(len: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; len],
            count: 0,
        }
    }
}

fn check_class_inputs(
    probs: &[f64],
    k: usize,
    gt: &[usize],
    mask: &[bool],
) -> Result<usize, LossError> {
    let n = gt.len();
    if mask.len() != n || probs.len() != n * k {
        return Err(LossError::ShapeMismatch(format!(
            "{} probabilities for {n} labels with k = {k} and {} mask entries",
            probs.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(LossError::NoValidPixels);
    }
    for i in 0..n {
        if mask[i] && gt[i] >= k {
            return Err(LossError::ShapeMismatch(format!(
                "label {} at cell {i} out of range",
                gt[i]
            )));
        }
    }
    Ok(count)
}

/// Mean of −log p[gt] with the log clamped below at [`LOG_ZERO`].
pub fn ce_loss(
    probs: &[f64],
    k: usize,
    gt: &[usize],
    mask: &[bool],
) -> Result<LossTerm, LossError> {
    let count = check_class_inputs(probs, k, gt, mask)?;
    let inv = 1.0 / count as f64;
    let floor = LOG_ZERO.exp();
    let mut term = LossTerm::zero(probs.len());
    term.count = count;
    for i in (0..gt.len()).filter(|&i| mask[i]) {
        let p = probs[i * k + gt[i]];
        if p > floor {
            term.value -= p.ln() * inv;
            term.grad[i * k + gt[i]] = -inv / p;
        } else {
            term.value -= LOG_ZERO * inv;
        }
    }
    Ok(term)
}

/// Reverse cross-entropy: mean of −Σ_c p_c · log(onehot(gt)_c) with
/// log 0 := [`LOG_ZERO`]. On normalised rows this is 4·(1 − p[gt]).
pub fn rce_loss(
    probs: &[f64],
    k: usize,
    gt: &[usize],
    mask: &[bool],
) -> Result<LossTerm, LossError> {
    let count = check_class_inputs(probs, k, gt, mask)?;
    let scale = -LOG_ZERO / count as f64;
    let mut term = LossTerm::zero(probs.len());
    term.count = count;
    for i in (0..gt.len()).filter(|&i| mask[i]) {
        for c in (0..k).filter(|&c| c != gt[i]) {
            term.value += scale * probs[i * k + c];
            term.grad[i * k + c] = scale;
        }
    }
    Ok(term)
}

/// λ_ce · CE + λ_rce · RCE.
pub fn sce_loss(
    probs: &[f64],
    k: usize,
    gt: &[usize],
    mask: &[bool],
    lambda_ce: f64,
    lambda_rce: f64,
) -> Result<LossTerm, LossError> {
    let ce = ce_loss(probs, k, gt, mask)?;
    let rce = rce_loss(probs, k, gt, mask)?;
    Ok(LossTerm {
        value: lambda_ce * ce.value + lambda_rce * rce.value,
        grad: ce
            .grad
            .iter()
            .zip(&rce.grad)
            .map(|(a, b)| lambda_ce * a + lambda_rce * b)
            .collect(),
        count: ce.count,
    })
}

/// Mean squared Euclidean error of the residuals (gradient is `n x 3`).
pub fn residual_loss(pred: &[Vec3], gt: &[Vec3], mask: &[bool]) -> Result<LossTerm, LossError> {
    let n = pred.len();
    if gt.len() != n || mask.len() != n {
        return Err(LossError::ShapeMismatch(format!(
            "{n} predictions, {} targets, {} mask entries",
            gt.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(LossError::NoValidPixels);
    }
    let inv = 1.0 / count as f64;
    let mut term = LossTerm::zero(n * 3);
    term.count = count;
    for i in (0..n).filter(|&i| mask[i]) {
        let e = pred[i] - gt[i];
        term.value += e.norm_squared() * inv;
        for c in 0..3 {
            term.grad[i * 3 + c] = 2.0 * e[c] * inv;
        }
    }
    Ok(term)
}

/// Angle-based reprojection error ‖γ_i·F⁻¹ŷ_i − f·C⁻¹p_i‖ with
/// γ_i = ‖f·C⁻¹p_i‖ / ‖F⁻¹ŷ_i‖, averaged over valid cells. Cells whose
/// camera-frame prediction is near zero or not in front of the camera are
/// left out of the mean. The gradient is w.r.t. the world coordinates.
pub fn reprojection_loss(
    pred_coords: &[Vec3],
    pixels: &[(f64, f64)],
    pose: &ScenePose,
    intr: &CameraIntrinsics,
    mask: &[bool],
) -> Result<LossTerm, LossError> {
    let n = pred_coords.len();
    if pixels.len() != n || mask.len() != n {
        return Err(LossError::ShapeMismatch(format!(
            "{n} predictions, {} pixels, {} mask entries",
            pixels.len(),
            mask.len()
        )));
    }
    let rot = pose.rotation_matrix();
    let mut used = Vec::new();
    for i in (0..n).filter(|&i| mask[i]) {
        let c = pose.inverse_transform(&pred_coords[i]);
        if c.norm() < MIN_CAMERA_NORM || c.z <= 0.0 {
            continue;
        }
        used.push((i, c));
    }
    if used.is_empty() {
        return Err(LossError::NoValidPixels);
    }
    let inv = 1.0 / used.len() as f64;
    let mut term = LossTerm::zero(n * 3);
    term.count = used.len();
    for (i, c) in used {
        let target = backproject_ray(pixels[i], intr) * intr.focal;
        let cn = c.norm();
        let u = c / cn;
        let tn = target.norm();
        let e = u * tn - target;
        let en = e.norm();
        term.value += en * inv;
        if en > 0.0 {
            // d‖T·c/‖c‖ − target‖/dc = (T/‖c‖)(I − u uᵀ) e/‖e‖
            let de = e / en;
            let dc = (de - u * u.dot(&de)) * (tn / cn) * inv;
            // c = Rᵀ(ŷ − t)  ⇒  dŷ = R·dc
            let dw = rot * dc;
            term.grad[i * 3..i * 3 + 3].copy_from_slice(dw.as_slice());
        }
    }
    Ok(term)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_ce: f64,
    pub lambda_rce: f64,
    /// Reprojection weight once the warm-up is over.
    pub lambda3: f64,
    /// The reprojection term is off for epochs `<= reproj_start_epoch`.
    pub reproj_start_epoch: usize,
}

impl LossWeights {
    pub fn single_scene() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 10.0,
            lambda_ce: 0.1,
            lambda_rce: 1.0,
            lambda3: 0.1,
            reproj_start_epoch: 10,
        }
    }

    pub fn combined_scenes() -> Self {
        Self {
            lambda2: 100000.0,
            ..Self::single_scene()
        }
    }

    pub fn lambda3_at(&self, epoch: usize) -> f64 {
        if epoch <= self.reproj_start_epoch {
            0.0
        } else {
            self.lambda3
        }
    }
}

/// Per-term values and the weighted total, as logged during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: BTreeMap<String, f64>,
    pub total: f64,
    pub valid_pixels: usize,
}

#[derive(Clone, Debug)]
pub struct DenseParts {
    pub ce_r: LossTerm,
    pub ce_s: LossTerm,
    pub residual: LossTerm,
}

#[derive(Clone, Debug)]
pub struct SparseParts {
    pub sce_r: LossTerm,
    pub sce_s: LossTerm,
    pub residual: LossTerm,
    /// Missing when no cell survives the reprojection validity checks.
    pub reprojection: Option<LossTerm>,
}

fn scaled(g: &[f64], s: f64) -> Vec<f64> {
    g.iter().map(|v| v * s).collect()
}

/// L = λ1·(CE_r + CE_s) + λ2·ℓ_r, with the matching output gradients.
pub fn total_dense(parts: &DenseParts, w: &LossWeights) -> (LossReport, OutputGrads) {
    let terms = BTreeMap::from([
        ("ce_r".to_string(), parts.ce_r.value),
        ("ce_s".to_string(), parts.ce_s.value),
        ("residual".to_string(), parts.residual.value),
    ]);
    let total =
        w.lambda1 * (parts.ce_r.value + parts.ce_s.value) + w.lambda2 * parts.residual.value;
    let grads = OutputGrads {
        probs_r: scaled(&parts.ce_r.grad, w.lambda1),
        probs_s: scaled(&parts.ce_s.grad, w.lambda1),
        residual: scaled(&parts.residual.grad, w.lambda2),
    };
    (
        LossReport {
            terms,
            total,
            valid_pixels: parts.residual.count,
        },
        grads,
    )
}

/// ℓ = SCE_r + SCE_s + λ2·ℓ_r + λ3(epoch)·ℓ_rep. The reprojection gradient
/// is w.r.t. world coordinates, which move one-for-one with the residual.
pub fn total_sparse(
    parts: &SparseParts,
    w: &LossWeights,
    epoch: usize,
) -> (LossReport, OutputGrads) {
    let l3 = w.lambda3_at(epoch);
    let rep = parts.reprojection.as_ref();
    let rep_value = rep.map_or(0.0, |r| r.value);
    let terms = BTreeMap::from([
        ("sce_r".to_string(), parts.sce_r.value),
        ("sce_s".to_string(), parts.sce_s.value),
        ("residual".to_string(), parts.residual.value),
        ("reprojection".to_string(), rep_value),
    ]);
    let total =
        parts.sce_r.value + parts.sce_s.value + w.lambda2 * parts.residual.value + l3 * rep_value;
    let mut residual = scaled(&parts.residual.grad, w.lambda2);
    if let Some(r) = rep {
        if l3 != 0.0 {
            residual
                .iter_mut()
                .zip(&r.grad)
                .for_each(|(a, b)| *a += l3 * b);
        }
    }
    let grads = OutputGrads {
        probs_r: parts.sce_r.grad.clone(),
        probs_s: parts.sce_s.grad.clone(),
        residual,
    };
    (
        LossReport {
            terms,
            total,
            valid_pixels: parts.residual.count,
        },
        grads,
    )
}
