//! Localisation metrics: median pose errors, threshold accuracy and joint
//! region / sub-region classification accuracy.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::CoordLabelMaps;
use crate::net::PredictionSet;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no frames to summarise")]
    EmptyInput,
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t_cm: f64,
    pub r_deg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            t_cm: 5.0,
            r_deg: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub median_t_cm: f64,
    pub median_r_deg: f64,
    pub accuracy: f64,
    pub n_frames: usize,
    pub thresholds: Thresholds,
    #[serde(skip)]
    pub errors: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subregion_accuracy: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Medians of (cm, deg) errors and the fraction of frames with both errors
/// strictly below their thresholds. Failed frames should be passed as
/// infinite errors.
pub fn summarize(errors: &[(f64, f64)], thresholds: Thresholds) -> Result<EvalReport, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let hits = errors
        .iter()
        .filter(|(t, r)| *t < thresholds.t_cm && *r < thresholds.r_deg)
        .count();
    Ok(EvalReport {
        median_t_cm: median(errors.iter().map(|e| e.0).collect()),
        median_r_deg: median(errors.iter().map(|e| e.1).collect()),
        accuracy: hits as f64 / errors.len() as f64,
        n_frames: errors.len(),
        thresholds,
        errors: errors.to_vec(),
        subregion_accuracy: None,
    })
}

/// Fraction of valid cells whose predicted (region, sub-region) pair matches
/// the labels.
pub fn subregion_accuracy(pred: &PredictionSet, gt: &CoordLabelMaps) -> Result<f64, EvalError> {
    let (hits, total) = subregion_hits(pred, gt)?;
    if total == 0 {
        return Err(EvalError::NoValidPixels);
    }
    Ok(hits as f64 / total as f64)
}

/// (correct, valid) cell counts, for pooling over several frames.
pub fn subregion_hits(
    pred: &PredictionSet,
    gt: &CoordLabelMaps,
) -> Result<(usize, usize), EvalError> {
    if pred.w != gt.w || pred.h != gt.h {
        return Err(EvalError::ShapeMismatch(format!(
            "prediction {}x{} vs labels {}x{}",
            pred.w, pred.h, gt.w, gt.h
        )));
    }
    let mut hits = 0;
    let mut total = 0;
    for i in (0..gt.len()).filter(|&i| gt.mask[i]) {
        total += 1;
        if pred.region_argmax(i) == gt.region[i] && pred.sub_argmax(i) == gt.sub[i] {
            hits += 1;
        }
    }
    Ok((hits, total))
}

/// One row of the per-frame CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_id: usize,
    pub t_cm: f64,
    pub r_deg: f64,
    pub n_corr: usize,
    pub ransac_score: f64,
}

pub fn write_frame_csv<W: Write>(out: &mut W, rows: &[FrameResult]) -> std::io::Result<()> {
    writeln!(out, "frame_id,t_cm,r_deg,n_corr,ransac_score")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.frame_id, r.t_cm, r.r_deg, r.n_corr, r.ransac_score
        )?;
    }
    Ok(())
}

pub fn read_frame_csv(text: &str) -> Result<Vec<FrameResult>, String> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("line {}: expected 5 fields", n + 1));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("line {}: {e}", n + 1))
        };
        let int = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| format!("line {}: {e}", n + 1))
        };
        rows.push(FrameResult {
            frame_id: int(f[0])?,
            t_cm: num(f[1])?,
            r_deg: num(f[2])?,
            n_corr: int(f[3])?,
            ransac_score: num(f[4])?,
        });
    }
    Ok(rows)
}
