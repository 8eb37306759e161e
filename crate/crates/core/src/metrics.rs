//! Recovery-quality metrics: NMSE, signed-support success probability, AUC
//! and edge statistics.
//!
//! Edges are off-diagonal by definition: PS, AUC and edge statistics look at
//! the strict upper triangle only, while NMSE uses full Frobenius norms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::SymmetricMatrix;

/// NMSE values are clamped at this floor when the prediction is exact.
pub const NMSE_FLOOR_DB: f64 = -200.0;
/// `|Θ_ij| <= DEFAULT_EDGE_THRESHOLD` is read as a non-edge.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nmse {
    pub db: f64,
    /// Set when the numerator was exactly zero and `db` was clamped.
    pub exact: bool,
}

/// `10 log₁₀( mean ‖Θᵖ − Θ*‖²_F / mean ‖Θ*‖²_F )`.
pub fn nmse_db(predictions: &[SymmetricMatrix], truths: &[SymmetricMatrix]) -> Result<Nmse> {
    check_pairs(predictions, truths)?;
    let n = predictions.len() as f64;
    let mut err = 0.0;
    let mut norm = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        err += p.distance(t).powi(2);
        norm += t.frobenius_norm_sq();
    }
    let (err, norm) = (err / n, norm / n);
    if norm == 0.0 {
        return Err(Error::UndefinedNormalization);
    }
    if err == 0.0 {
        return Ok(Nmse { db: NMSE_FLOOR_DB, exact: true });
    }
    Ok(Nmse {
        db: (10.0 * (err / norm).log10()).max(NMSE_FLOOR_DB),
        exact: false,
    })
}

fn check_pairs(predictions: &[SymmetricMatrix], truths: &[SymmetricMatrix]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::ShapeError("empty evaluation batch".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::ShapeError(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    for (p, t) in predictions.iter().zip(truths) {
        check_dims(p, t)?;
    }
    Ok(())
}

fn check_dims(p: &SymmetricMatrix, t: &SymmetricMatrix) -> Result<()> {
    if p.dim() != t.dim() {
        return Err(Error::ShapeError(format!(
            "prediction is {}x{}, truth is {}x{}",
            p.dim(),
            p.dim(),
            t.dim(),
            t.dim()
        )));
    }
    Ok(())
}

/// Sign of an entry after thresholding: `0` for non-edges.
fn edge_sign(v: f64, threshold: f64) -> i8 {
    if v.abs() <= threshold {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Whether a single prediction recovers the signed edge set of the truth.
///
/// Strict mode requires an exact signed-support match on the off-diagonals.
/// With `signs_only`, only the true edges are checked (correct sign, above
/// threshold) and spurious edges are ignored.
pub fn signed_support_recovered(
    prediction: &SymmetricMatrix,
    truth: &SymmetricMatrix,
    edge_threshold: f64,
    signs_only: bool,
) -> bool {
    let d = truth.dim();
    for i in 0..d {
        for j in (i + 1)..d {
            let t = edge_sign(truth.get(i, j), 0.0);
            let p = edge_sign(prediction.get(i, j), edge_threshold);
            if t != 0 {
                if p != t {
                    return false;
                }
            } else if !signs_only && p != 0 {
                return false;
            }
        }
    }
    true
}

/// Fraction of instances whose signed edge set is recovered.
pub fn prob_success(
    predictions: &[SymmetricMatrix],
    truths: &[SymmetricMatrix],
    edge_threshold: f64,
    signs_only: bool,
) -> Result<f64> {
    check_pairs(predictions, truths)?;
    let hits = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| signed_support_recovered(p, t, edge_threshold, signs_only))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Area under the ROC curve ranking upper-triangle entries by `|Θᵖ_ij|`
/// against the true (non-zero) edge set, with midranks for ties.
pub fn auc(prediction: &SymmetricMatrix, truth: &SymmetricMatrix) -> Result<f64> {
    check_dims(prediction, truth)?;
    let d = truth.dim();
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(d * (d.saturating_sub(1)) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            scored.push((prediction.get(i, j).abs(), truth.get(i, j) != 0.0));
        }
    }
    let pairs = scored.len();
    let positives = scored.iter().filter(|(_, e)| *e).count();
    let negatives = pairs - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc { edges: positives, pairs });
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney: sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < pairs {
        let mut end = start;
        while end + 1 < pairs && scored[end + 1].0 == scored[start].0 {
            end += 1;
        }
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        let pos_in_group = scored[start..=end].iter().filter(|(_, e)| *e).count();
        rank_sum += midrank * pos_in_group as f64;
        start = end + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeStats {
    pub fdr: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub true_edges: usize,
    pub predicted_edges: usize,
}

/// Edge-detection rates over the strict upper triangle.
///
/// `tpr = TP/(TP+FN)`, `fpr = FP/(FP+TN)`, `fdr = FP/max(FP+TP, 1)`; a rate
/// whose denominator is zero is reported as 0.
pub fn edge_stats(prediction: &SymmetricMatrix, truth: &SymmetricMatrix, edge_threshold: f64) -> Result<EdgeStats> {
    check_dims(prediction, truth)?;
    let d = truth.dim();
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..d {
        for j in (i + 1)..d {
            let actual = truth.get(i, j) != 0.0;
            let predicted = prediction.get(i, j).abs() > edge_threshold;
            match (actual, predicted) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(EdgeStats {
        fdr: fp as f64 / (fp + tp).max(1) as f64,
        tpr: ratio(tp, tp + fn_),
        fpr: ratio(fp, fp + tn),
        true_edges: tp + fn_,
        predicted_edges: tp + fp,
    })
}
