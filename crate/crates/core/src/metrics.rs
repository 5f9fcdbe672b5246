//! Evaluation metrics.
//!
//! ROC-AUC is the Mann–Whitney statistic `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
//! Both the pair-counting and the rank-sum routes compute the same integer
//! numerator `2·U` over the denominator `2·n⁺·n⁻`, so they agree exactly.
//! Multiclass AUC is the unweighted mean of one-vs-rest AUCs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Sizes up to this use exact pair counting in [`roc_auc_binary`].
pub const PAIR_COUNT_LIMIT: usize = 10_000;

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("accuracy", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty sample".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Index of the largest entry in each row (first one on ties).
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.iter_rows()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_auc", labels.len(), scores.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC-AUC needs both positive and negative samples".into(),
        ));
    }
    Ok((pos, neg))
}

/// `O(n²)` reference: counts ordered pairs, ties count half.
pub fn roc_auc_pairs(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let positives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(&s, _)| s).collect();
    let negatives: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(&s, _)| s).collect();
    let mut twice_u: u64 = 0;
    for &p in &positives {
        for &n in &negatives {
            if p > n {
                twice_u += 2;
            } else if p == n {
                twice_u += 1;
            }
        }
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Rank-sum route with midranks for ties.
pub fn roc_auc_rank(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score in ROC-AUC input".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum over positives of twice the (1-based) midrank
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the midrank ((i+1)+(j+1))/2
        let twice_mid = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Binary ROC-AUC: pair counting up to [`PAIR_COUNT_LIMIT`] samples, rank sums above.
pub fn roc_auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() <= PAIR_COUNT_LIMIT {
        roc_auc_pairs(scores, labels)
    } else {
        roc_auc_rank(scores, labels)
    }
}

/// Macro one-vs-rest AUC; column `c` scores class `c`.
pub fn auc_macro_ovr(probs: &Matrix, labels: &[usize], classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(Error::UndefinedMetric(format!("AUC needs >= 2 classes, got {classes}")));
    }
    if probs.cols() != classes || probs.rows() != labels.len() {
        return Err(Error::shape(
            "auc_macro_ovr",
            format!("{}x{classes}", labels.len()),
            format!("{}x{}", probs.rows(), probs.cols()),
        ));
    }
    let mut total = 0.0;
    for c in 0..classes {
        let scores: Vec<f64> = probs.iter_rows().map(|r| r[c]).collect();
        let is_c: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += roc_auc_rank(&scores, &is_c).map_err(|_| {
            Error::UndefinedMetric(format!("class {c} is absent (or is the only class present)"))
        })?;
    }
    Ok(total / classes as f64)
}

pub fn mse_metric(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse", target.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("MSE of an empty sample".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub n: usize,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub mse: Option<f64>,
    /// True-label counts per class (classification only).
    pub class_counts: Vec<usize>,
}

/// Metrics for fused classification probabilities. AUC is left out when some
/// class is missing from `labels`.
pub fn evaluate_classification(probs: &Matrix, labels: &[usize], classes: usize) -> Result<EvalReport> {
    let acc = accuracy(&argmax_rows(probs), labels)?;
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l >= classes {
            return Err(Error::Data(format!("label {l} out of range for {classes} classes")));
        }
        counts[l] += 1;
    }
    let auc = if classes == 2 {
        let scores: Vec<f64> = probs.iter_rows().map(|r| r[1]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        roc_auc_binary(&scores, &pos).ok()
    } else {
        auc_macro_ovr(probs, labels, classes).ok()
    };
    Ok(EvalReport {
        task: "classification".into(),
        n: labels.len(),
        accuracy: Some(acc),
        auc,
        mse: None,
        class_counts: counts,
    })
}

pub fn evaluate_regression(pred: &[f64], target: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        task: "regression".into(),
        n: target.len(),
        accuracy: None,
        auc: None,
        mse: Some(mse_metric(pred, target)?),
        class_counts: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[0], &[0, 1]), Err(Error::Shape { .. })));
    }

    #[test]
    fn auc_examples() {
        let t = [true, true, false, false];
        assert_eq!(roc_auc_binary(&[0.9, 0.8, 0.3, 0.2], &t).unwrap(), 1.0);
        let t = [true, false, true, false];
        assert_eq!(roc_auc_binary(&[0.9, 0.7, 0.6, 0.2], &t).unwrap(), 0.75);
        assert_eq!(roc_auc_rank(&[0.9, 0.7, 0.6, 0.2], &t).unwrap(), 0.75);
        assert_eq!(roc_auc_binary(&[0.4; 4], &t).unwrap(), 0.5);
        assert_eq!(roc_auc_rank(&[0.4; 4], &t).unwrap(), 0.5);
        assert!(matches!(
            roc_auc_binary(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn macro_auc_examples() {
        let probs = Matrix::from_rows(&[[0.9, 0.1], [0.3, 0.7], [0.4, 0.6], [0.8, 0.2]]).unwrap();
        let labels = [0, 1, 0, 1];
        let binary = roc_auc_binary(&[0.1, 0.7, 0.6, 0.2], &[false, true, false, true]).unwrap();
        assert_eq!(auc_macro_ovr(&probs, &labels, 2).unwrap(), binary);

        let onehot = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(auc_macro_ovr(&onehot, &[0, 1, 2], 3).unwrap(), 1.0);
        let uniform = Matrix::filled(3, 3, 1.0 / 3.0);
        assert_eq!(auc_macro_ovr(&uniform, &[0, 1, 2], 3).unwrap(), 0.5);
        assert!(matches!(
            auc_macro_ovr(&uniform, &[0, 1, 1], 3),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_metric(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_metric(&[3.0], &[1.0]).unwrap(), 4.0);
        assert!(mse_metric(&[3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_fields() {
        let probs = Matrix::from_rows(&[[0.9, 0.1], [0.3, 0.7]]).unwrap();
        let r = evaluate_classification(&probs, &[0, 1], 2).unwrap();
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.class_counts, vec![1, 1]);
        let r = evaluate_classification(&probs, &[0, 0], 2).unwrap();
        assert_eq!(r.auc, None);
    }
}
