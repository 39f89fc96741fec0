//! Displacement errors and classification scores.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{ActionClass, Vocabulary};

fn displacement(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    libm::hypot(p[0] - q[0], p[1] - q[1])
}

fn check(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::Empty("prediction set"));
    }
    Ok(())
}

/// Mean ℓ2 distance over the prediction horizon.
pub fn ade(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<f64> {
    check(truth.len(), pred.len())?;
    Ok(truth.iter().zip(pred).map(|(p, q)| displacement(p, q)).sum::<f64>() / truth.len() as f64)
}

/// ℓ2 distance at the last step.
pub fn fde(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<f64> {
    check(truth.len(), pred.len())?;
    Ok(displacement(&truth[truth.len() - 1], &pred[pred.len() - 1]))
}

/// Fraction of matching labels.
pub fn accuracy(truth: &[ActionClass], pred: &[ActionClass]) -> Result<f64> {
    check(truth.len(), pred.len())?;
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum F1Average {
    /// Unweighted mean over classes.
    #[default]
    Macro,
    /// Mean weighted by class support in the ground truth.
    Weighted,
}

/// Per-class `(tp, fp, fn)` over the vocabulary's actions.
fn confusion(truth: &[ActionClass], pred: &[ActionClass], vocab: &Vocabulary) -> Vec<(usize, usize, usize)> {
    vocab
        .actions()
        .iter()
        .map(|&c| {
            let mut counts = (0, 0, 0);
            for (&t, &p) in truth.iter().zip(pred) {
                match (t == c, p == c) {
                    (true, true) => counts.0 += 1,
                    (false, true) => counts.1 += 1,
                    (true, false) => counts.2 += 1,
                    (false, false) => {}
                }
            }
            counts
        })
        .collect()
}

/// Macro F1; classes absent from both truth and prediction are skipped.
pub fn macro_f1(truth: &[ActionClass], pred: &[ActionClass], vocab: &Vocabulary) -> Result<f64> {
    f1_score(truth, pred, vocab, F1Average::Macro)
}

pub fn f1_score(truth: &[ActionClass], pred: &[ActionClass], vocab: &Vocabulary, average: F1Average) -> Result<f64> {
    check(truth.len(), pred.len())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (tp, fp, fn_) in confusion(truth, pred, vocab) {
        if tp + fp + fn_ == 0 {
            continue;
        }
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        let w = match average {
            F1Average::Macro => 1.0,
            F1Average::Weighted => (tp + fn_) as f64,
        };
        num += w * f1;
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}
