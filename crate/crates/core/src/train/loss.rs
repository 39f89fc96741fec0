//! Trajectory MSE, action cross-entropy and their weighted sum.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{Batch, ForwardVars, Model};
use crate::numerics::{Scalar, ShapeError, Tape, Tensor, Var};

/// Floor applied to probabilities before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// `(1/L) Σ_j ‖p_j − p̂_j‖²` for one tracklet.
pub fn loss_tp(truth: &[[f64; 2]], pred: &[[f64; 2]]) -> Result<f64> {
    check_len(truth.len(), pred.len())?;
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .map(|(p, q)| (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]))
        .sum();
    Ok(sum / truth.len() as f64)
}

/// `−(1/L) Σ_j log p̂_j[a_j]` with `a_j` a vocabulary index.
pub fn loss_action(truth: &[usize], probs: &[Vec<f64>]) -> Result<f64> {
    check_len(truth.len(), probs.len())?;
    let mut sum = 0.0;
    for (&a, row) in truth.iter().zip(probs) {
        let p = *row.get(a).ok_or(Error::LengthMismatch { left: a, right: row.len() })?;
        sum -= libm::log(p.max(LOG_FLOOR));
    }
    Ok(sum / truth.len() as f64)
}

pub fn loss_mtl(
    true_pos: &[[f64; 2]],
    pred_pos: &[[f64; 2]],
    true_actions: &[usize],
    probs: &[Vec<f64>],
    lambda: f64,
) -> Result<f64> {
    Ok(loss_tp(true_pos, pred_pos)? + lambda * loss_action(true_actions, probs)?)
}

fn check_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::Empty("sequence"));
    }
    Ok(())
}

/// Batch mean of the per-tracklet trajectory loss; `pred` and `target` are `[B×L×2]`.
pub fn tp_loss_var<S: Scalar>(tape: &mut Tape<'_, S>, pred: Var, target: Var) -> Result<Var, ShapeError> {
    let s = tape.shape(pred);
    if s.len() != 3 {
        return Err(ShapeError::new("tp_loss", s, tape.shape(target)));
    }
    let count = S::lit((s[0] * s[1]) as f64);
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    let total = tape.sum(sq);
    Ok(tape.scale(total, S::one() / count))
}

/// Batch mean of the per-tracklet action cross-entropy; `probs` is `[B·L × N_A]`.
pub fn action_loss_var<S: Scalar>(tape: &mut Tape<'_, S>, probs: Var, targets: &[usize]) -> Result<Var, ShapeError> {
    let p = tape.pick(probs, targets)?;
    let l = tape.ln_clamped(p, S::lit(LOG_FLOOR));
    let m = tape.mean(l);
    Ok(tape.scale(m, -S::one()))
}

/// Loss terms recorded for one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub trajectory: Option<Var>,
    pub action: Option<Var>,
}

/// The objective of the model's task: trajectory MSE for TP, MSE plus
/// `λ`·cross-entropy for MTL, cross-entropy alone for action-only models.
pub fn task_loss<S: Scalar>(
    model: &Model<S>,
    tape: &mut Tape<'_, S>,
    batch: &Batch<S>,
    vars: &ForwardVars,
) -> Result<LossVars> {
    let trajectory = match vars.positions {
        Some(p) => {
            let target = tape.constant(batch.target_positions.clone());
            Some(tp_loss_var(tape, p, target)?)
        }
        None => None,
    };
    let action = match vars.action_probs {
        Some(p) => Some(action_loss_var(tape, p, &batch.target_actions)?),
        None => None,
    };
    let total = match (trajectory, action) {
        (Some(t), Some(a)) => {
            let weighted = tape.scale(a, S::lit(model.spec.lambda));
            tape.add(t, weighted)?
        }
        (Some(t), None) => t,
        (None, Some(a)) => a,
        (None, None) => return Err(Error::ModelSpec("model has no output head".into())),
    };
    Ok(LossVars { total, trajectory, action })
}

/// Forward pass plus task loss; returns the tape-ready loss value.
pub fn batch_loss<S: Scalar>(model: &Model<S>, batch: &Batch<S>) -> Result<f64> {
    let mut tape = Tape::new(&model.params);
    let vars = model.forward(&mut tape, batch)?;
    let loss = task_loss(model, &mut tape, batch, &vars)?;
    Ok(tape.value(loss.total).item().as_f64())
}

/// Gradients of the task loss for every parameter, in store order.
pub fn batch_gradients<S: Scalar>(model: &Model<S>, batch: &Batch<S>) -> Result<(f64, Vec<Option<Tensor<S>>>)> {
    let mut tape = Tape::new(&model.params);
    let vars = model.forward(&mut tape, batch)?;
    let loss = task_loss(model, &mut tape, batch, &vars)?;
    let value = tape.value(loss.total).item().as_f64();
    Ok((value, tape.backward(loss.total)?.into_param_grads()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tp_identity_and_offset() {
        let truth: Vec<[f64; 2]> = (0..12).map(|i| [i as f64 * 0.4, 1.0]).collect();
        assert_eq!(loss_tp(&truth, &truth).unwrap(), 0.0);
        let shifted: Vec<[f64; 2]> = truth.iter().map(|p| [p[0] + 0.5, p[1]]).collect();
        assert!((loss_tp(&truth, &shifted).unwrap() - 0.25).abs() < 1e-15);
        assert!(loss_tp(&truth, &shifted[..11]).is_err());
    }

    #[test]
    fn tp_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let a: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
            let b: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
            let mut direct = 0.0;
            for j in 0..12 {
                let dx = a[j][0] - b[j][0];
                let dy = a[j][1] - b[j][1];
                direct += dx * dx;
                direct += dy * dy;
            }
            direct /= 12.0;
            assert!((loss_tp(&a, &b).unwrap() - direct).abs() <= 1e-7);
        }
    }

    #[test]
    fn action_uniform_and_correct() {
        let uniform = vec![vec![0.1; 10]; 12];
        let truth = vec![3usize; 12];
        let l = loss_action(&truth, &uniform).unwrap();
        assert!((l - core::f64::consts::LN_10).abs() < 1e-9);
        assert!((l - 2.302585).abs() < 1e-6);

        let mut onehot = vec![vec![0.0; 10]; 12];
        onehot.iter_mut().for_each(|r| r[3] = 1.0);
        assert_eq!(loss_action(&truth, &onehot).unwrap(), 0.0);
    }

    #[test]
    fn action_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let probs: Vec<Vec<f64>> = (0..12)
                .map(|_| {
                    let raw: Vec<f64> = (0..10).map(|_| rng.random_range(0.01..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                })
                .collect();
            let truth: Vec<usize> = (0..12).map(|_| rng.random_range(0..10)).collect();
            let mut direct = 0.0;
            for j in 0..12 {
                for m in 0..10 {
                    let indicator = if truth[j] == m { 1.0 } else { 0.0 };
                    direct -= indicator * probs[j][m].ln();
                }
            }
            direct /= 12.0;
            assert!((loss_action(&truth, &probs).unwrap() - direct).abs() <= 1e-7);
        }
    }

    #[test]
    fn mtl_weighting() {
        let truth: Vec<[f64; 2]> = vec![[0.0, 0.0]; 12];
        let pred: Vec<[f64; 2]> = vec![[0.5, 0.0]; 12];
        let probs = vec![vec![0.1; 10]; 12];
        let acts = vec![0usize; 12];
        let l0 = loss_mtl(&truth, &pred, &acts, &probs, 0.0).unwrap();
        assert_eq!(l0, loss_tp(&truth, &pred).unwrap());
        let l1 = loss_mtl(&truth, &pred, &acts, &probs, 1.0).unwrap();
        assert!((l1 - 2.552585).abs() < 1e-6);
        let l2 = loss_mtl(&truth, &pred, &acts, &probs, 2.0).unwrap();
        assert!((l2 - (0.25 + 2.0 * core::f64::consts::LN_10)).abs() < 1e-12);
    }

    #[test]
    fn tape_losses_match_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = 3;
        let pred: Vec<f64> = (0..b * 24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let truth: Vec<f64> = (0..b * 24).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut tape = Tape::<f64>::detached();
        let p = tape.constant(Tensor::new(&[b, 12, 2], pred.clone()).unwrap());
        let t = tape.constant(Tensor::new(&[b, 12, 2], truth.clone()).unwrap());
        let l = tp_loss_var(&mut tape, p, t).unwrap();
        let plain: f64 = (0..b)
            .map(|i| {
                let pa: Vec<[f64; 2]> = pred[i * 24..(i + 1) * 24].chunks(2).map(|c| [c[0], c[1]]).collect();
                let ta: Vec<[f64; 2]> = truth[i * 24..(i + 1) * 24].chunks(2).map(|c| [c[0], c[1]]).collect();
                loss_tp(&ta, &pa).unwrap()
            })
            .sum::<f64>()
            / b as f64;
        assert!((tape.value(l).item() - plain).abs() < 1e-12);

        let probs: Vec<f64> = (0..b * 12).flat_map(|_| [0.2, 0.3, 0.5]).collect();
        let targets: Vec<usize> = (0..b * 12).map(|i| i % 3).collect();
        let pv = tape.constant(Tensor::new(&[b * 12, 3], probs).unwrap());
        let la = action_loss_var(&mut tape, pv, &targets).unwrap();
        let rows: Vec<Vec<f64>> = (0..b * 12).map(|_| vec![0.2, 0.3, 0.5]).collect();
        let plain = loss_action(&targets, &rows).unwrap();
        assert!((tape.value(la).item() - plain).abs() < 1e-12);
    }
}
