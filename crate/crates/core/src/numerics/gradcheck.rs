//! Central finite-difference check of tape gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::{ShapeError, Tensor};

/// Denominator floor for the relative error. Coordinates whose true gradient
/// vanishes (e.g. attention key biases, which softmax cancels) are judged on
/// absolute error at this scale instead of on pure round-off.
const REL_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |a − n| / max(|a|, |n|, 1e-5)` over the checked coordinates.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// Compares tape gradients of the scalar returned by `f` against
/// `(f(θ+h) − f(θ−h)) / 2h`, coordinate-wise over the parameters of `store`.
///
/// With `max_per_param = Some(n)` at most `n` coordinates of each parameter
/// are checked, chosen by a seeded RNG; `None` checks all of them.
pub fn grad_check<F>(
    store: &ParamStore<f64>,
    h: f64,
    max_per_param: Option<usize>,
    seed: u64,
    f: F,
) -> Result<GradCheckReport, ShapeError>
where
    F: Fn(&mut Tape<f64>) -> Result<Var, ShapeError>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?.into_param_grads()
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64, ShapeError> {
        let mut tape = Tape::new(s);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = store.clone();
    let mut report = GradCheckReport { max_rel_err: 0.0, max_abs_err: 0.0, checked: 0, worst: None };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).value.len();
        let coords: Vec<usize> = match max_per_param {
            Some(m) if m < n => sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = store.get(id).value.data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work.get_mut(id).value.data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work.get_mut(id).value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g.data()[i]);
            let abs = libm::fabs(a - numeric);
            let rel = abs / libm::fabs(a).max(libm::fabs(numeric)).max(REL_FLOOR);
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    Ok(report)
}

/// [`grad_check`] over plain input tensors; `f` receives one leaf per input.
pub fn grad_check_inputs<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheckReport, ShapeError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, ShapeError>,
{
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("input{i}"), t.clone()))
        .collect();
    grad_check(&store, h, None, 0, |tape| {
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(id)).collect();
        f(tape, &vars)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_has_unit_gradient() {
        let x = Tensor::from_f64(&[2, 3], &[0.1, -2.0, 3.0, 0.5, 0.0, 7.0]).unwrap();
        let r = grad_check_inputs(&[x], 1e-5, |tape, v| Ok(tape.sum(v[0]))).unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_err < 1e-9, "{r:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        // the constant copy hides half of d(x²)/dx
        let x = Tensor::from_f64(&[3], &[0.5, 1.0, 2.0]).unwrap();
        let r = grad_check_inputs(&[x], 1e-5, |tape, v| {
            let copy = tape.constant(tape.value(v[0]).clone());
            let sq = tape.mul(v[0], copy)?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(r.max_rel_err > 0.4, "{r:?}");
    }
}
