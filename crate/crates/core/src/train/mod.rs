//! Losses, metrics, the training loop and k-fold cross-validation.

mod loss;
mod metrics;

pub use loss::{
    action_loss_var, batch_gradients, batch_loss, loss_action, loss_mtl, loss_tp, task_loss, tp_loss_var, LossVars,
    LOG_FLOOR,
};
pub use metrics::{accuracy, ade, f1_score, fde, macro_f1, F1Average};

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Tracklet;
use crate::error::{Error, Result};
use crate::model::{build_model, Batch, Model, ModelSpec};
use crate::numerics::{Adam, AdamConfig, DType, Scalar};
use crate::preprocess::{assign_folds, FoldAssignment};
use crate::vocab::{ActionClass, Vocabulary};

/// Batch size used when evaluating; predictions do not depend on it.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSpec {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub seed: u64,
    /// Overrides the model spec's `lambda` when set.
    pub lambda: Option<f64>,
    pub dtype: DType,
    pub f1_average: F1Average,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: 10,
            max_steps: None,
            seed: 0,
            lambda: None,
            dtype: DType::F32,
            f1_average: F1Average::Macro,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::TrainSpec(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return bad("lambda must be finite and non-negative");
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    /// Model spec with this spec's `lambda` applied.
    pub fn apply_to(&self, spec: &ModelSpec) -> ModelSpec {
        match self.lambda {
            Some(l) => spec.clone().with_lambda(l),
            None => spec.clone(),
        }
    }
}

/// Stops once the validation loss has failed to improve for `patience`
/// consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Records an epoch; returns `true` if it is the new best.
    pub fn update(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            true
        } else {
            self.bad_epochs += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Metrics of one model on one evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub loss: f64,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
}

/// Evaluation metrics of one fold plus how training went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub epochs: usize,
    pub steps: usize,
    #[serde(flatten)]
    pub eval: EvalMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of training on one split.
#[derive(Debug, Clone)]
pub struct FoldOutcome<S: Scalar> {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model<S>,
    pub metrics: FoldMetrics,
    pub history: Vec<EpochRecord>,
}

/// Task loss of `model` over `tracklets`, as the size-weighted mean of
/// per-batch losses.
pub fn evaluate_loss<S: Scalar>(model: &Model<S>, tracklets: &[&Tracklet], vocab: &Vocabulary) -> Result<f64> {
    if tracklets.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = 0.0;
    for chunk in tracklets.chunks(EVAL_CHUNK) {
        let batch = Batch::<S>::new(chunk, vocab, &model.spec)?;
        total += batch_loss(model, &batch)? * chunk.len() as f64;
    }
    Ok(total / tracklets.len() as f64)
}

/// Loss, mean ADE/FDE over tracklets and pooled per-step ACC/F1.
pub fn evaluate<S: Scalar>(
    model: &Model<S>,
    tracklets: &[&Tracklet],
    vocab: &Vocabulary,
    average: F1Average,
) -> Result<EvalMetrics> {
    let loss = evaluate_loss(model, tracklets, vocab)?;
    let task = model.spec.task;
    let (mut ade_sum, mut fde_sum) = (0.0, 0.0);
    let mut truth: Vec<ActionClass> = Vec::new();
    let mut pred: Vec<ActionClass> = Vec::new();
    for chunk in tracklets.chunks(EVAL_CHUNK) {
        for (t, out) in chunk.iter().zip(model.predict(chunk, vocab)?) {
            if task.predicts_trajectory() {
                let future = t.future_positions();
                ade_sum += ade(&future, &out.positions)?;
                fde_sum += fde(&future, &out.positions)?;
            }
            if let Some(actions) = out.actions {
                truth.extend(t.future_actions());
                pred.extend(actions);
            }
        }
    }
    let n = tracklets.len();
    let (ade_v, fde_v) = if task.predicts_trajectory() {
        (Some(ade_sum / n as f64), Some(fde_sum / n as f64))
    } else {
        (None, None)
    };
    let (acc, f1) = if task.predicts_actions() {
        (Some(accuracy(&truth, &pred)?), Some(f1_score(&truth, &pred, vocab, average)?))
    } else {
        (None, None)
    };
    Ok(EvalMetrics { n, loss, ade: ade_v, fde: fde_v, acc, f1 })
}

/// Mini-batch Adam on the task loss with early stopping on validation loss.
/// Single-threaded and deterministic for a given `train_spec.seed`.
pub fn train_fold<S: Scalar>(
    train: &[&Tracklet],
    val: &[&Tracklet],
    vocab: &Vocabulary,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
) -> Result<FoldOutcome<S>> {
    train_fold_with(train, val, vocab, model_spec, train_spec, |_| {})
}

/// [`train_fold`] with a callback invoked after every epoch.
pub fn train_fold_with<S: Scalar>(
    train: &[&Tracklet],
    val: &[&Tracklet],
    vocab: &Vocabulary,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<FoldOutcome<S>> {
    if val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let (model, steps, history) =
        fit::<S>(train, vocab, model_spec, train_spec, |m| evaluate_loss(m, val, vocab), on_epoch)?;
    let eval = evaluate(&model, val, vocab, train_spec.f1_average)?;
    Ok(FoldOutcome {
        model,
        metrics: FoldMetrics { fold: 0, n_train: train.len(), epochs: history.len(), steps, eval },
        history,
    })
}

/// The epoch loop; returns the best-validation model, the number of
/// optimizer steps taken and the per-epoch history.
fn fit<S: Scalar>(
    train: &[&Tracklet],
    vocab: &Vocabulary,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
    mut validate: impl FnMut(&Model<S>) -> Result<f64>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model<S>, usize, Vec<EpochRecord>)> {
    train_spec.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let spec = train_spec.apply_to(model_spec);
    spec.check_vocab(vocab)?;
    let mut model = build_model::<S>(&spec, train_spec.seed)?;
    let mut best = model.params.clone();
    let mut adam = Adam::new(train_spec.adam());
    let mut stopper = EarlyStopping::new(train_spec.early_stop_patience);
    let mut rng = ChaCha8Rng::seed_from_u64(train_spec.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut steps = 0usize;
    let step_cap = train_spec.max_steps.unwrap_or(usize::MAX);
    for epoch in 1..=train_spec.max_epochs {
        if steps >= step_cap {
            break;
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for idx in order.chunks(train_spec.batch_size) {
            if steps >= step_cap {
                break;
            }
            let members: Vec<&Tracklet> = idx.iter().map(|&i| train[i]).collect();
            let batch = Batch::<S>::new(&members, vocab, &model.spec)?;
            let (loss, grads) = batch_gradients(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch });
            }
            adam.step(&mut model.params, &grads);
            steps += 1;
            loss_sum += loss * members.len() as f64;
            seen += members.len();
        }
        let val_loss = validate(&model)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite { epoch });
        }
        let record = EpochRecord { epoch, train_loss: loss_sum / seen.max(1) as f64, val_loss };
        on_epoch(&record);
        history.push(record);
        if stopper.update(val_loss) {
            best = model.params.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }
    model.params = best;
    Ok((model, steps, history))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self { mean, std: libm::sqrt(var) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub ade: Option<MeanStd>,
    pub fde: Option<MeanStd>,
    pub acc: Option<MeanStd>,
    pub f1: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_fold: Vec<FoldMetrics>,
    pub aggregate: Aggregate,
}

impl MetricsReport {
    /// Aggregates folds; rows are sorted by fold index first, so the result
    /// does not depend on completion order.
    pub fn from_folds(mut per_fold: Vec<FoldMetrics>) -> Self {
        per_fold.sort_by_key(|f| f.fold);
        let pick = |f: fn(&FoldMetrics) -> Option<f64>| {
            let v: Vec<f64> = per_fold.iter().filter_map(f).collect();
            if v.len() == per_fold.len() {
                MeanStd::of(&v)
            } else {
                None
            }
        };
        let aggregate = Aggregate {
            ade: pick(|f| f.eval.ade),
            fde: pick(|f| f.eval.fde),
            acc: pick(|f| f.eval.acc),
            f1: pick(|f| f.eval.f1),
        };
        Self { per_fold, aggregate }
    }
}

/// Training seed of fold `fold`, so folds can run in any order or in
/// parallel and still reproduce.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add((fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains fold `fold` of `assignment`.
pub fn run_fold<S: Scalar>(
    tracklets: &[Tracklet],
    assignment: &FoldAssignment,
    fold: usize,
    vocab: &Vocabulary,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
) -> Result<FoldOutcome<S>> {
    let (train, val) = assignment.split(tracklets, fold);
    let spec = TrainSpec { seed: fold_seed(train_spec.seed, fold), ..train_spec.clone() };
    let mut outcome = train_fold::<S>(&train, &val, vocab, model_spec, &spec)
        .map_err(|e| match e {
            Error::Empty(what) => Error::TrainSpec(format!("fold {fold}: empty {what}")),
            other => other,
        })?;
    outcome.metrics.fold = fold;
    Ok(outcome)
}

/// All folds of a k-fold cross-validation.
#[derive(Debug, Clone)]
pub struct CrossValidation<S: Scalar> {
    pub assignment: FoldAssignment,
    pub folds: Vec<FoldOutcome<S>>,
    pub report: MetricsReport,
}

/// Sequential k-fold cross-validation grouped by source trajectory.
pub fn cross_validate<S: Scalar>(
    tracklets: &[Tracklet],
    k: usize,
    vocab: &Vocabulary,
    model_spec: &ModelSpec,
    train_spec: &TrainSpec,
) -> Result<CrossValidation<S>> {
    let assignment = assign_folds(tracklets, k, train_spec.seed)?;
    let folds = (0..k)
        .map(|i| run_fold::<S>(tracklets, &assignment, i, vocab, model_spec, train_spec))
        .collect::<Result<Vec<_>>>()?;
    let report = MetricsReport::from_folds(folds.iter().map(|f| f.metrics).collect());
    Ok(CrossValidation { assignment, folds, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::straight;
    use crate::model::Task;
    use crate::numerics::grad_check;
    use crate::vocab::{scenario_vocabulary, ActionClass, ScenarioSelector};
    use alloc::vec;

    fn vocab() -> Vocabulary {
        scenario_vocabulary(ScenarioSelector::Scenarios2and3)
    }

    fn sample(n: usize) -> Vec<Tracklet> {
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                let mut t = straight(i as f64, -0.5 * i as f64, libm::cos(a), libm::sin(a), ActionClass::Walk);
                t.future[6..].iter_mut().for_each(|s| s.action = ActionClass::WalkBox);
                t.source_trajectory_id = format!("traj{i}");
                t
            })
            .collect()
    }

    #[test]
    fn early_stopping_contract() {
        let mut s = EarlyStopping::new(1);
        assert!(s.update(1.0));
        assert!(!s.should_stop());
        assert!(!s.update(1.5));
        assert!(s.should_stop());

        let mut s = EarlyStopping::new(3);
        for v in [3.0, 2.0, 2.5, 2.6, 1.9, 2.0, 2.0] {
            s.update(v);
        }
        assert!(!s.should_stop());
        s.update(2.0);
        assert!(s.should_stop());
        assert_eq!(s.best(), 1.9);
    }

    #[test]
    fn train_spec_validation() {
        assert!(TrainSpec::default().validate().is_ok());
        for bad in [
            TrainSpec { lr: 0.0, ..Default::default() },
            TrainSpec { batch_size: 0, ..Default::default() },
            TrainSpec { early_stop_patience: 0, ..Default::default() },
            TrainSpec { lambda: Some(-1.0), ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::TrainSpec(_))));
        }
    }

    #[test]
    fn zero_lambda_gradients_match_trajectory_loss() {
        let v = vocab();
        let data = sample(4);
        let refs: Vec<&Tracklet> = data.iter().collect();
        for (agent, actions) in [(false, false), (true, true)] {
            let tp = ModelSpec::for_vocab(&v).with_agent_class(agent).with_actions(actions);
            let mtl = tp.clone().with_task(Task::MTL).with_lambda(0.0);
            let m_tp = build_model::<f64>(&tp, 11).unwrap();
            let m_mtl = build_model::<f64>(&mtl, 11).unwrap();
            let b_tp = Batch::new(&refs, &v, &tp).unwrap();
            let b_mtl = Batch::new(&refs, &v, &mtl).unwrap();
            let (l_tp, g_tp) = batch_gradients(&m_tp, &b_tp).unwrap();
            let (l_mtl, g_mtl) = batch_gradients(&m_mtl, &b_mtl).unwrap();
            assert_eq!(l_tp.to_bits(), l_mtl.to_bits());
            for (i, p) in m_tp.params.iter().enumerate() {
                let j = m_mtl.params.find(&p.name).unwrap().index();
                let a = g_tp[i].as_ref().unwrap();
                let b = g_mtl[j].as_ref().unwrap();
                assert_eq!(a.shape(), b.shape());
                assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", p.name);
            }
        }
    }

    #[test]
    fn full_losses_pass_gradient_check() {
        let v = vocab();
        let data = sample(3);
        let refs: Vec<&Tracklet> = data.iter().collect();
        for spec in [
            ModelSpec::for_vocab(&v),
            ModelSpec::for_vocab(&v).with_agent_class(true).with_actions(true).with_task(Task::MTL),
        ] {
            let model = build_model::<f64>(&spec, 5).unwrap();
            let batch = Batch::<f64>::new(&refs, &v, &spec).unwrap();
            let report = grad_check(&model.params, 1e-5, Some(4), 9, |tape| {
                let vars = model.forward(tape, &batch).unwrap();
                Ok(task_loss(&model, tape, &batch, &vars).unwrap().total)
            })
            .unwrap();
            assert!(report.max_rel_err <= 1e-4, "{:?} {report:?}", spec.task);
        }
    }

    #[test]
    fn early_stop_after_two_epochs_on_rising_loss() {
        let v = vocab();
        let data = sample(4);
        let refs: Vec<&Tracklet> = data.iter().collect();
        let ts = TrainSpec { early_stop_patience: 1, batch_size: 2, max_epochs: 50, ..Default::default() };
        let mut rising = 0.0;
        let (model, steps, history) = fit::<f64>(
            &refs,
            &v,
            &ModelSpec::for_vocab(&v),
            &ts,
            |_| {
                rising += 1.0;
                Ok(rising)
            },
            |_| {},
        )
        .unwrap();
        assert_eq!(history.len(), 2);
        assert_eq!(steps, 4);
        // the returned parameters are those of epoch 1
        let (first, _, _) = fit::<f64>(
            &refs,
            &v,
            &ModelSpec::for_vocab(&v),
            &TrainSpec { max_epochs: 1, ..ts },
            |_| Ok(0.0),
            |_| {},
        )
        .unwrap();
        for (a, b) in model.params.iter().zip(first.params.iter()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn empty_split_is_an_error() {
        let v = vocab();
        let data = sample(2);
        let refs: Vec<&Tracklet> = data.iter().collect();
        let spec = ModelSpec::for_vocab(&v);
        assert!(matches!(
            train_fold::<f32>(&[], &refs, &v, &spec, &TrainSpec::default()),
            Err(Error::Empty(_))
        ));
        assert!(train_fold::<f32>(&refs, &[], &v, &spec, &TrainSpec::default()).is_err());
    }

    #[test]
    fn report_aggregates_population_std() {
        let row = |fold, ade| FoldMetrics {
            fold,
            n_train: 1,
            epochs: 1,
            steps: 1,
            eval: EvalMetrics { n: 1, loss: 0.0, ade: Some(ade), fde: Some(ade), acc: None, f1: None },
        };
        let r = MetricsReport::from_folds(vec![row(1, 3.0), row(0, 1.0)]);
        assert_eq!(r.per_fold[0].fold, 0);
        let a = r.aggregate.ade.unwrap();
        assert_eq!((a.mean, a.std), (2.0, 1.0));
        assert!(r.aggregate.acc.is_none());
    }
}
