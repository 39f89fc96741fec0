use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trajact_core::data::Tracklet;
use trajact_core::model::{build_model, Batch, ModelSpec, Task};
use trajact_core::numerics::{Adam, AdamConfig};
use trajact_core::preprocess::trajectory_to_tracklets;
use trajact_core::synth::{generate, SynthSpec};
use trajact_core::train::{batch_gradients, cross_validate, evaluate, train_fold, F1Average, TrainSpec};
use trajact_core::vocab::{scenario_vocabulary, ScenarioSelector, Vocabulary};
use trajact_core::DT;

fn vocab() -> Vocabulary {
    scenario_vocabulary(ScenarioSelector::Scenarios2and3)
}

fn tracklets(n: usize, noise: f64, seed: u64) -> Vec<Tracklet> {
    let spec = SynthSpec { n_trajectories: n, noise_std: noise, seed, ..SynthSpec::default() };
    generate(&spec)
        .unwrap()
        .iter()
        .flat_map(|t| trajectory_to_tracklets(t, DT).unwrap())
        .collect()
}

fn quick() -> TrainSpec {
    TrainSpec { batch_size: 16, max_epochs: 4, max_steps: Some(30), seed: 3, ..TrainSpec::default() }
}

#[test]
fn same_seed_same_metrics_bitwise() {
    let v = vocab();
    let data = tracklets(10, 0.02, 1);
    let refs: Vec<&Tracklet> = data.iter().collect();
    let (train, val) = refs.split_at(20);
    let spec = ModelSpec::for_vocab(&v).with_task(Task::MTL).with_agent_class(true);
    let a = train_fold::<f32>(train, val, &v, &spec, &quick()).unwrap();
    let b = train_fold::<f32>(train, val, &v, &spec, &quick()).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.history, b.history);
    for (x, y) in a.model.params.iter().zip(b.model.params.iter()) {
        assert_eq!(x.value, y.value);
    }
}

#[test]
fn metrics_ignore_evaluation_order() {
    let v = vocab();
    let data = tracklets(6, 0.02, 2);
    let spec = ModelSpec::for_vocab(&v).with_task(Task::MTL);
    let model = build_model::<f64>(&spec, 4).unwrap();
    let mut refs: Vec<&Tracklet> = data.iter().collect();
    let a = evaluate(&model, &refs, &v, F1Average::Macro).unwrap();
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    let b = evaluate(&model, &refs, &v, F1Average::Macro).unwrap();
    assert_eq!(a.acc, b.acc);
    assert_eq!(a.f1, b.f1);
    assert!((a.ade.unwrap() - b.ade.unwrap()).abs() < 1e-12);
    assert!((a.fde.unwrap() - b.fde.unwrap()).abs() < 1e-12);
    assert!((a.loss - b.loss).abs() < 1e-12);
}

#[test]
fn first_adam_steps_do_not_increase_loss() {
    let v = vocab();
    let data = tracklets(8, 0.0, 5);
    let refs: Vec<&Tracklet> = data.iter().take(16).collect();
    let spec = ModelSpec::for_vocab(&v);
    let batch = Batch::<f64>::new(&refs, &v, &spec).unwrap();
    let trials = 40;
    let mut monotone = 0;
    for seed in 0..trials {
        let mut model = build_model::<f64>(&spec, seed).unwrap();
        let mut adam = Adam::new(AdamConfig { lr: 1e-3, ..AdamConfig::default() });
        let mut losses = Vec::new();
        for _ in 0..=10 {
            let (l, g) = batch_gradients(&model, &batch).unwrap();
            losses.push(l);
            adam.step(&mut model.params, &g);
        }
        if losses.windows(2).all(|w| w[1] <= w[0]) {
            monotone += 1;
        }
    }
    assert!(monotone as f64 >= 0.95 * trials as f64, "{monotone}/{trials}");
}

#[test]
fn two_folds_on_symmetric_data_score_alike() {
    let v = vocab();
    let data = tracklets(40, 0.0, 6);
    let spec = ModelSpec::for_vocab(&v);
    let ts = TrainSpec { batch_size: 32, max_epochs: 40, max_steps: Some(120), seed: 2, ..TrainSpec::default() };
    let cv = cross_validate::<f32>(&data, 2, &v, &spec, &ts).unwrap();
    assert_eq!(cv.report.per_fold.len(), 2);
    let a = cv.report.per_fold[0].eval.ade.unwrap();
    let b = cv.report.per_fold[1].eval.ade.unwrap();
    assert!((a - b).abs() <= 0.25 * a.max(b), "{a} vs {b}");
    let agg = cv.report.aggregate.ade.unwrap();
    assert!((agg.mean - (a + b) / 2.0).abs() < 1e-12);
}

#[test]
fn report_has_one_row_per_fold() {
    let v = vocab();
    let data = tracklets(10, 0.02, 7);
    let spec = ModelSpec::for_vocab(&v).with_task(Task::MTL);
    let ts = TrainSpec { max_epochs: 1, max_steps: Some(2), ..quick() };
    let cv = cross_validate::<f32>(&data, 5, &v, &spec, &ts).unwrap();
    let folds: Vec<usize> = cv.report.per_fold.iter().map(|f| f.fold).collect();
    assert_eq!(folds, vec![0, 1, 2, 3, 4]);
    for f in &cv.report.per_fold {
        let acc = f.eval.acc.unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(f.eval.ade.unwrap() >= 0.0);
    }
    assert!(cross_validate::<f32>(&data, 11, &v, &spec, &ts).is_err());
}
