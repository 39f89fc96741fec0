//! Transformer-encoder trajectory and action predictors.
//!
//! Observed states are embedded by a one-hidden-layer MLP, summed with a
//! sinusoidal positional table and encoded by a stack of post-norm
//! transformer blocks with full (non-causal) attention. The flattened
//! `8 × d_model` encoding, optionally concatenated with a learned agent-class
//! embedding, feeds a two-hidden-layer MLP that emits 12 future velocities.
//! Multi-task models add a second decoder of identical shape that emits
//! per-step action logits.
//!
//! Inputs are origin-relative: positions are translated so the last observed
//! position is `(0, 0)`; velocities are passed unchanged. Predicted positions
//! are recovered by cumulative Euler integration of the predicted velocities.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Tracklet;
use crate::error::{Error, Result};
use crate::numerics::{
    sinusoidal_positional_encoding, Embedding, Mlp, ParamStore, Scalar, Tape, Tensor, TransformerBlock, Var,
};
use crate::vocab::{argmax, ActionClass, Vocabulary};
use crate::{DT, OBS_LEN, PRED_LEN};

/// Per-state input features before the optional action one-hot.
pub const MOTION_FEATURES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Future velocities only.
    TP,
    /// Future velocities and future actions.
    MTL,
    /// Future actions only.
    ActionOnly,
}

impl Task {
    pub fn predicts_trajectory(self) -> bool {
        matches!(self, Task::TP | Task::MTL)
    }

    pub fn predicts_actions(self) -> bool {
        matches!(self, Task::MTL | Task::ActionOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub task: Task,
    pub use_agent_class: bool,
    pub use_actions_in_input: bool,
    pub heads: usize,
    pub encoder_layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub embed_hidden: usize,
    pub decoder_hidden: usize,
    pub agent_embed_dim: usize,
    pub action_vocab_size: usize,
    pub agent_vocab_size: usize,
    /// Weight of the action cross-entropy in the multi-task loss.
    pub lambda: f64,
}

impl Default for ModelSpec {
    /// Trajectory-only baseline sized for the 10-action, 5-class vocabulary.
    fn default() -> Self {
        Self {
            task: Task::TP,
            use_agent_class: false,
            use_actions_in_input: false,
            heads: 2,
            encoder_layers: 1,
            d_model: 32,
            d_ff: 64,
            embed_hidden: 64,
            decoder_hidden: 64,
            agent_embed_dim: 16,
            action_vocab_size: 10,
            agent_vocab_size: 5,
            lambda: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn for_vocab(vocab: &Vocabulary) -> Self {
        Self {
            action_vocab_size: vocab.num_actions(),
            agent_vocab_size: vocab.num_agent_classes(),
            ..Self::default()
        }
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    pub fn with_agent_class(mut self, on: bool) -> Self {
        self.use_agent_class = on;
        self
    }

    pub fn with_actions(mut self, on: bool) -> Self {
        self.use_actions_in_input = on;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn input_dim(&self) -> usize {
        MOTION_FEATURES + if self.use_actions_in_input { self.action_vocab_size } else { 0 }
    }

    fn decoder_input_dim(&self) -> usize {
        OBS_LEN * self.d_model + if self.use_agent_class { self.agent_embed_dim } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("heads", self.heads),
            ("encoder_layers", self.encoder_layers),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("embed_hidden", self.embed_hidden),
            ("decoder_hidden", self.decoder_hidden),
            ("agent_embed_dim", self.agent_embed_dim),
            ("action_vocab_size", self.action_vocab_size),
            ("agent_vocab_size", self.agent_vocab_size),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, w)| *w == 0) {
            return Err(Error::ModelSpec(format!("{name} must be ≥ 1")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::ModelSpec(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.d_model % 2 != 0 {
            return Err(Error::ModelSpec(format!("d_model {} must be even", self.d_model)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::ModelSpec(format!("lambda {} must be finite and ≥ 0", self.lambda)));
        }
        Ok(())
    }

    /// Checks that the vocabulary fits the one-hot and embedding sizes.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let needs_actions = self.use_actions_in_input || self.task.predicts_actions();
        if needs_actions && vocab.num_actions() != self.action_vocab_size {
            return Err(Error::ModelSpec(format!(
                "model expects {} actions, vocabulary has {}",
                self.action_vocab_size,
                vocab.num_actions()
            )));
        }
        if self.use_agent_class && vocab.num_agent_classes() != self.agent_vocab_size {
            return Err(Error::ModelSpec(format!(
                "model expects {} agent classes, vocabulary has {}",
                self.agent_vocab_size,
                vocab.num_agent_classes()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Architecture {
    embed: Mlp,
    blocks: Vec<TransformerBlock>,
    agent: Option<Embedding>,
    trajectory_head: Option<Mlp>,
    action_head: Option<Mlp>,
    positional: Tensor<f64>,
}

/// Parameters plus the layer layout that reads them.
#[derive(Debug, Clone)]
pub struct Model<S: Scalar> {
    pub spec: ModelSpec,
    pub params: ParamStore<S>,
    arch: Architecture,
}

/// Builds a model; parameters are initialised from `seed` in a fixed order
/// (embedding, encoder blocks, agent embedding, trajectory decoder, action
/// decoder), so the same seed always yields bit-identical parameters.
pub fn build_model<S: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Model<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let embed = Mlp::new(
        &mut params,
        &mut rng,
        "encoder.embed",
        &[spec.input_dim(), spec.embed_hidden, spec.d_model],
    );
    let blocks = (0..spec.encoder_layers)
        .map(|i| {
            TransformerBlock::new(&mut params, &mut rng, &format!("encoder.block{i}"), spec.d_model, spec.heads, spec.d_ff)
                .ok_or_else(|| Error::ModelSpec(format!("invalid attention width {}", spec.d_model)))
        })
        .collect::<Result<Vec<_>>>()?;
    let agent = spec
        .use_agent_class
        .then(|| Embedding::new(&mut params, &mut rng, "agent_embedding", spec.agent_vocab_size, spec.agent_embed_dim));
    let dec_in = spec.decoder_input_dim();
    let h = spec.decoder_hidden;
    let trajectory_head = spec
        .task
        .predicts_trajectory()
        .then(|| Mlp::new(&mut params, &mut rng, "decoder.trajectory", &[dec_in, h, h, PRED_LEN * 2]));
    let action_head = spec.task.predicts_actions().then(|| {
        Mlp::new(&mut params, &mut rng, "decoder.action", &[dec_in, h, h, PRED_LEN * spec.action_vocab_size])
    });
    let positional = sinusoidal_positional_encoding(OBS_LEN, spec.d_model)
        .ok_or_else(|| Error::ModelSpec(format!("d_model {} must be even", spec.d_model)))?;
    Ok(Model {
        spec: spec.clone(),
        params,
        arch: Architecture { embed, blocks, agent, trajectory_head, action_head, positional },
    })
}

/// Rebuilds the layer layout of `spec` around existing parameter values;
/// names and shapes must match what [`build_model`] creates.
pub fn model_from_params<S: Scalar>(spec: &ModelSpec, params: &ParamStore<S>) -> Result<Model<S>> {
    let mut model = build_model::<S>(spec, 0)?;
    model.params.copy_values_from(params).map_err(Error::Parameters)?;
    Ok(model)
}

/// Exact number of scalar parameters.
pub fn param_count<S: Scalar>(model: &Model<S>) -> usize {
    model.params.scalar_count()
}

/// Model inputs and targets for a batch of tracklets, already origin-relative.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub size: usize,
    /// `[B·8 × input_dim]`.
    pub features: Tensor<S>,
    pub agent_indices: Vec<usize>,
    /// Future positions relative to the anchor, `[B × 12 × 2]`.
    pub target_positions: Tensor<S>,
    /// Vocabulary indices of future actions, `B·12` entries (empty when the
    /// task does not predict actions).
    pub target_actions: Vec<usize>,
    /// Last observed absolute position of each tracklet.
    pub anchors: Vec<[f64; 2]>,
}

impl<S: Scalar> Batch<S> {
    pub fn new(tracklets: &[&Tracklet], vocab: &Vocabulary, spec: &ModelSpec) -> Result<Self> {
        if tracklets.is_empty() {
            return Err(Error::Empty("batch"));
        }
        spec.check_vocab(vocab)?;
        let b = tracklets.len();
        let in_dim = spec.input_dim();
        let mut features = Vec::with_capacity(b * OBS_LEN * in_dim);
        let mut targets = Vec::with_capacity(b * PRED_LEN * 2);
        let mut agent_indices = Vec::with_capacity(b);
        let mut target_actions = Vec::new();
        let mut anchors = Vec::with_capacity(b);
        for t in tracklets {
            if t.observed.len() != OBS_LEN || t.future.len() != PRED_LEN {
                return Err(Error::LengthMismatch { left: t.observed.len() + t.future.len(), right: OBS_LEN + PRED_LEN });
            }
            let [ax, ay] = t.anchor();
            anchors.push([ax, ay]);
            for s in &t.observed {
                features.extend([s.x - ax, s.y - ay, s.vx, s.vy].map(S::lit));
                if spec.use_actions_in_input {
                    features.extend(vocab.one_hot(s.action)?.into_iter().map(S::lit));
                }
            }
            for s in &t.future {
                targets.push(S::lit(s.x - ax));
                targets.push(S::lit(s.y - ay));
                if spec.task.predicts_actions() {
                    target_actions.push(vocab.action_index(s.action)?);
                }
            }
            if spec.use_agent_class {
                agent_indices.push(vocab.agent_index(t.agent_class)?);
            }
        }
        Ok(Self {
            size: b,
            features: Tensor::new(&[b * OBS_LEN, in_dim], features)?,
            agent_indices,
            target_positions: Tensor::new(&[b, PRED_LEN, 2], targets)?,
            target_actions,
            anchors,
        })
    }
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// `[B × 12 × 2]`.
    pub velocities: Option<Var>,
    /// Anchor-relative positions, `[B × 12 × 2]`.
    pub positions: Option<Var>,
    /// `[B·12 × N_A]`, rows sum to one.
    pub action_probs: Option<Var>,
}

/// Plain-value prediction for one tracklet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub velocities: Vec<[f64; 2]>,
    pub positions: Vec<[f64; 2]>,
    pub action_probs: Option<Vec<Vec<f64>>>,
    pub actions: Option<Vec<ActionClass>>,
}

impl<S: Scalar> Model<S> {
    /// Records the forward pass of `batch` on `tape`.
    pub fn forward(&self, tape: &mut Tape<'_, S>, batch: &Batch<S>) -> Result<ForwardVars> {
        let spec = &self.spec;
        let b = batch.size;
        let x = tape.constant(batch.features.clone());
        let mut h = self.arch.embed.forward(tape, x)?;
        let pe: Vec<S> = (0..b)
            .flat_map(|_| self.arch.positional.data().iter().map(|&v| S::lit(v)))
            .collect();
        let pe = tape.constant(Tensor::new(&[b * OBS_LEN, spec.d_model], pe)?);
        h = tape.add(h, pe)?;
        for block in &self.arch.blocks {
            h = block.forward(tape, h, b, OBS_LEN)?;
        }
        let mut enc = tape.reshape(h, &[b, OBS_LEN * spec.d_model])?;
        if let Some(agent) = &self.arch.agent {
            let e = agent.forward(tape, &batch.agent_indices)?;
            enc = tape.concat_last(&[enc, e])?;
        }

        let mut out = ForwardVars { velocities: None, positions: None, action_probs: None };
        if let Some(head) = &self.arch.trajectory_head {
            let v = head.forward(tape, enc)?;
            let v = tape.reshape(v, &[b, PRED_LEN, 2])?;
            let p = tape.cumsum_axis1(v)?;
            out.velocities = Some(v);
            out.positions = Some(tape.scale(p, S::lit(DT)));
        }
        if let Some(head) = &self.arch.action_head {
            let logits = head.forward(tape, enc)?;
            let logits = tape.reshape(logits, &[b * PRED_LEN, spec.action_vocab_size])?;
            out.action_probs = Some(tape.softmax(logits));
        }
        Ok(out)
    }

    /// Inference without gradients; positions are absolute.
    pub fn predict(&self, tracklets: &[&Tracklet], vocab: &Vocabulary) -> Result<Vec<PredictionOutput>> {
        let batch = Batch::<S>::new(tracklets, vocab, &self.inference_spec())?;
        let mut tape = Tape::new(&self.params);
        let vars = self.forward(&mut tape, &batch)?;
        let n_a = self.spec.action_vocab_size;
        let mut out = Vec::with_capacity(batch.size);
        for i in 0..batch.size {
            let [ax, ay] = batch.anchors[i];
            let (velocities, positions) = match (vars.velocities, vars.positions) {
                (Some(v), Some(p)) => {
                    let v = &tape.value(v).data()[i * PRED_LEN * 2..(i + 1) * PRED_LEN * 2];
                    let p = &tape.value(p).data()[i * PRED_LEN * 2..(i + 1) * PRED_LEN * 2];
                    (
                        v.chunks(2).map(|c| [c[0].as_f64(), c[1].as_f64()]).collect(),
                        p.chunks(2).map(|c| [ax + c[0].as_f64(), ay + c[1].as_f64()]).collect(),
                    )
                }
                _ => (Vec::new(), Vec::new()),
            };
            let (action_probs, actions) = match vars.action_probs {
                Some(pv) => {
                    let rows: Vec<Vec<f64>> = tape.value(pv).data()[i * PRED_LEN * n_a..(i + 1) * PRED_LEN * n_a]
                        .chunks(n_a)
                        .map(|r| r.iter().map(|v| v.as_f64()).collect())
                        .collect();
                    let acts = rows
                        .iter()
                        .map(|r| argmax(r).and_then(|k| vocab.action_at(k)).ok_or(Error::Empty("action row")))
                        .collect::<Result<Vec<_>>>()?;
                    (Some(rows), Some(acts))
                }
                None => (None, None),
            };
            out.push(PredictionOutput { velocities, positions, action_probs, actions });
        }
        Ok(out)
    }

    /// Spec used to build inference batches: future actions are not
    /// needed as targets, so unlabeled futures do not fail.
    fn inference_spec(&self) -> ModelSpec {
        ModelSpec { task: Task::TP, ..self.spec.clone() }
    }
}

/// `p[j] = last + dt · Σ_{i ≤ j} v[i]`.
pub fn integrate(last: [f64; 2], velocities: &[[f64; 2]], dt: f64) -> Vec<[f64; 2]> {
    let mut acc = [0.0, 0.0];
    velocities
        .iter()
        .map(|v| {
            acc[0] += v[0];
            acc[1] += v[1];
            [last[0] + dt * acc[0], last[1] + dt * acc[1]]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::straight;
    use crate::vocab::{scenario_vocabulary, AgentClass, ScenarioSelector};

    fn vocab() -> Vocabulary {
        scenario_vocabulary(ScenarioSelector::Scenarios2and3)
    }

    #[test]
    fn default_widths_parameter_budget() {
        let base = ModelSpec::default();
        let count = |s: &ModelSpec| param_count(&build_model::<f32>(s, 0).unwrap());
        let baseline = count(&base);
        let actions = count(&base.clone().with_actions(true));
        let agent = count(&base.clone().with_agent_class(true));
        let both = count(&base.clone().with_actions(true).with_agent_class(true));
        assert_eq!(baseline, 33112);
        assert!((31_195..=42_205).contains(&baseline));
        assert_eq!(actions - baseline, 10 * base.embed_hidden);
        assert!(both > agent && agent > actions && actions > baseline);
    }

    #[test]
    fn spec_validation() {
        assert!(build_model::<f64>(&ModelSpec { heads: 3, ..ModelSpec::default() }, 0).is_err());
        assert!(build_model::<f64>(&ModelSpec { lambda: -1.0, ..ModelSpec::default() }, 0).is_err());
        assert!(build_model::<f64>(&ModelSpec { d_ff: 0, ..ModelSpec::default() }, 0).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let s = ModelSpec::default().with_task(Task::MTL).with_agent_class(true);
        let a = build_model::<f32>(&s, 42).unwrap();
        let b = build_model::<f32>(&s, 42).unwrap();
        assert_eq!(a.params, b.params);
        let c = build_model::<f32>(&s, 43).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn integrate_examples() {
        let zero = integrate([1.5, -2.0], &[[0.0, 0.0]; 12], DT);
        assert!(zero.iter().all(|p| *p == [1.5, -2.0]));
        let lin = integrate([0.0, 0.0], &[[1.0, 0.0]; 12], DT);
        for (j, p) in lin.iter().enumerate() {
            assert!((p[0] - 0.4 * (j + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn output_shapes_and_probabilities() {
        let v = vocab();
        let spec = ModelSpec::for_vocab(&v).with_task(Task::MTL).with_actions(true).with_agent_class(true);
        let model = build_model::<f32>(&spec, 1).unwrap();
        let t1 = straight(0.0, 0.0, 1.0, 0.5, ActionClass::Walk);
        let mut t2 = straight(2.0, 1.0, -0.3, 0.2, ActionClass::WalkBox);
        t2.agent_class = AgentClass::CarrierBox;
        let batch = Batch::<f32>::new(&[&t1, &t2], &v, &spec).unwrap();
        let mut tape = Tape::new(&model.params);
        let out = model.forward(&mut tape, &batch).unwrap();
        assert_eq!(tape.shape(out.velocities.unwrap()), [2, 12, 2]);
        let probs = tape.value(out.action_probs.unwrap());
        assert_eq!(probs.shape(), [24, 10]);
        for row in probs.data().chunks(10) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
        let preds = model.predict(&[&t1, &t2], &v).unwrap();
        for p in &preds {
            let acts = p.actions.as_ref().unwrap();
            for (row, a) in p.action_probs.as_ref().unwrap().iter().zip(acts) {
                assert_eq!(v.action_at(argmax(row).unwrap()), Some(*a));
            }
        }
    }

    #[test]
    fn translation_shifts_positions_exactly() {
        let v = vocab();
        let spec = ModelSpec::for_vocab(&v).with_actions(true);
        let model = build_model::<f64>(&spec, 2).unwrap();
        // dyadic coordinates keep the anchor subtraction exact
        let mut t = straight(0.0, 0.0, 1.25, 0.5, ActionClass::Walk);
        for (i, s) in t.observed.iter_mut().chain(t.future.iter_mut()).enumerate() {
            s.x = 0.25 + 0.5 * i as f64;
            s.y = -1.5 + 0.125 * i as f64;
        }
        let m = t.translated(10.0, -3.0);
        let a = &model.predict(&[&t], &v).unwrap()[0];
        let b = &model.predict(&[&m], &v).unwrap()[0];
        for (p, q) in a.velocities.iter().zip(&b.velocities) {
            assert_eq!(p[0].to_bits(), q[0].to_bits());
            assert_eq!(p[1].to_bits(), q[1].to_bits());
        }
        // absolute positions are anchor + offset, one rounding apart
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((q[0] - (p[0] + 10.0)).abs() <= 1e-12);
            assert!((q[1] - (p[1] - 3.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let full = scenario_vocabulary(ScenarioSelector::Full);
        let spec = ModelSpec::default().with_actions(true);
        let t = straight(0.0, 0.0, 1.0, 0.0, ActionClass::Walk);
        assert!(Batch::<f32>::new(&[&t], &full, &spec).is_err());
        let v = vocab();
        let t = straight(0.0, 0.0, 1.0, 0.0, ActionClass::HRI);
        assert!(Batch::<f32>::new(&[&t], &v, &spec).is_err());
    }
}
