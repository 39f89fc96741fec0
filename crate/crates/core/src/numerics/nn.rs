//! Layers built from tape primitives.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::init::{normal, xavier_uniform};
use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tape::{Tape, Var};
use super::tensor::{ShapeError, Tensor};

type OpResult = Result<Var, ShapeError>;

/// `y = x·W + b` with `W: [in×out]`, Xavier-uniform weights and zero bias.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier_uniform(rng, in_dim, out_dim));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self { weight, bias, in_dim, out_dim }
    }

    /// `x: [N×in] → [N×out]`.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> OpResult {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.affine(x, w, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(&[dim], S::one()));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[dim]));
        Self { gain, bias, eps: 1e-5 }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> OpResult {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b, S::lit(self.eps))
    }
}

/// Lookup table initialised from N(0, 0.02²).
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        rows: usize,
        dim: usize,
    ) -> Self {
        let table = store.add(format!("{name}.table"), normal(rng, &[rows, dim], 0.02));
        Self { table, rows, dim }
    }

    /// `[indices.len() × dim]`.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, indices: &[usize]) -> OpResult {
        let t = tape.param(self.table);
        tape.gather(t, indices)
    }
}

/// Stack of linear layers with ReLU between them (not after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        widths: &[usize],
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, rng, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, mut x: Var) -> OpResult {
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(tape, x)?;
            if i < last {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }
}

/// Bidirectional multi-head scaled dot-product self-attention.
#[derive(Debug, Clone)]
pub struct MultiHeadSelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub heads: usize,
    pub d_model: usize,
}

impl MultiHeadSelfAttention {
    /// Returns `None` when `d_model` is not divisible by `heads`.
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        d_model: usize,
        heads: usize,
    ) -> Option<Self> {
        if heads == 0 || d_model % heads != 0 {
            return None;
        }
        Some(Self {
            query: Linear::new(store, rng, &format!("{name}.query"), d_model, d_model),
            key: Linear::new(store, rng, &format!("{name}.key"), d_model, d_model),
            value: Linear::new(store, rng, &format!("{name}.value"), d_model, d_model),
            out: Linear::new(store, rng, &format!("{name}.out"), d_model, d_model),
            heads,
            d_model,
        })
    }

    /// `x: [B·T × d]` holding `batch` sequences of `steps` tokens each.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var, batch: usize, steps: usize) -> OpResult {
        let dh = self.d_model / self.heads;
        let q = self.query.forward(tape, x)?;
        let k = self.key.forward(tape, x)?;
        let v = self.value.forward(tape, x)?;
        let scale = S::lit(1.0 / libm::sqrt(dh as f64));
        let mut ctx = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_last(q, h * dh, dh)?;
            let qh = tape.reshape(qh, &[batch, steps, dh])?;
            let kh = tape.slice_last(k, h * dh, dh)?;
            let kh = tape.reshape(kh, &[batch, steps, dh])?;
            let kt = tape.transpose_last2(kh)?;
            let vh = tape.slice_last(v, h * dh, dh)?;
            let vh = tape.reshape(vh, &[batch, steps, dh])?;
            let scores = tape.batch_matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax(scores);
            let c = tape.batch_matmul(attn, vh)?;
            ctx.push(tape.reshape(c, &[batch * steps, dh])?);
        }
        let cat = tape.concat_last(&ctx)?;
        self.out.forward(tape, cat)
    }
}

/// Post-norm encoder block: `LN(x + MHA(x))` then `LN(h + FF(h))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub attention: MultiHeadSelfAttention,
    pub norm1: LayerNorm,
    pub ff: Mlp,
    pub norm2: LayerNorm,
}

impl TransformerBlock {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        rng: &mut R,
        name: &str,
        d_model: usize,
        heads: usize,
        d_ff: usize,
    ) -> Option<Self> {
        let attention = MultiHeadSelfAttention::new(store, rng, &format!("{name}.attn"), d_model, heads)?;
        let norm1 = LayerNorm::new(store, &format!("{name}.norm1"), d_model);
        let ff = Mlp::new(store, rng, &format!("{name}.ff"), &[d_model, d_ff, d_model]);
        let norm2 = LayerNorm::new(store, &format!("{name}.norm2"), d_model);
        Some(Self { attention, norm1, ff, norm2 })
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var, batch: usize, steps: usize) -> OpResult {
        let a = self.attention.forward(tape, x, batch, steps)?;
        let h = tape.add(x, a)?;
        let h = self.norm1.forward(tape, h)?;
        let f = self.ff.forward(tape, h)?;
        let o = tape.add(h, f)?;
        self.norm2.forward(tape, o)
    }
}

/// Fixed sine/cosine table `[T×d]`: even columns `sin(t / 10000^(2i/d))`,
/// odd columns the matching cosine. `None` for odd `d`.
pub fn sinusoidal_positional_encoding(steps: usize, d: usize) -> Option<Tensor<f64>> {
    if d % 2 != 0 {
        return None;
    }
    let mut data = Vec::with_capacity(steps * d);
    for t in 0..steps {
        for i in 0..d / 2 {
            let freq = libm::pow(10000.0, -(2.0 * i as f64) / d as f64);
            let angle = t as f64 * freq;
            data.push(libm::sin(angle));
            data.push(libm::cos(angle));
        }
    }
    Tensor::new(&[steps, d], data).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_param_count() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Linear::new(&mut store, &mut rng, "l", 4, 8);
        assert_eq!(store.scalar_count(), 40);
    }

    #[test]
    fn xavier_bounds() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Linear::new(&mut store, &mut rng, "l", 10, 20);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(store.get(l.weight).value.data().iter().all(|w| w.abs() <= bound));
        assert!(store.get(l.bias).value.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn positional_encoding_table() {
        let pe = sinusoidal_positional_encoding(10_000, 8).unwrap();
        assert_eq!(pe.data()[0], 0.0);
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let rows: Vec<&[f64]> = pe.data().chunks(8).collect();
        let mut sorted: Vec<Vec<u64>> = rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 10_000);
        assert!(sinusoidal_positional_encoding(4, 7).is_none());
    }

    #[test]
    fn attention_rejects_indivisible_width() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MultiHeadSelfAttention::new(&mut store, &mut rng, "a", 30, 4).is_none());
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mha = MultiHeadSelfAttention::new(&mut store, &mut rng, "a", 8, 2).unwrap();
        let x = random(&mut rng, &[1, 8]);
        let mut tape = Tape::new(&store);
        let xv = tape.constant(x);
        let y = mha.forward(&mut tape, xv, 1, 1).unwrap();
        let expect = {
            let v = mha.value.forward(&mut tape, xv).unwrap();
            mha.out.forward(&mut tape, v).unwrap()
        };
        for (a, b) in tape.value(y).data().iter().zip(tape.value(expect).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_is_permutation_equivariant() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mha = MultiHeadSelfAttention::new(&mut store, &mut rng, "a", 16, 4).unwrap();
        let x = random(&mut rng, &[8, 16]);
        let perm = [3usize, 0, 7, 1, 6, 2, 5, 4];
        let px: Vec<f64> = perm.iter().flat_map(|&p| x.data()[p * 16..(p + 1) * 16].to_vec()).collect();
        let mut tape = Tape::new(&store);
        let a = tape.constant(x.clone());
        let ya = mha.forward(&mut tape, a, 1, 8).unwrap();
        let b = tape.constant(Tensor::new(&[8, 16], px).unwrap());
        let yb = mha.forward(&mut tape, b, 1, 8).unwrap();
        let (ya, yb) = (tape.value(ya).data(), tape.value(yb).data());
        for (i, &p) in perm.iter().enumerate() {
            for j in 0..16 {
                assert!((yb[i * 16 + j] - ya[p * 16 + j]).abs() < 1e-12);
            }
        }
    }

    fn check_layer<F>(store: &ParamStore<f64>, f: F) -> f64
    where
        F: Fn(&mut Tape<f64>) -> Result<Var, ShapeError>,
    {
        let r = grad_check(store, 1e-5, None, 0, f).unwrap();
        r.max_rel_err
    }

    #[test]
    fn attention_gradient_check() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mha = MultiHeadSelfAttention::new(&mut store, &mut rng, "a", 32, 2).unwrap();
        let x = store.add("x", random(&mut rng, &[8, 32]));
        let w = random(&mut rng, &[8, 32]);
        let err = check_layer(&store, |tape| {
            let xv = tape.param(x);
            let y = mha.forward(tape, xv, 1, 8)?;
            let wv = tape.constant(w.clone());
            let p = tape.mul(y, wv)?;
            Ok(tape.sum(p))
        });
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn block_and_embedding_gradient_check() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let block = TransformerBlock::new(&mut store, &mut rng, "b", 8, 2, 16).unwrap();
        let emb = Embedding::new(&mut store, &mut rng, "e", 5, 8);
        // unit-scale rows keep the layer norms away from their eps regime
        store.get_mut(emb.table).value = random(&mut rng, &[5, 8]);
        let w = random(&mut rng, &[6, 8]);
        let err = check_layer(&store, |tape| {
            let e = emb.forward(tape, &[4, 1, 1, 0, 2, 3])?;
            let y = block.forward(tape, e, 2, 3)?;
            let wv = tape.constant(w.clone());
            let p = tape.mul(y, wv)?;
            Ok(tape.sum(p))
        });
        assert!(err <= 1e-4, "{err}");
    }
}
