//! Reverse-mode tape.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use super::tensor::{gemm, ShapeError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, S),
    Relu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<S>, inv_std: Vec<S> },
    Gather { table: Var, rows: Vec<usize> },
    Reshape(Var),
    TransposeLast2(Var),
    SliceLast { x: Var, start: usize },
    ConcatLast(Vec<Var>),
    CumSum1(Var),
    Sum(Var),
    Mean(Var),
    LnClamped { x: Var, floor: S },
    Pick { x: Var, cols: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

type OpResult = Result<Var, ShapeError>;

/// Records one forward pass.
///
/// Parameters from the attached [`ParamStore`] are bound on first use by
/// [`Tape::param`]; every primitive method validates shapes and appends a
/// node. A tape is single-threaded; run independent tapes in parallel.
pub struct Tape<'p, S: Scalar> {
    nodes: Vec<Node<S>>,
    params: Option<&'p ParamStore<S>>,
    bound: Vec<Option<Var>>,
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Self { nodes: Vec::new(), params: Some(params), bound: vec![None; params.len()] }
    }

    /// A tape without parameters; inputs come from [`Tape::leaf`].
    pub fn detached() -> Self {
        Self { nodes: Vec::new(), params: None, bound: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf value; gradients are tracked when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    /// Binds a parameter of the attached store, once per tape.
    ///
    /// # Panics
    /// If the tape has no store or the id does not belong to it.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.index()] {
            return v;
        }
        let store = self.params.expect("tape has no parameter store");
        let v = self.leaf(store.get(id).value.clone(), true);
        self.bound[id.index()] = Some(v);
        v
    }

    // ---- primitives -------------------------------------------------------

    /// `[m×k] · [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(ShapeError::new("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::zero(); m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n, false, false);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), ng))
    }

    /// `[B×m×k] · [B×k×n]`.
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> OpResult {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(ShapeError::new("batch_matmul", sa, sb));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![S::zero(); bs * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            gemm(
                &av[i * m * k..(i + 1) * m * k],
                &bv[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
                false,
                false,
            );
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&[bs, m, n], out)?, Op::BatchMatMul(a, b), ng))
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(S, S) -> S, op: Op<S>) -> OpResult {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(ShapeError::new(name, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = sa.to_vec();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(&shape, data)?, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> OpResult {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> OpResult {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> OpResult {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let d = self.value(x).last_dim();
        if sb.len() != 1 || sb[0] != d {
            return Err(ShapeError::new("add_bias", sx, sb));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(d)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &c)| v + c))
            .collect();
        let shape = sx.to_vec();
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(Tensor::new(&shape, data)?, Op::AddBias(x, bias), ng))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e * c).collect();
        let t = Tensor::new(v.shape(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(t, Op::Scale(x, c), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| if e > S::zero() { e } else { S::zero() }).collect();
        let t = Tensor::new(v.shape(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(t, Op::Relu(x), ng)
    }

    /// Softmax over the last axis, stabilised by subtracting each slice's max.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let d = v.last_dim();
        let mut data = Vec::with_capacity(v.len());
        for row in v.data().chunks(d) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let start = data.len();
            let mut sum = S::zero();
            for &e in row {
                let z = (e - max).exp();
                sum += z;
                data.push(z);
            }
            for z in &mut data[start..] {
                *z /= sum;
            }
        }
        let t = Tensor::new(v.shape(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(t, Op::Softmax(x), ng)
    }

    /// Normalises each last-axis slice to zero mean and unit variance, then
    /// applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: S) -> OpResult {
        let d = self.value(x).last_dim();
        for p in [gain, bias] {
            if self.shape(p) != [d] {
                return Err(ShapeError::new("layer_norm", self.shape(x), self.shape(p)));
            }
        }
        let xv = self.value(x);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = xv.len() / d.max(1);
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        let dn = S::lit(d as f64);
        for row in xv.data().chunks(d) {
            let mean = row.iter().copied().sum::<S>() / dn;
            let var = row.iter().map(|&e| (e - mean) * (e - mean)).sum::<S>() / dn;
            let is = S::one() / (var + eps).sqrt();
            inv_std.push(is);
            for (j, &e) in row.iter().enumerate() {
                let h = (e - mean) * is;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let shape = xv.shape().to_vec();
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(Tensor::new(&shape, out)?, Op::LayerNorm { x, gain, bias, xhat, inv_std }, ng))
    }

    /// Selects rows of a `[V×d]` table.
    pub fn gather(&mut self, table: Var, rows: &[usize]) -> OpResult {
        let st = self.shape(table);
        if st.len() != 2 || rows.iter().any(|&r| r >= st[0]) {
            return Err(ShapeError::new("gather", st, &[rows.len()]).with_note("row index out of range"));
        }
        let d = st[1];
        let tv = self.value(table).data();
        let data = rows.iter().flat_map(|&r| tv[r * d..(r + 1) * d].iter().copied()).collect();
        let ng = self.needs(table);
        Ok(self.push(Tensor::new(&[rows.len(), d], data)?, Op::Gather { table, rows: rows.to_vec() }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> OpResult {
        let t = self.value(x).clone().reshape(shape)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    /// Swaps the last two axes of a rank-3 tensor.
    pub fn transpose_last2(&mut self, x: Var) -> OpResult {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(ShapeError::new("transpose_last2", s, &[3]).with_note("rank 3 required"));
        }
        let (b, m, n) = (s[0], s[1], s[2]);
        let out = transpose3(self.value(x).data(), b, m, n);
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(&[b, n, m], out)?, Op::TransposeLast2(x), ng))
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, len: usize) -> OpResult {
        let v = self.value(x);
        let d = v.last_dim();
        if start + len > d {
            return Err(ShapeError::new("slice_last", v.shape(), &[start, len]));
        }
        let data = v.data().chunks(d).flat_map(|r| r[start..start + len].iter().copied()).collect();
        let mut shape = v.shape().to_vec();
        *shape.last_mut().expect("rank ≥ 1") = len;
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(&shape, data)?, Op::SliceLast { x, start }, ng))
    }

    /// Concatenates along the last axis; leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> OpResult {
        let first = *parts.first().ok_or_else(|| ShapeError::new("concat_last", &[], &[]))?;
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || &s[..s.len() - 1] != lead {
                return Err(ShapeError::new("concat_last", self.shape(first), s));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(&shape, data)?, Op::ConcatLast(parts.to_vec()), ng))
    }

    /// Running sum along axis 1 of a `[B×T×C]` tensor.
    pub fn cumsum_axis1(&mut self, x: Var) -> OpResult {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(ShapeError::new("cumsum_axis1", s, &[3]).with_note("rank 3 required"));
        }
        let (b, t, c) = (s[0], s[1], s[2]);
        let mut out = self.value(x).data().to_vec();
        for bi in 0..b {
            for ti in 1..t {
                for ci in 0..c {
                    let prev = out[(bi * t + ti - 1) * c + ci];
                    out[(bi * t + ti) * c + ci] += prev;
                }
            }
        }
        let shape = s.to_vec();
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(&shape, out)?, Op::CumSum1(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<S>();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<S>() / S::lit(v.len() as f64);
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// `ln(max(x, floor))`; zero gradient where clamped.
    pub fn ln_clamped(&mut self, x: Var, floor: S) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e.max(floor).ln()).collect();
        let t = Tensor::new(v.shape(), data).expect("same shape");
        let ng = self.needs(x);
        self.push(t, Op::LnClamped { x, floor }, ng)
    }

    /// `out[i] = x[i, cols[i]]` for `x` of shape `[N×C]`.
    pub fn pick(&mut self, x: Var, cols: &[usize]) -> OpResult {
        let s = self.shape(x);
        if s.len() != 2 || s[0] != cols.len() || cols.iter().any(|&c| c >= s[1]) {
            return Err(ShapeError::new("pick", s, &[cols.len()]));
        }
        let c = s[1];
        let v = self.value(x).data();
        let data = cols.iter().enumerate().map(|(i, &j)| v[i * c + j]).collect();
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(&[cols.len()], data)?, Op::Pick { x, cols: cols.to_vec() }, ng))
    }

    /// Linear layer `x·W + b` on `[N×in]` rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> OpResult {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    // ---- backward ---------------------------------------------------------

    /// Back-propagates from a single-element `loss`, visiting nodes in exact
    /// reverse recording order. Contributions accumulate additively.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, ShapeError> {
        if self.value(loss).len() != 1 {
            return Err(ShapeError::new("backward", self.shape(loss), &[1]).with_note("loss must be scalar"));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::new(n.value.shape(), g).expect("grad shape")))
            .collect();
        Ok(Gradients { grads, bound: self.bound.clone() })
    }

    fn backward_node(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, contrib: Vec<S>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs(*a) {
                    let mut da = vec![S::zero(); m * k];
                    gemm(g, bv.data(), &mut da, m, n, k, false, true);
                    acc(*a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![S::zero(); k * n];
                    gemm(av.data(), g, &mut db, k, m, n, true, false);
                    acc(*b, db);
                }
            }
            Op::BatchMatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (bs, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                if self.needs(*a) {
                    let mut da = vec![S::zero(); bs * m * k];
                    for i in 0..bs {
                        gemm(
                            &g[i * m * n..(i + 1) * m * n],
                            &bv.data()[i * k * n..(i + 1) * k * n],
                            &mut da[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                            false,
                            true,
                        );
                    }
                    acc(*a, da);
                }
                if self.needs(*b) {
                    let mut db = vec![S::zero(); bs * k * n];
                    for i in 0..bs {
                        gemm(
                            &av.data()[i * m * k..(i + 1) * m * k],
                            &g[i * m * n..(i + 1) * m * n],
                            &mut db[i * k * n..(i + 1) * k * n],
                            k,
                            m,
                            n,
                            true,
                            false,
                        );
                    }
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|&e| -e).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                acc(*a, g.iter().zip(bv).map(|(&e, &y)| e * y).collect());
                acc(*b, g.iter().zip(av).map(|(&e, &x)| e * x).collect());
            }
            Op::AddBias(x, b) => {
                acc(*x, g.to_vec());
                let d = val(*b).len();
                let mut db = vec![S::zero(); d];
                for row in g.chunks(d) {
                    db.iter_mut().zip(row).for_each(|(o, &e)| *o += e);
                }
                acc(*b, db);
            }
            Op::Scale(x, c) => {
                // an exactly-zero weight contributes nothing
                if *c != S::zero() {
                    acc(*x, g.iter().map(|&e| e * *c).collect());
                }
            }
            Op::Relu(x) => {
                let xv = val(*x).data();
                acc(*x, g.iter().zip(xv).map(|(&e, &v)| if v > S::zero() { e } else { S::zero() }).collect());
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let d = node.value.last_dim();
                let mut dx = Vec::with_capacity(y.len());
                for (gr, yr) in g.chunks(d).zip(y.chunks(d)) {
                    let dot: S = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    dx.extend(gr.iter().zip(yr).map(|(&a, &b)| b * (a - dot)));
                }
                acc(*x, dx);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let gv = val(*gain).data();
                let d = gv.len();
                let dn = S::lit(d as f64);
                let mut dgain = vec![S::zero(); d];
                let mut dbias = vec![S::zero(); d];
                let mut dx = Vec::with_capacity(g.len());
                for ((gr, hr), &is) in g.chunks(d).zip(xhat.chunks(d)).zip(inv_std) {
                    let mut mean_dh = S::zero();
                    let mut mean_dh_h = S::zero();
                    for j in 0..d {
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                        let dh = gr[j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= dn;
                    mean_dh_h /= dn;
                    dx.extend((0..d).map(|j| is * (gr[j] * gv[j] - mean_dh - hr[j] * mean_dh_h)));
                }
                acc(*x, dx);
                acc(*gain, dgain);
                acc(*bias, dbias);
            }
            Op::Gather { table, rows } => {
                let tv = val(*table);
                let d = tv.shape()[1];
                let mut dt = vec![S::zero(); tv.len()];
                for (i, &r) in rows.iter().enumerate() {
                    dt[r * d..(r + 1) * d].iter_mut().zip(&g[i * d..(i + 1) * d]).for_each(|(o, &e)| *o += e);
                }
                acc(*table, dt);
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::TransposeLast2(x) => {
                let s = node.value.shape();
                acc(*x, transpose3(g, s[0], s[1], s[2]));
            }
            Op::SliceLast { x, start } => {
                let d = val(*x).last_dim();
                let len = node.value.last_dim();
                let mut dx = vec![S::zero(); val(*x).len()];
                for (dr, gr) in dx.chunks_mut(d).zip(g.chunks(len)) {
                    dr[*start..*start + len].copy_from_slice(gr);
                }
                acc(*x, dx);
            }
            Op::ConcatLast(parts) => {
                let total = node.value.last_dim();
                let rows = g.len() / total.max(1);
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).last_dim();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    acc(p, dp);
                    offset += w;
                }
            }
            Op::CumSum1(x) => {
                let s = node.value.shape();
                let (b, t, c) = (s[0], s[1], s[2]);
                let mut dx = g.to_vec();
                for bi in 0..b {
                    for ti in (0..t.saturating_sub(1)).rev() {
                        for ci in 0..c {
                            let next = dx[(bi * t + ti + 1) * c + ci];
                            dx[(bi * t + ti) * c + ci] += next;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; val(*x).len()]),
            Op::Mean(x) => {
                let n = val(*x).len();
                acc(*x, vec![g[0] / S::lit(n as f64); n]);
            }
            Op::LnClamped { x, floor } => {
                let xv = val(*x).data();
                acc(*x, g.iter().zip(xv).map(|(&e, &v)| if v > *floor { e / v } else { S::zero() }).collect());
            }
            Op::Pick { x, cols } => {
                let xv = val(*x);
                let c = xv.shape()[1];
                let mut dx = vec![S::zero(); xv.len()];
                for (i, &j) in cols.iter().enumerate() {
                    dx[i * c + j] += g[i];
                }
                acc(*x, dx);
            }
        }
    }
}

fn transpose3<S: Copy>(data: &[S], b: usize, m: usize, n: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(data.len());
    for bi in 0..b {
        let base = bi * m * n;
        for j in 0..n {
            for i in 0..m {
                out.push(data[base + i * n + j]);
            }
        }
    }
    out
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    bound: Vec<Option<Var>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to a recorded value; `None` if it did not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<S>> {
        self.bound.get(id.index()).copied().flatten().and_then(|v| self.wrt(v))
    }

    /// One entry per parameter of the store, in store order.
    pub fn into_param_grads(mut self) -> Vec<Option<Tensor<S>>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| self.grads[v.0].take()))
            .collect()
    }
}
