//! Dense tensors and the reverse-mode tape.
//!
//! A [`Tape`] records one forward pass as a flat list of nodes in creation
//! order (which is already a topological order); [`Tape::backward`] consumes
//! the tape once and accumulates gradients for every leaf that requires them.
//! Every op traps NaN/Inf in its output.

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Inner product with four independent accumulators so the loop vectorizes;
/// the plain reduction is the hot path of every matrix-vector product.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let mut acc = [0.0f64; 8];
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Row-major dense tensor. Scalars are shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch {
                op: "from_vec".to_string(),
                detail: format!("shape {shape:?} vs data length {}", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Dot(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Elementwise scale of the first input by a scalar variable.
    ScaleBy(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>),
    MaxPool(Vec<Var>),
    Softmax(Var),
    Row(Var, usize),
    Pick(Var, usize),
    Slice(Var, usize, usize),
    Sum(Var),
    MeanStack(Vec<Var>),
}

struct Node {
    value: Tensor,
    grad_needed: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Leaf vars for a [`super::ParameterSet`] bound onto one tape.
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingGradient(name.to_string()))
    }

    /// Collects gradients by parameter name; leaves never touched by the
    /// forward pass get zeros of the parameter's shape.
    pub fn grads_by_name(&self, tape: &Tape, grads: &Gradients) -> IndexMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = grads
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&tape.nodes[v.0].value.shape));
                (name.clone(), g)
            })
            .collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Binds every parameter as a grad-requiring leaf.
    pub fn bind(&mut self, params: &super::ParameterSet) -> BoundParams {
        let vars = params
            .iter()
            .map(|(name, t)| (name.to_string(), self.leaf(t.clone(), true)))
            .collect();
        BoundParams { vars }
    }

    fn push(&mut self, value: Tensor, grad_needed: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            grad_needed,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].grad_needed)
    }

    fn emit(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite {
                op: format!("{op:?}"),
            });
        }
        let grad_needed = self.needs(inputs);
        Ok(self.push(value, grad_needed, op))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: op.to_string(),
                detail: format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            });
        }
        Ok(())
    }

    /// `[m,k] x [k,n] -> [m,n]`, or `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let value = match (sa.as_slice(), sb.as_slice()) {
            ([m, k], [k2, n]) if k == k2 => {
                let (m, k, n) = (*m, *k, *n);
                let av = &self.nodes[a.0].value.data;
                let bv = &self.nodes[b.0].value.data;
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = av[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let brow = &bv[p * n..(p + 1) * n];
                        let orow = &mut out[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += aip * brow[j];
                        }
                    }
                }
                Tensor::from_vec(&[m, n], out)?
            }
            ([m, k], [k2]) if k == k2 => {
                let (m, k) = (*m, *k);
                let av = &self.nodes[a.0].value.data;
                let bv = &self.nodes[b.0].value.data;
                let mut out = vec![0.0; m];
                for i in 0..m {
                    out[i] = dot(&av[i * k..(i + 1) * k], bv);
                }
                Tensor::from_vec(&[m], out)?
            }
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "matmul".to_string(),
                    detail: format!("{sa:?} x {sb:?}"),
                })
            }
        };
        self.emit(value, &[a, b], Op::Matmul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip(a, b, |x, y| x + y);
        self.emit(value, &[a, b], Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip(a, b, |x, y| x - y);
        self.emit(value, &[a, b], Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip(a, b, |x, y| x * y);
        self.emit(value, &[a, b], Op::Mul(a, b))
    }

    /// Inner product of two equal-length vectors -> scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let v = dot(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
        self.emit(Tensor::scalar(v), &[a, b], Op::Dot(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| -x);
        self.emit(value, &[a], Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.map(a, |x| c * x);
        self.emit(value, &[a], Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.map(a, |x| x + c);
        self.emit(value, &[a], Op::AddScalar(a))
    }

    /// Elementwise scale of `a` by the scalar variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.nodes[s.0].value.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "scale_by".to_string(),
                detail: format!("scalar expected, got {:?}", self.shape(s)),
            });
        }
        let c = self.nodes[s.0].value.item();
        let value = self.map(a, |x| c * x);
        self.emit(value, &[a, s], Op::ScaleBy(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, f64::tanh);
        self.emit(value, &[a], Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| 1.0 / (1.0 + (-x).exp()));
        self.emit(value, &[a], Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, |x| x.max(0.0));
        self.emit(value, &[a], Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let value = self.map(a, f64::ln);
        self.emit(value, &[a], Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.map(a, |x| x.clamp(lo, hi));
        self.emit(value, &[a], Op::Clamp(a, lo, hi))
    }

    /// Concatenation of 1-D vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of nothing".to_string()));
        }
        let mut data = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "concat".to_string(),
                    detail: format!("1-D expected, got {:?}", self.shape(p)),
                });
            }
            data.extend_from_slice(&self.nodes[p.0].value.data);
        }
        let len = data.len();
        let value = Tensor::from_vec(&[len], data)?;
        self.emit(value, parts, Op::Concat(parts.to_vec()))
    }

    /// Elementwise max over same-shape tensors.
    pub fn max_pool(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("max_pool of nothing".to_string()));
        }
        for &p in &parts[1..] {
            self.same_shape("max_pool", parts[0], p)?;
        }
        let n = self.nodes[parts[0].0].value.numel();
        let mut data = self.nodes[parts[0].0].value.data.clone();
        for &p in &parts[1..] {
            for (d, &x) in data.iter_mut().zip(&self.nodes[p.0].value.data) {
                if x > *d {
                    *d = x;
                }
            }
        }
        let shape = self.shape(parts[0]).to_vec();
        debug_assert_eq!(n, data.len());
        let value = Tensor::from_vec(&shape, data)?;
        self.emit(value, parts, Op::MaxPool(parts.to_vec()))
    }

    /// Numerically stable softmax over a 1-D vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.shape(a).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax".to_string(),
                detail: format!("1-D expected, got {:?}", self.shape(a)),
            });
        }
        let x = &self.nodes[a.0].value.data;
        let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        let data: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let len = data.len();
        let value = Tensor::from_vec(&[len], data)?;
        self.emit(value, &[a], Op::Softmax(a))
    }

    /// Row `r` of a `[rows, cols]` matrix -> `[cols]`. This is the embedding
    /// lookup primitive.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let [rows, cols] = shape.as_slice() else {
            return Err(Error::ShapeMismatch {
                op: "row".to_string(),
                detail: format!("matrix expected, got {shape:?}"),
            });
        };
        if r >= *rows {
            return Err(Error::ShapeMismatch {
                op: "row".to_string(),
                detail: format!("row {r} out of {rows}"),
            });
        }
        let cols = *cols;
        let data = self.nodes[a.0].value.data[r * cols..(r + 1) * cols].to_vec();
        let value = Tensor::from_vec(&[cols], data)?;
        self.emit(value, &[a], Op::Row(a, r))
    }

    /// Embedding lookup: one row per token id.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Result<Vec<Var>> {
        ids.iter().map(|&id| self.row(table, id as usize)).collect()
    }

    /// Element `i` of a 1-D vector -> scalar.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        if self.shape(a).len() != 1 || i >= self.nodes[a.0].value.numel() {
            return Err(Error::ShapeMismatch {
                op: "pick".to_string(),
                detail: format!("index {i} into {:?}", self.shape(a)),
            });
        }
        let v = self.nodes[a.0].value.data[i];
        self.emit(Tensor::scalar(v), &[a], Op::Pick(a, i))
    }

    /// `[start, start+len)` of a 1-D vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        if self.shape(a).len() != 1 || start + len > self.nodes[a.0].value.numel() {
            return Err(Error::ShapeMismatch {
                op: "slice".to_string(),
                detail: format!("[{start}, {}) of {:?}", start + len, self.shape(a)),
            });
        }
        let data = self.nodes[a.0].value.data[start..start + len].to_vec();
        let value = Tensor::from_vec(&[len], data)?;
        self.emit(value, &[a], Op::Slice(a, start, len))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.data.iter().sum();
        self.emit(Tensor::scalar(v), &[a], Op::Sum(a))
    }

    /// Mean of scalar variables -> scalar.
    pub fn mean_stack(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("mean of nothing".to_string()));
        }
        let mut acc = 0.0;
        for &p in parts {
            if !self.nodes[p.0].value.is_scalar() {
                return Err(Error::ShapeMismatch {
                    op: "mean_stack".to_string(),
                    detail: format!("scalar expected, got {:?}", self.shape(p)),
                });
            }
            acc += self.nodes[p.0].value.item();
        }
        let value = Tensor::scalar(acc / parts.len() as f64);
        self.emit(value, parts, Op::MeanStack(parts.to_vec()))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let src = &self.nodes[a.0].value;
        Tensor {
            shape: src.shape.clone(),
            data: src.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        Tensor {
            shape: x.shape.clone(),
            data: x
                .data
                .iter()
                .zip(&y.data)
                .map(|(&p, &q)| f(p, q))
                .collect(),
        }
    }

    /// Reverse accumulation from a scalar loss. Consumes the tape: a second
    /// call is an error.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].grad_needed {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate_parents(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn add_to(&self, grads: &mut Vec<Option<Tensor>>, v: Var, delta: &[f64]) {
        if !self.nodes[v.0].grad_needed {
            return;
        }
        let slot = &mut grads[v.0];
        match slot {
            Some(t) => {
                for (d, &x) in t.data.iter_mut().zip(delta) {
                    *d += x;
                }
            }
            None => {
                let mut t = Tensor::zeros(&self.nodes[v.0].value.shape);
                t.data.copy_from_slice(delta);
                *slot = Some(t);
            }
        }
    }

    /// Mutable view of the gradient buffer for `v`, zero-initialized on first
    /// touch. Callers must check `grad_needed` first; accumulating in place
    /// avoids a temporary plus a second pass for the large-parent ops.
    fn slot_data<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut [f64] {
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(&self.nodes[v.0].value.shape));
        }
        &mut slot.as_mut().expect("just initialized").data
    }

    fn accumulate_parents(&self, idx: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let av = &self.nodes[a.0].value.data;
                let bv = &self.nodes[b.0].value.data;
                match (sa, sb) {
                    ([m, k], [_, n]) => {
                        let (m, k, n) = (*m, *k, *n);
                        // dA = dC B^T
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &g.data[i * n..(i + 1) * n];
                            for p in 0..k {
                                da[i * k + p] = dot(grow, &bv[p * n..(p + 1) * n]);
                            }
                        }
                        self.add_to(grads, *a, &da);
                        // dB = A^T dC
                        let mut db = vec![0.0; k * n];
                        for i in 0..m {
                            for p in 0..k {
                                let aip = av[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    db[p * n + j] += aip * g.data[i * n + j];
                                }
                            }
                        }
                        self.add_to(grads, *b, &db);
                    }
                    ([m, k], [_]) => {
                        let (m, k) = (*m, *k);
                        if self.nodes[a.0].grad_needed {
                            // dA += outer(g, b)
                            let da = self.slot_data(grads, *a);
                            for i in 0..m {
                                let gi = g.data[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                for (d, &bp) in da[i * k..(i + 1) * k].iter_mut().zip(bv) {
                                    *d += gi * bp;
                                }
                            }
                        }
                        if self.nodes[b.0].grad_needed {
                            // db += A^T g
                            let db = self.slot_data(grads, *b);
                            for i in 0..m {
                                let gi = g.data[i];
                                if gi == 0.0 {
                                    continue;
                                }
                                let arow = &av[i * k..(i + 1) * k];
                                for (d, &ap) in db.iter_mut().zip(arow) {
                                    *d += ap * gi;
                                }
                            }
                        }
                    }
                    _ => unreachable!("shapes validated on the forward pass"),
                }
            }
            Op::Add(a, b) => {
                self.add_to(grads, *a, &g.data);
                self.add_to(grads, *b, &g.data);
            }
            Op::Sub(a, b) => {
                self.add_to(grads, *a, &g.data);
                let neg: Vec<f64> = g.data.iter().map(|x| -x).collect();
                self.add_to(grads, *b, &neg);
            }
            Op::Mul(a, b) => {
                let bv = &self.nodes[b.0].value.data;
                let da: Vec<f64> = g.data.iter().zip(bv).map(|(&gi, &bi)| gi * bi).collect();
                self.add_to(grads, *a, &da);
                let av = &self.nodes[a.0].value.data;
                let db: Vec<f64> = g.data.iter().zip(av).map(|(&gi, &ai)| gi * ai).collect();
                self.add_to(grads, *b, &db);
            }
            Op::Dot(a, b) => {
                let gs = g.data[0];
                let bv = &self.nodes[b.0].value.data;
                let da: Vec<f64> = bv.iter().map(|&x| gs * x).collect();
                self.add_to(grads, *a, &da);
                let av = &self.nodes[a.0].value.data;
                let db: Vec<f64> = av.iter().map(|&x| gs * x).collect();
                self.add_to(grads, *b, &db);
            }
            Op::Neg(a) => {
                let da: Vec<f64> = g.data.iter().map(|x| -x).collect();
                self.add_to(grads, *a, &da);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = g.data.iter().map(|x| c * x).collect();
                self.add_to(grads, *a, &da);
            }
            Op::AddScalar(a) => self.add_to(grads, *a, &g.data),
            Op::ScaleBy(a, s) => {
                let c = self.nodes[s.0].value.item();
                let da: Vec<f64> = g.data.iter().map(|x| c * x).collect();
                self.add_to(grads, *a, &da);
                let av = &self.nodes[a.0].value.data;
                let ds: f64 = g.data.iter().zip(av).map(|(&gi, &ai)| gi * ai).sum();
                self.add_to(grads, *s, &[ds]);
            }
            Op::Tanh(a) => {
                let y = &node.value.data;
                let da: Vec<f64> = g
                    .data
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| gi * (1.0 - yi * yi))
                    .collect();
                self.add_to(grads, *a, &da);
            }
            Op::Sigmoid(a) => {
                let y = &node.value.data;
                let da: Vec<f64> = g
                    .data
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| gi * yi * (1.0 - yi))
                    .collect();
                self.add_to(grads, *a, &da);
            }
            Op::Relu(a) => {
                let x = &self.nodes[a.0].value.data;
                let da: Vec<f64> = g
                    .data
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                self.add_to(grads, *a, &da);
            }
            Op::Log(a) => {
                let x = &self.nodes[a.0].value.data;
                let da: Vec<f64> = g.data.iter().zip(x).map(|(&gi, &xi)| gi / xi).collect();
                self.add_to(grads, *a, &da);
            }
            Op::Clamp(a, lo, hi) => {
                let x = &self.nodes[a.0].value.data;
                let da: Vec<f64> = g
                    .data
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| if xi > *lo && xi < *hi { gi } else { 0.0 })
                    .collect();
                self.add_to(grads, *a, &da);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    self.add_to(grads, p, &g.data[offset..offset + n]);
                    offset += n;
                }
            }
            Op::MaxPool(parts) => {
                // Ties route to the first attaining input.
                let out = &node.value.data;
                for (pos, (&gi, &oi)) in g.data.iter().zip(out).enumerate() {
                    for &p in parts {
                        if self.nodes[p.0].value.data[pos] == oi {
                            let mut delta = vec![0.0; out.len()];
                            delta[pos] = gi;
                            self.add_to(grads, p, &delta);
                            break;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let y = &node.value.data;
                let dot: f64 = g.data.iter().zip(y).map(|(&gi, &yi)| gi * yi).sum();
                let da: Vec<f64> = g
                    .data
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| yi * (gi - dot))
                    .collect();
                self.add_to(grads, *a, &da);
            }
            Op::Row(a, r) => {
                if self.nodes[a.0].grad_needed {
                    let cols = node.value.numel();
                    let da = self.slot_data(grads, *a);
                    for (d, &x) in da[r * cols..(r + 1) * cols].iter_mut().zip(&g.data) {
                        *d += x;
                    }
                }
            }
            Op::Pick(a, i) => {
                if self.nodes[a.0].grad_needed {
                    self.slot_data(grads, *a)[*i] += g.data[0];
                }
            }
            Op::Slice(a, start, len) => {
                if self.nodes[a.0].grad_needed {
                    let da = self.slot_data(grads, *a);
                    for (d, &x) in da[*start..start + len].iter_mut().zip(&g.data) {
                        *d += x;
                    }
                }
            }
            Op::Sum(a) => {
                let da = vec![g.data[0]; self.nodes[a.0].value.numel()];
                self.add_to(grads, *a, &da);
            }
            Op::MeanStack(parts) => {
                let gi = g.data[0] / parts.len() as f64;
                for &p in parts {
                    self.add_to(grads, p, &[gi]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_of_zeros_is_zeros() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[4]));
        let y = tape.tanh(x).unwrap();
        assert_eq!(tape.value(y).data, vec![0.0; 4]);
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let eye = tape.constant(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let c = tape.matmul(a, eye).unwrap();
        assert_eq!(tape.value(c).data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(&[3], vec![0.3, -1.0, 5.0]).unwrap());
        let y = tape.softmax(x).unwrap();
        let s: f64 = tape.value(y).data.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2]));
        let b = tape.constant(Tensor::zeros(&[3]));
        match tape.add(a, b) {
            Err(Error::ShapeMismatch { op, .. }) => assert_eq!(op, "add"),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn backward_sum_gives_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap(), true);
        let loss = tape.sum(w).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data, vec![1.0; 3]);
    }

    #[test]
    fn backward_zero_scale_gives_zero_grad() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap(), true);
        let t = tape.tanh(w).unwrap();
        let s = tape.sum(t).unwrap();
        let loss = tape.scale(s, 0.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data, vec![0.0; 2]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_reuse() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2]), true);
        assert!(tape.backward(w).is_err());
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::zeros(&[2]), true);
        let loss = tape.sum(w).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::TapeConsumed)));
    }

    #[test]
    fn log_of_zero_is_trapped() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(&[1], vec![0.0]).unwrap());
        assert!(matches!(tape.log(x), Err(Error::NonFinite { .. })));
    }
}
