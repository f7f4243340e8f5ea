//! Dynamically recorded reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly and appends a node holding its value and
//! the indices of its inputs. Inputs always precede their consumers, so a
//! single reverse sweep over the node list is a valid topological order.

use std::collections::HashMap;

use super::store::ParameterStore;
use super::tensor::{self, dot_raw, Tensor};
use super::{shape_err, NumericError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec { w: Var, x: Var },
    Linear { w: Var, x: Var, b: Var },
    ColumnBlock { w: Var, start: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    WeightedSum { xs: Vec<Var>, weights: Var },
    Dot(Var, Var),
    LeakyRelu(Var, f64),
    Softmax(Var),
    NormalizeSum(Var),
    SoftmaxNll { scores: Var, target: usize },
    SqNorm(Var),
    Exp(Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Operation tape for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    param_order: Vec<(Var, String)>,
    first_non_finite: Option<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Description of the first node that produced a NaN or infinity.
    /// Only tracked in debug builds.
    pub fn first_non_finite(&self) -> Option<String> {
        self.first_non_finite
            .map(|i| format!("node {i} ({:?})", self.nodes[i].op))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        if cfg!(debug_assertions) && self.first_non_finite.is_none() && !value.all_finite() {
            self.first_non_finite = Some(self.nodes.len());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Places a stored parameter on the tape. Repeated calls with the same
    /// name return the same handle, so shared parameters accumulate a single
    /// gradient.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var, NumericError> {
        if let Some(v) = self.params.get(name) {
            return Ok(*v);
        }
        let value = store
            .value(name)
            .ok_or_else(|| NumericError::UnknownParameter(name.to_string()))?
            .clone();
        let v = self.push(value, Op::Leaf);
        self.params.insert(name.to_string(), v);
        self.param_order.push((v, name.to_string()));
        Ok(v)
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, NumericError> {
        let out = tensor::linear(self.value(x), self.value(w), None)?;
        Ok(self.push(out, Op::MatVec { w, x }))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericError> {
        let out = tensor::linear(self.value(x), self.value(w), Some(self.value(b)))?;
        Ok(self.push(out, Op::Linear { w, x, b }))
    }

    /// Columns `start..start + width` of a rank-2 tensor.
    pub fn column_block(&mut self, w: Var, start: usize, width: usize) -> Result<Var, NumericError> {
        let wt = self.value(w);
        let (rows, cols) = wt
            .dims2()
            .ok_or_else(|| shape_err("column_block", "expected a matrix"))?;
        if start + width > cols {
            return Err(shape_err(
                "column_block",
                format!("columns {start}..{} of a {rows}x{cols} matrix", start + width),
            ));
        }
        let mut out = Vec::with_capacity(rows * width);
        for row in wt.data().chunks_exact(cols) {
            out.extend_from_slice(&row[start..start + width]);
        }
        let out = Tensor::matrix(rows, width, out)?;
        Ok(self.push(out, Op::ColumnBlock { w, start }))
    }

    fn same_len(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericError> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        if la == lb {
            Ok(())
        } else {
            Err(shape_err(op, format!("lengths {la} and {lb}")))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_len("add", a, b)?;
        let va = self.value(a);
        let out: Vec<f64> = va.data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(va.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.same_len("sub", a, b)?;
        let va = self.value(a);
        let out: Vec<f64> = va.data().iter().zip(self.value(b).data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(va.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let va = self.value(a);
        let out =
            Tensor::new(va.shape().to_vec(), va.data().iter().map(|x| x * factor).collect()).expect("shape preserved");
        self.push(out, Op::Scale(a, factor))
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        let refs: Vec<&Tensor> = xs.iter().map(|v| self.value(*v)).collect();
        let out = tensor::concat(&refs)?;
        Ok(self.push(out, Op::Concat(xs.to_vec())))
    }

    pub fn weighted_sum(&mut self, xs: &[Var], weights: Var) -> Result<Var, NumericError> {
        let refs: Vec<&Tensor> = xs.iter().map(|v| self.value(*v)).collect();
        let out = tensor::weighted_sum(&refs, self.value(weights).data())?;
        Ok(self.push(
            out,
            Op::WeightedSum {
                xs: xs.to_vec(),
                weights,
            },
        ))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = tensor::dot(self.value(a), self.value(b))?;
        Ok(self.push(Tensor::scalar(out), Op::Dot(a, b)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = tensor::leaky_relu(self.value(a), slope);
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = Tensor::vector(tensor::softmax(self.value(a).data()));
        self.push(out, Op::Softmax(a))
    }

    /// Divides every entry by the entry sum.
    pub fn normalize_sum(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let total: f64 = va.data().iter().sum();
        let out = Tensor::vector(va.data().iter().map(|x| x / total).collect());
        self.push(out, Op::NormalizeSum(a))
    }

    pub fn softmax_nll(&mut self, scores: Var, target: usize) -> Result<Var, NumericError> {
        let out = tensor::softmax_nll(self.value(scores), target)?;
        Ok(self.push(Tensor::scalar(out), Op::SoftmaxNll { scores, target }))
    }

    pub fn sq_norm(&mut self, a: Var) -> Var {
        let d = self.value(a).data();
        let out = dot_raw(d, d);
        self.push(Tensor::scalar(out), Op::SqNorm(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out =
            Tensor::new(va.shape().to_vec(), va.data().iter().map(|x| x.exp()).collect()).expect("shape preserved");
        self.push(out, Op::Exp(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(out), Op::Sum(a))
    }

    /// Mean of a list of scalars.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var, NumericError> {
        if xs.is_empty() {
            return Err(shape_err("mean", "no inputs"));
        }
        let stacked = self.concat(xs)?;
        let total = self.sum(stacked);
        Ok(self.scale(total, 1.0 / xs.len() as f64))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        let n = output.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[output.0] = Some(vec![1.0; self.nodes[output.0].value.len()]);

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatVec { w, x } => self.back_matvec(&mut grads, *w, *x, &g),
                Op::Linear { w, x, b } => {
                    self.back_matvec(&mut grads, *w, *x, &g);
                    axpy(slot(&mut grads, &self.nodes, *b), 1.0, &g);
                }
                Op::ColumnBlock { w, start } => {
                    let (_, width) = node.value.dims2().expect("matrix");
                    let (_, cols) = self.value(*w).dims2().expect("matrix");
                    let gw = slot(&mut grads, &self.nodes, *w);
                    for (grow, src) in gw.chunks_exact_mut(cols).zip(g.chunks_exact(width)) {
                        for (d, s) in grow[*start..*start + width].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                Op::Add(a, b) => {
                    axpy(slot(&mut grads, &self.nodes, *a), 1.0, &g);
                    axpy(slot(&mut grads, &self.nodes, *b), 1.0, &g);
                }
                Op::Sub(a, b) => {
                    axpy(slot(&mut grads, &self.nodes, *a), 1.0, &g);
                    axpy(slot(&mut grads, &self.nodes, *b), -1.0, &g);
                }
                Op::Scale(a, f) => axpy(slot(&mut grads, &self.nodes, *a), *f, &g),
                Op::Concat(xs) => {
                    let mut offset = 0;
                    for x in xs {
                        let len = self.value(*x).len();
                        axpy(slot(&mut grads, &self.nodes, *x), 1.0, &g[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::WeightedSum { xs, weights } => {
                    let w = self.value(*weights).data().to_vec();
                    let mut gw = Vec::with_capacity(xs.len());
                    for (x, wi) in xs.iter().zip(&w) {
                        gw.push(dot_raw(self.value(*x).data(), &g));
                        axpy(slot(&mut grads, &self.nodes, *x), *wi, &g);
                    }
                    axpy(slot(&mut grads, &self.nodes, *weights), 1.0, &gw);
                }
                Op::Dot(a, b) => {
                    let s = g[0];
                    let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                    let vb = vb.to_vec();
                    axpy(slot(&mut grads, &self.nodes, *a), s, &vb);
                    axpy(slot(&mut grads, &self.nodes, *b), s, va);
                }
                Op::LeakyRelu(a, slope) => {
                    let va = self.value(*a).data();
                    let local: Vec<f64> = va
                        .iter()
                        .zip(&g)
                        .map(|(x, gi)| if *x >= 0.0 { *gi } else { slope * gi })
                        .collect();
                    axpy(slot(&mut grads, &self.nodes, *a), 1.0, &local);
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let gy = dot_raw(&g, y);
                    let local: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi * (gi - gy)).collect();
                    axpy(slot(&mut grads, &self.nodes, *a), 1.0, &local);
                }
                Op::NormalizeSum(a) => {
                    let x = self.value(*a).data();
                    let total: f64 = x.iter().sum();
                    let gx: f64 = dot_raw(&g, x);
                    let local: Vec<f64> = g.iter().map(|gi| gi / total - gx / (total * total)).collect();
                    axpy(slot(&mut grads, &self.nodes, *a), 1.0, &local);
                }
                Op::SoftmaxNll { scores, target } => {
                    let mut local = tensor::softmax(self.value(*scores).data());
                    local[*target] -= 1.0;
                    axpy(slot(&mut grads, &self.nodes, *scores), g[0], &local);
                }
                Op::SqNorm(a) => {
                    let va = self.value(*a).data().to_vec();
                    axpy(slot(&mut grads, &self.nodes, *a), 2.0 * g[0], &va);
                }
                Op::Exp(a) => {
                    let local: Vec<f64> = node.value.data().iter().zip(&g).map(|(y, gi)| y * gi).collect();
                    axpy(slot(&mut grads, &self.nodes, *a), 1.0, &local);
                }
                Op::Sum(a) => {
                    let gs = g[0];
                    for v in slot(&mut grads, &self.nodes, *a).iter_mut() {
                        *v += gs;
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn back_matvec(&self, grads: &mut [Option<Vec<f64>>], w: Var, x: Var, g: &[f64]) {
        let wt = self.value(w);
        let (rows, cols) = wt.dims2().expect("matrix");
        let xv = self.value(x).data();
        {
            let gw = slot(grads, &self.nodes, w);
            for (r, grow) in gw.chunks_exact_mut(cols).enumerate().take(rows) {
                let gr = g[r];
                if gr != 0.0 {
                    for (d, xi) in grow.iter_mut().zip(xv) {
                        *d += gr * xi;
                    }
                }
            }
        }
        let gx = slot(grads, &self.nodes, x);
        for (r, row) in wt.data().chunks_exact(cols).enumerate().take(rows) {
            let gr = g[r];
            if gr != 0.0 {
                for (d, wi) in gx.iter_mut().zip(row) {
                    *d += gr * wi;
                }
            }
        }
    }

    /// Adds `scale ×` the gradient of every trainable parameter on this tape
    /// into `store`. Frozen parameters are skipped.
    pub fn accumulate_into(&self, grads: &Gradients, store: &mut ParameterStore, scale: f64) {
        for (v, name) in &self.param_order {
            if store.is_frozen(name) {
                continue;
            }
            if let Some(g) = grads.get(*v) {
                store.accumulate_grad(name, g, scale);
            }
        }
    }

    pub fn parameter_vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.param_order.iter().map(|(v, n)| (n.as_str(), *v))
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> &'a mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, or `None` when `v` does
    /// not influence the output.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_scalar(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let eps = 1e-6;
        (f(x + eps) - f(x - eps)) / (2.0 * eps)
    }

    #[test]
    fn dot_gradient_is_other_operand() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let b = t.constant(Tensor::vector(vec![-1.0, 0.5, 4.0]));
        let y = t.dot(a, b).unwrap();
        let g = t.backward(y);
        assert_eq!(g.get(a).unwrap(), &[-1.0, 0.5, 4.0]);
        assert_eq!(g.get(b).unwrap(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn softmax_nll_gradient_matches_finite_difference() {
        let base = [0.3, -1.2, 2.0, 0.1];
        let mut t = Tape::new();
        let s = t.constant(Tensor::vector(base.to_vec()));
        let l = t.softmax_nll(s, 2).unwrap();
        let g = t.backward(l);
        for i in 0..base.len() {
            let numeric = fd_scalar(
                |v| {
                    let mut x = base.to_vec();
                    x[i] = v;
                    tensor::softmax_nll(&Tensor::vector(x), 2).unwrap()
                },
                base[i],
            );
            assert!((g.get(s).unwrap()[i] - numeric).abs() < 1e-8);
        }
    }

    #[test]
    fn unused_vars_have_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(2.0));
        let b = t.constant(Tensor::scalar(3.0));
        let y = t.scale(a, 4.0);
        let g = t.backward(y);
        assert_eq!(g.get(a).unwrap(), &[4.0]);
        assert!(g.get(b).is_none());
    }

    #[test]
    fn column_block_selects_columns() {
        let mut t = Tape::new();
        let w = t.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let blk = t.column_block(w, 1, 2).unwrap();
        assert_eq!(t.value(blk).data(), &[2.0, 3.0, 5.0, 6.0]);
        let s = t.sum(blk);
        let g = t.backward(s);
        assert_eq!(g.get(w).unwrap(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn shared_param_returns_same_handle() {
        let mut store = ParameterStore::new();
        store.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let mut t = Tape::new();
        let a = t.param(&store, "w").unwrap();
        let b = t.param(&store, "w").unwrap();
        assert_eq!(a, b);
        let y = t.dot(a, b).unwrap();
        let g = t.backward(y);
        t.accumulate_into(&g, &mut store, 1.0);
        assert_eq!(store.grad("w").unwrap().data(), &[2.0, 4.0]);
    }
}
