//! Reverse-mode differentiation over a recorded computation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Parameters are referenced from a borrowed [`ParamStore`] rather than
//! copied, so building a fresh graph per episode is cheap even at full model
//! size. [`Graph::backward`] walks the nodes in reverse creation order, which
//! is a valid topological order by construction.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::num::{ParamId, ParamStore, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Constant,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    MatVec { a: Var, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice { a: Var, start: usize },
    ColSlice { a: Var, start: usize },
    Row { a: Var, row: usize },
    Stack(Vec<Var>),
    ConcatRows(Vec<Var>),
    Gather { table: Var, ids: Vec<usize> },
    MeanRows(Var),
    Sum(Var),
    Pick { a: Var, entry: usize },
}

struct Node {
    op: Op,
    value: Option<Tensor>,
    needs_grad: bool,
}

/// Recorded computation with forward values.
pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

/// Result of [`Graph::backward`]: gradients per node and per parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a node, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for a parameter summed over every node that read it.
    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(id.0).and_then(|g| g.as_deref())
    }
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph<'static> {
    /// A graph with no parameter store; inputs and constants only.
    pub fn new() -> Self {
        Graph {
            params: None,
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }
}

fn check_finite(op: &str, values: &[f64]) -> Result<()> {
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{op} (value {bad})")));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn with_params(params: &'p ParamStore) -> Self {
        Graph {
            params: Some(params),
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (_, Some(t)) => t,
            (Op::Param(id), None) => self
                .params
                .expect("param node without store")
                .get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: &str, kind: Op, value: Tensor, needs_grad: bool) -> Result<Var> {
        check_finite(op, value.values())?;
        self.nodes.push(Node {
            op: kind,
            value: Some(value),
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Differentiable leaf; its gradient is reported by [`Gradients::wrt`].
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push("input", Op::Input, t, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push("constant", Op::Constant, t, false)
    }

    /// Binds a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(v) = self.bound.get(&id) {
            return Ok(*v);
        }
        let store = self
            .params
            .ok_or_else(|| Error::invalid("graph has no parameter store"))?;
        if id.0 >= store.len() {
            return Err(Error::Index {
                index: id.0,
                len: store.len(),
            });
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(id, v);
        Ok(v)
    }

    /// `x · w + b` for `x` of shape `[in]` or `[n, in]` and `w` of shape `[in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if ws.len() != 2 {
            return Err(Error::shape(format!("linear weight must be rank 2, got {ws:?}")));
        }
        let (inp, out) = (ws[0], ws[1]);
        let (rows, out_shape) = match xs.as_slice() {
            [n] if *n == inp => (1, vec![out]),
            [r, n] if *n == inp => (*r, vec![*r, out]),
            _ => {
                return Err(Error::shape(format!(
                    "linear input {xs:?} incompatible with weight {ws:?}"
                )))
            }
        };
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(Error::shape(format!(
                    "linear bias {:?} incompatible with output width {out}",
                    self.shape(b)
                )));
            }
        }
        let xv = self.value(x).values();
        let wv = self.value(w).values();
        let mut y = vec![0.0; rows * out];
        for r in 0..rows {
            let yr = &mut y[r * out..(r + 1) * out];
            if let Some(b) = b {
                yr.copy_from_slice(self.value(b).values());
            }
            for (i, &xi) in xv[r * inp..(r + 1) * inp].iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wrow = &wv[i * out..(i + 1) * out];
                for (yj, wj) in yr.iter_mut().zip(wrow) {
                    *yj += xi * wj;
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            "linear",
            Op::Linear { x, w, b },
            Tensor::from_parts(out_shape, y),
            needs,
        )
    }

    /// `a · x` for `a` of shape `[m, n]` and `x` of shape `[n]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var> {
        let (as_, xs) = (self.shape(a).to_vec(), self.shape(x).to_vec());
        let (m, n) = match (as_.as_slice(), xs.as_slice()) {
            ([m, n], [k]) if n == k => (*m, *n),
            _ => {
                return Err(Error::shape(format!(
                    "matvec of {as_:?} with {xs:?}"
                )))
            }
        };
        let av = self.value(a).values();
        let xv = self.value(x).values();
        let y: Vec<f64> = (0..m)
            .map(|i| av[i * n..(i + 1) * n].iter().zip(xv).map(|(p, q)| p * q).sum())
            .collect();
        let needs = self.needs(a) || self.needs(x);
        self.push("matvec", Op::MatVec { a, x }, Tensor::from_parts(vec![m], y), needs)
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: &str, kind: Op, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let values = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(p, q)| f(*p, *q))
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a) || self.needs(b);
        self.push(op, kind, Tensor::from_parts(shape, values), needs)
    }

    fn map(&mut self, op: &str, kind: Op, a: Var, f: impl Fn(f64) -> f64) -> Result<Var> {
        let values = self.value(a).values().iter().map(|v| f(*v)).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(a);
        self.push(op, kind, Tensor::from_parts(shape, values), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", Op::Add(a, b), a, b, |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", Op::Sub(a, b), a, b, |p, q| p - q)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", Op::Mul(a, b), a, b, |p, q| p * q)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", Op::Scale(a, c), a, |v| v * c)
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("offset", Op::Offset(a), a, |v| v + c)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", Op::Sigmoid(a), a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", Op::Tanh(a), a, f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map("exp", Op::Exp(a), a, f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.map("ln", Op::Ln(a), a, f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map("square", Op::Square(a), a, |v| v * v)
    }

    /// Softmax of a vector, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).rank() != 1 || self.value(a).is_empty() {
            return Err(Error::shape(format!(
                "softmax needs a non-empty vector, got {:?}",
                self.shape(a)
            )));
        }
        let y = softmax_values(self.value(a).values());
        let needs = self.needs(a);
        let n = y.len();
        self.push("softmax", Op::Softmax(a), Tensor::from_parts(vec![n], y), needs)
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of nothing"));
        }
        let mut values = Vec::new();
        for &p in parts {
            if self.value(p).rank() != 1 {
                return Err(Error::shape(format!("concat part {:?} is not a vector", self.shape(p))));
            }
            values.extend_from_slice(self.value(p).values());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        let n = values.len();
        self.push("concat", Op::Concat(parts.to_vec()), Tensor::from_parts(vec![n], values), needs)
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 || start + len > t.len() {
            return Err(Error::shape(format!(
                "slice {start}..{} of {:?}",
                start + len,
                t.shape()
            )));
        }
        let values = t.values()[start..start + len].to_vec();
        let needs = self.needs(a);
        self.push("slice", Op::Slice { a, start }, Tensor::from_parts(vec![len], values), needs)
    }

    /// Columns `start..start + len` of a matrix.
    pub fn col_slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = match t.shape() {
            [r, c] if start + len <= *c => (*r, *c),
            s => return Err(Error::shape(format!("col_slice {start}..{} of {s:?}", start + len))),
        };
        let values: Vec<f64> = (0..rows)
            .flat_map(|r| t.values()[r * cols + start..r * cols + start + len].iter().copied())
            .collect();
        let needs = self.needs(a);
        self.push(
            "col_slice",
            Op::ColSlice { a, start },
            Tensor::from_parts(vec![rows, len], values),
            needs,
        )
    }

    /// Row `row` of a matrix as a vector.
    pub fn row(&mut self, a: Var, row: usize) -> Result<Var> {
        let values = self.value(a).row(row)?.to_vec();
        let needs = self.needs(a);
        let n = values.len();
        self.push("row", Op::Row { a, row }, Tensor::from_parts(vec![n], values), needs)
    }

    /// Stacks equal-length vectors into a matrix, one per row.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::shape("stack of nothing"));
        };
        let width = self.value(first).len();
        let mut values = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != width {
                return Err(Error::shape(format!("stack row {:?} vs width {width}", t.shape())));
            }
            values.extend_from_slice(t.values());
        }
        let needs = rows.iter().any(|&r| self.needs(r));
        self.push(
            "stack",
            Op::Stack(rows.to_vec()),
            Tensor::from_parts(vec![rows.len(), width], values),
            needs,
        )
    }

    /// Concatenates matrices with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows of nothing"));
        };
        let cols = match self.shape(first) {
            [_, c] => *c,
            s => return Err(Error::shape(format!("concat_rows part {s:?} is not a matrix"))),
        };
        let mut rows = 0;
        let mut values = Vec::new();
        for &p in parts {
            match self.shape(p) {
                [r, c] if *c == cols => rows += r,
                s => return Err(Error::shape(format!("concat_rows part {s:?} vs {cols} columns"))),
            }
            values.extend_from_slice(self.value(p).values());
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            "concat_rows",
            Op::ConcatRows(parts.to_vec()),
            Tensor::from_parts(vec![rows, cols], values),
            needs,
        )
    }

    /// Looks up rows of an embedding table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (n, width) = match t.shape() {
            [n, w] => (*n, *w),
            s => return Err(Error::shape(format!("gather_rows table {s:?} is not a matrix"))),
        };
        if ids.is_empty() {
            return Err(Error::shape("gather_rows with no ids"));
        }
        let mut values = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            if id >= n {
                return Err(Error::Index { index: id, len: n });
            }
            values.extend_from_slice(&t.values()[id * width..(id + 1) * width]);
        }
        let needs = self.needs(table);
        self.push(
            "gather_rows",
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            Tensor::from_parts(vec![ids.len(), width], values),
            needs,
        )
    }

    /// Mean over the rows of a matrix.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = match t.shape() {
            [r, c] if *r > 0 => (*r, *c),
            s => return Err(Error::shape(format!("mean_rows of {s:?}"))),
        };
        let mut values = vec![0.0; cols];
        for r in 0..rows {
            for (acc, v) in values.iter_mut().zip(&t.values()[r * cols..(r + 1) * cols]) {
                *acc += v;
            }
        }
        values.iter_mut().for_each(|v| *v /= rows as f64);
        let needs = self.needs(a);
        self.push("mean_rows", Op::MeanRows(a), Tensor::from_parts(vec![cols], values), needs)
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        let needs = self.needs(a);
        self.push("sum", Op::Sum(a), Tensor::from_parts(vec![], vec![s]), needs)
    }

    /// One entry (flat index) as a scalar.
    pub fn pick(&mut self, a: Var, entry: usize) -> Result<Var> {
        let t = self.value(a);
        if entry >= t.len() {
            return Err(Error::Index {
                index: entry,
                len: t.len(),
            });
        }
        let v = t.values()[entry];
        let needs = self.needs(a);
        self.push("pick", Op::Pick { a, entry }, Tensor::from_parts(vec![], vec![v]), needs)
    }

    /// Reverse-mode accumulation from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.rank() != 0 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut params = vec![None; self.params.map_or(0, ParamStore::len)];
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads[i]) {
                params[id.0] = Some(g.clone());
            }
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if let Some(g) = g {
                check_finite(&format!("backward (node {i})"), g)?;
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let n = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[i].value.as_ref();
        match &self.nodes[i].op {
            Op::Input | Op::Constant | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x).values(), self.value(*w).values());
                let ws = self.shape(*w);
                let (inp, outw) = (ws[0], ws[1]);
                let rows = xv.len() / inp;
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..rows {
                        let gr = &g[r * outw..(r + 1) * outw];
                        for (ii, gxi) in gx[r * inp..(r + 1) * inp].iter_mut().enumerate() {
                            let wrow = &wv[ii * outw..(ii + 1) * outw];
                            *gxi += wrow.iter().zip(gr).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                }
                if let Some(gw) = self.acc(grads, *w) {
                    for r in 0..rows {
                        let gr = &g[r * outw..(r + 1) * outw];
                        for (ii, &xi) in xv[r * inp..(r + 1) * inp].iter().enumerate() {
                            if xi == 0.0 {
                                continue;
                            }
                            for (gwj, gj) in gw[ii * outw..(ii + 1) * outw].iter_mut().zip(gr) {
                                *gwj += xi * gj;
                            }
                        }
                    }
                }
                if let Some(b) = b {
                    if let Some(gb) = self.acc(grads, *b) {
                        for r in 0..rows {
                            for (gbj, gj) in gb.iter_mut().zip(&g[r * outw..(r + 1) * outw]) {
                                *gbj += gj;
                            }
                        }
                    }
                }
            }
            Op::MatVec { a, x } => {
                let (av, xv) = (self.value(*a).values(), self.value(*x).values());
                let n = xv.len();
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, gr) in g.iter().enumerate() {
                        for (gaj, xj) in ga[r * n..(r + 1) * n].iter_mut().zip(xv) {
                            *gaj += gr * xj;
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, gr) in g.iter().enumerate() {
                        for (gxj, aj) in gx.iter_mut().zip(&av[r * n..(r + 1) * n]) {
                            *gxj += gr * aj;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        gv.iter_mut().zip(g).for_each(|(p, q)| *p += q);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(p, q)| *p += q);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(p, q)| *p -= q);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((p, q), r) in ga.iter_mut().zip(g).zip(bv) {
                        *p += q * r;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((p, q), r) in gb.iter_mut().zip(g).zip(av) {
                        *p += q * r;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(p, q)| *p += c * q);
                }
            }
            Op::Offset(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(p, q)| *p += q);
                }
            }
            Op::Sigmoid(a) | Op::Tanh(a) | Op::Exp(a) => {
                let y = out.expect("value").values();
                let op = &self.nodes[i].op;
                if let Some(ga) = self.acc(grads, *a) {
                    for ((p, q), yv) in ga.iter_mut().zip(g).zip(y) {
                        let d = match op {
                            Op::Sigmoid(_) => yv * (1.0 - yv),
                            Op::Tanh(_) => 1.0 - yv * yv,
                            _ => *yv,
                        };
                        *p += q * d;
                    }
                }
            }
            Op::Ln(a) => {
                let av = self.value(*a).values();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((p, q), x) in ga.iter_mut().zip(g).zip(av) {
                        *p += q / x;
                    }
                }
            }
            Op::Square(a) => {
                let av = self.value(*a).values();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((p, q), x) in ga.iter_mut().zip(g).zip(av) {
                        *p += 2.0 * x * q;
                    }
                }
            }
            Op::Softmax(a) => {
                let y = out.expect("value").values();
                let dot: f64 = y.iter().zip(g).map(|(p, q)| p * q).sum();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((p, q), yv) in ga.iter_mut().zip(g).zip(y) {
                        *p += yv * (q - dot);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &part in parts {
                    let n = self.value(part).len();
                    if let Some(gp) = self.acc(grads, part) {
                        gp.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(p, q)| *p += q);
                    }
                    offset += n;
                }
            }
            Op::Slice { a, start } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga[*start..*start + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(p, q)| *p += q);
                }
            }
            Op::ColSlice { a, start } => {
                let cols = self.shape(*a)[1];
                let len = out.expect("value").shape()[1];
                if let Some(ga) = self.acc(grads, *a) {
                    for (r, gr) in g.chunks(len).enumerate() {
                        ga[r * cols + start..r * cols + start + len]
                            .iter_mut()
                            .zip(gr)
                            .for_each(|(p, q)| *p += q);
                    }
                }
            }
            Op::Row { a, row } => {
                let cols = g.len();
                if let Some(ga) = self.acc(grads, *a) {
                    ga[row * cols..(row + 1) * cols]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(p, q)| *p += q);
                }
            }
            Op::Stack(parts) | Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &part in parts {
                    let n = self.value(part).len();
                    if let Some(gp) = self.acc(grads, part) {
                        gp.iter_mut()
                            .zip(&g[offset..offset + n])
                            .for_each(|(p, q)| *p += q);
                    }
                    offset += n;
                }
            }
            Op::Gather { table, ids } => {
                let width = self.shape(*table)[1];
                if let Some(gt) = self.acc(grads, *table) {
                    for (k, &id) in ids.iter().enumerate() {
                        gt[id * width..(id + 1) * width]
                            .iter_mut()
                            .zip(&g[k * width..(k + 1) * width])
                            .for_each(|(p, q)| *p += q);
                    }
                }
            }
            Op::MeanRows(a) => {
                let rows = self.shape(*a)[0];
                let cols = g.len();
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..rows {
                        ga[r * cols..(r + 1) * cols]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(p, q)| *p += q / rows as f64);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().for_each(|p| *p += g[0]);
                }
            }
            Op::Pick { a, entry } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga[*entry] += g[0];
                }
            }
        }
    }
}

/// Numerically stable softmax on a slice.
pub fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
