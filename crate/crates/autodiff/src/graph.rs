//! The computation graph: a tape of dense matrix nodes recorded in forward
//! order and walked backwards once to accumulate gradients.
//!
//! Every value is a 2-D `f64` matrix; vectors are `1 x n` rows and scalars
//! are `1 x 1`. Each forward op checks shapes and finiteness eagerly, so a
//! bad graph fails at the op that produced it rather than during backward.

use std::cmp::Ordering;
use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{shape_err, AutodiffError, Result};
use crate::params::{ParamId, ParamStore};

pub type Matrix = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    MeanRows(Var),
    BlockVecMat {
        stack: Var,
        blocks: Vec<usize>,
        x: Var,
    },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Concat(..) => "concat",
            Op::Gather(..) => "gather",
            Op::MeanRows(..) => "mean_rows",
            Op::BlockVecMat { .. } => "block_vecmat",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Square(..) => "square",
            Op::Clamp(..) => "clamp",
            Op::RowNorm(..) => "row_norm",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// A single-threaded tape. Build one per loss evaluation and drop it after
/// [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
}

fn check_finite(op: &'static str, m: &Matrix) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AutodiffError::NumericFault { op })
    }
}

fn dims(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Reads a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Result<Var> {
        check_finite(op.tag(), &value)?;
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b) => self.rg(*a) || self.rg(*b),
            Op::BlockVecMat { stack, x, .. } => self.rg(*stack) || self.rg(*x),
            Op::Concat(vs) => vs.iter().any(|v| self.rg(*v)),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Gather(a, _)
            | Op::MeanRows(a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Square(a)
            | Op::Clamp(a, ..)
            | Op::RowNorm(a)
            | Op::Sum(a)
            | Op::Mean(a) => self.rg(*a),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    /// A leaf that receives a gradient.
    pub fn input(&mut self, value: Matrix) -> Result<Var> {
        let v = self.push(value, Op::Leaf)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    /// Binds a stored parameter into the graph. Repeated calls for the same
    /// id return the same node. Frozen parameters are bound as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if let Some(v) = self.bound.get(&id) {
            return Ok(*v);
        }
        let v = if store.is_frozen(id) {
            self.constant(store.value(id).clone())?
        } else {
            self.input(store.value(id).clone())?
        };
        self.bound.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return shape_err("matmul", format!("{} . {}", dims(va), dims(vb)));
        }
        let out = va.dot(vb);
        self.push(out, Op::MatMul(a, b))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return shape_err(op, format!("{} vs {}", dims(va), dims(vb)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return shape_err("add_row", format!("{} + row {}", dims(va), dims(vr)));
        }
        let out = va + vr;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let out = self.value(a) / self.value(b);
        self.push(out, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a) + c;
        self.push(out, Op::AddScalar(a))
    }

    /// `1 - a`, used by gated updates.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return shape_err("concat", "no inputs");
        };
        let rows = self.value(*first).nrows();
        if let Some(bad) = parts.iter().find(|v| self.value(**v).nrows() != rows) {
            return shape_err(
                "concat",
                format!("{} rows vs {} rows", rows, self.value(*bad).nrows()),
            );
        }
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("row counts checked");
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Selects rows of `a` by index (embedding lookup). Indices may repeat.
    pub fn gather(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&i| i >= va.nrows()) {
            return Err(AutodiffError::Index {
                op: "gather",
                index: bad,
                len: va.nrows(),
            });
        }
        let out = va.select(Axis(0), rows);
        self.push(out, Op::Gather(a, rows.to_vec()))
    }

    /// Mean over rows, producing a `1 x n` row.
    ///
    /// Rows are summed in a canonical order (lexicographic on values), so the
    /// result is bit-identical under any permutation of the input rows.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.nrows() == 0 {
            return shape_err("mean_rows", "empty input");
        }
        let out = canonical_mean_rows(va);
        self.push(out, Op::MeanRows(a))
    }

    /// Row-wise product with a stack of square blocks: row `i` of the output
    /// is `x[i] . stack[blocks[i]]`, where `stack` is `(k*d) x d` holding `k`
    /// blocks of `d x d`.
    pub fn block_vecmat(&mut self, stack: Var, blocks: &[usize], x: Var) -> Result<Var> {
        let (vs, vx) = (self.value(stack), self.value(x));
        let d = vs.ncols();
        if d == 0 || vs.nrows() % d != 0 {
            return shape_err("block_vecmat", format!("stack {} is not square blocks", dims(vs)));
        }
        if vx.ncols() != d || vx.nrows() != blocks.len() {
            return shape_err(
                "block_vecmat",
                format!("x {} with {} blocks of width {}", dims(vx), blocks.len(), d),
            );
        }
        let k = vs.nrows() / d;
        if let Some(&bad) = blocks.iter().find(|&&b| b >= k) {
            return Err(AutodiffError::Index {
                op: "block_vecmat",
                index: bad,
                len: k,
            });
        }
        let mut out = Matrix::zeros((blocks.len(), d));
        for (i, &b) in blocks.iter().enumerate() {
            let block = vs.slice(s![b * d..(b + 1) * d, ..]);
            out.row_mut(i).assign(&vx.row(i).dot(&block));
        }
        self.push(
            out,
            Op::BlockVecMat {
                stack,
                blocks: blocks.to_vec(),
                x,
            },
        )
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(|v| v.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(f64::ln);
        self.push(out, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mapv(|v| v * v);
        self.push(out, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let out = self.value(a).mapv(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    /// Euclidean norm of every row, producing an `m x 1` column.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let out = va
            .map_axis(Axis(1), |r| r.dot(&r).sqrt())
            .insert_axis(Axis(1));
        self.push(out, Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.is_empty() {
            return shape_err("mean", "empty input");
        }
        let out = Matrix::from_elem((1, 1), va.sum() / va.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Inverted dropout. With `train == false` (or `rate == 0`) this is the
    /// identity and returns `a` itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !train || rate <= 0.0 {
            return Ok(a);
        }
        if rate >= 1.0 {
            return shape_err("dropout", format!("rate {rate} must be below 1"));
        }
        let keep = 1.0 / (1.0 - rate);
        let mask = self
            .value(a)
            .mapv(|_| if rng.random::<f64>() < rate { 0.0 } else { keep });
        let m = self.constant(mask)?;
        self.mul(a, m)
    }

    /// Reverse sweep from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::ones(self.value(root).dim()));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        check_grads(&grads)?;
        Ok(Gradients {
            grads,
            bound: self.bound.clone(),
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let mut acc = |v: Var, delta: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, g.dot(&vb.t()));
                }
                if self.rg(*b) {
                    acc(*b, va.t().dot(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                acc(*a, g * self.value(*b));
                acc(*b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                acc(*a, g / vb);
                let mut gb = g * va;
                Zip::from(&mut gb).and(vb).for_each(|x, &d| *x = -*x / (d * d));
                acc(*b, gb);
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Concat(parts) => {
                let mut col = 0;
                for v in parts {
                    let w = self.value(*v).ncols();
                    acc(*v, g.slice(s![.., col..col + w]).to_owned());
                    col += w;
                }
            }
            Op::Gather(a, rows) => {
                let mut ga = Matrix::zeros(self.value(*a).dim());
                for (i, &r) in rows.iter().enumerate() {
                    let mut dst = ga.row_mut(r);
                    dst += &g.row(i);
                }
                acc(*a, ga);
            }
            Op::MeanRows(a) => {
                let m = self.value(*a).nrows();
                let row = g / m as f64;
                let ga = row
                    .broadcast(self.value(*a).dim())
                    .expect("row broadcasts")
                    .to_owned();
                acc(*a, ga);
            }
            Op::BlockVecMat { stack, blocks, x } => {
                let (vs, vx) = (self.value(*stack), self.value(*x));
                let d = vs.ncols();
                if self.rg(*x) {
                    let mut gx = Matrix::zeros(vx.dim());
                    for (i, &b) in blocks.iter().enumerate() {
                        let block = vs.slice(s![b * d..(b + 1) * d, ..]);
                        gx.row_mut(i).assign(&block.dot(&g.row(i)));
                    }
                    acc(*x, gx);
                }
                if self.rg(*stack) {
                    let mut gs = Matrix::zeros(vs.dim());
                    for (i, &b) in blocks.iter().enumerate() {
                        let xi = vx.row(i);
                        let gi = g.row(i);
                        let mut block = gs.slice_mut(s![b * d..(b + 1) * d, ..]);
                        Zip::indexed(&mut block).for_each(|(r, c), v| *v += xi[r] * gi[c]);
                    }
                    acc(*stack, gs);
                }
            }
            Op::Relu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga)
                    .and(self.value(*a))
                    .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                acc(*a, ga);
            }
            Op::Tanh(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(y).for_each(|d, &t| *d *= 1.0 - t * t);
                acc(*a, ga);
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(y).for_each(|d, &s| *d *= s * (1.0 - s));
                acc(*a, ga);
            }
            Op::Exp(a) => acc(*a, g * y),
            Op::Ln(a) => acc(*a, g / self.value(*a)),
            Op::Square(a) => acc(*a, g * self.value(*a) * 2.0),
            Op::Clamp(a, lo, hi) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(self.value(*a)).for_each(|d, &x| {
                    if x <= *lo || x >= *hi {
                        *d = 0.0
                    }
                });
                acc(*a, ga);
            }
            Op::RowNorm(a) => {
                let va = self.value(*a);
                let mut ga = va.clone();
                for (i, mut row) in ga.rows_mut().into_iter().enumerate() {
                    let n = y[[i, 0]];
                    if n > 0.0 {
                        row *= g[[i, 0]] / n;
                    } else {
                        row.fill(0.0);
                    }
                }
                acc(*a, ga);
            }
            Op::Sum(a) => acc(*a, Matrix::from_elem(self.value(*a).dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let va = self.value(*a);
                acc(*a, Matrix::from_elem(va.dim(), g[[0, 0]] / va.len() as f64));
            }
        }
        Ok(())
    }
}

fn check_grads(grads: &[Option<Matrix>]) -> Result<()> {
    for g in grads.iter().flatten() {
        check_finite("backward", g)?;
    }
    Ok(())
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Mean of the rows of `m` summed in lexicographic row order.
pub fn canonical_mean_rows(m: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(&rows[i], &rows[j]));
    let mut out = Matrix::zeros((1, m.ncols()));
    for i in order {
        for (o, v) in out.iter_mut().zip(&rows[i]) {
            *o += v;
        }
    }
    out / rows.len() as f64
}

/// Gradients produced by one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    bound: HashMap<ParamId, Var>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of every bound, non-frozen parameter that the root depends
    /// on, ordered by parameter id.
    pub fn params(&self) -> Vec<(ParamId, &Matrix)> {
        let mut out: Vec<_> = self
            .bound
            .iter()
            .filter_map(|(id, v)| self.get(*v).map(|g| (*id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn relu_clips_negatives() {
        let mut g = Graph::new();
        let x = g.constant(array![[-1.0, 0.0, 2.0]]).unwrap();
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y), &array![[0.0, 0.0, 2.0]]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut g = Graph::new();
        let x = g.constant(array![[0.0]]).unwrap();
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.scalar(y), 0.5);
    }

    #[test]
    fn mean_of_identical_rows_is_that_row() {
        let mut g = Graph::new();
        let x = g
            .constant(array![[0.3, -1.5, 2.0], [0.3, -1.5, 2.0], [0.3, -1.5, 2.0]])
            .unwrap();
        let y = g.mean_rows(x).unwrap();
        assert_eq!(g.value(y), &array![[0.3, -1.5, 2.0]]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new();
        let x = g.input(array![[3.0]]).unwrap();
        let y = g.add(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap()[[0, 0]], 2.0);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let mut g = Graph::new();
        let a = g.constant(Matrix::zeros((2, 3))).unwrap();
        let b = g.constant(Matrix::zeros((2, 3))).unwrap();
        assert!(matches!(g.matmul(a, b), Err(AutodiffError::Shape { .. })));
        let c = g.constant(Matrix::zeros((3, 2))).unwrap();
        assert!(matches!(g.add(a, c), Err(AutodiffError::Shape { .. })));
    }

    #[test]
    fn non_finite_is_numeric_fault() {
        let mut g = Graph::new();
        let x = g.constant(array![[0.0]]).unwrap();
        assert!(matches!(
            g.ln(x),
            Err(AutodiffError::NumericFault { op: "ln" })
        ));
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut g = Graph::new();
        let mut rng = rand::rng();
        let x = g.input(array![[1.0, 2.0]]).unwrap();
        let y = g.dropout(x, 0.3, false, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_train_mode_scales_survivors() {
        let mut g = Graph::new();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let x = g.constant(Matrix::ones((1, 1000))).unwrap();
        let y = g.dropout(x, 0.3, true, &mut rng).unwrap();
        let kept = g.value(y).iter().filter(|v| **v > 0.0).count();
        assert!((600..800).contains(&kept), "{kept}");
        assert!(g
            .value(y)
            .iter()
            .all(|v| *v == 0.0 || (*v - 1.0 / 0.7).abs() < 1e-12));
    }

    #[test]
    fn canonical_mean_ignores_row_order() {
        let a = array![[1e16, 1.0], [1.0, -3.0], [-1e16, 0.5]];
        let b = array![[-1e16, 0.5], [1e16, 1.0], [1.0, -3.0]];
        assert_eq!(canonical_mean_rows(&a), canonical_mean_rows(&b));
    }

    #[test]
    fn row_norm_gradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.input(Matrix::zeros((1, 3))).unwrap();
        let n = g.row_norm(x).unwrap();
        let grads = g.backward(n).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Matrix::zeros((1, 3)));
    }
}
