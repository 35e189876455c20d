//! Tape-based reverse-mode automatic differentiation over matrices.
//!
//! Every operation appends a node holding its value and the ids of its
//! inputs. [`Tape::backward`] walks the tape once in reverse, accumulating
//! adjoints, and returns the gradient of a scalar loss with respect to every
//! parameter leaf.

use crate::error::{Error, Result};
use crate::nn::params::{Gradients, ParamId, ParameterStore};
use crate::nn::tensor::{gemm, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSumExpRows(Var),
    SumCols(Var),
    MeanRows(Var),
    SumAll(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    RepeatRows(Var),
    Pick(Var, usize, usize),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Overflow-safe log Σ exp over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// A trainable leaf bound to a parameter of `store`.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let v = gemm(self.value(a), false, self.value(b), false);
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// a · bᵀ
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(Error::Shape(format!("matmul_t {sa:?} x {sb:?}ᵀ")));
        }
        let v = gemm(self.value(a), false, self.value(b), true);
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "div")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b)))
    }

    fn check_row(&self, a: Var, row: Var, what: &str) -> Result<()> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(Error::Shape(format!("{what}: {sa:?} with row {sr:?}")));
        }
        Ok(())
    }

    /// a + row, the 1×c row broadcast over every row of a.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row(a, row, "add_row")?;
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(&r) {
                *x += y;
            }
        }
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    /// a ⊙ row, broadcast over rows.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row(a, row, "mul_row")?;
        let mut v = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(&r) {
                *x *= y;
            }
        }
        Ok(self.push(v, Op::MulRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// log(1 + eˣ), evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for r in 0..x.rows() {
            let lse = log_sum_exp(x.row(r));
            for e in v.row_mut(r) {
                *e -= lse;
            }
        }
        self.push(v, Op::LogSoftmaxRows(a))
    }

    /// n×c → n×1 row-wise log Σ exp.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| log_sum_exp(x.row(r))).collect();
        let v = Matrix::from_vec(x.rows(), 1, data).expect("shape");
        self.push(v, Op::LogSumExpRows(a))
    }

    /// n×c → n×1 row sums.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let v = Matrix::from_vec(x.rows(), 1, data).expect("shape");
        self.push(v, Op::SumCols(a))
    }

    /// n×c → 1×c column means; zeros when n = 0.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for (o, v) in out.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        if x.rows() > 0 {
            let n = x.rows() as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        self.push(Matrix::row_vector(out), Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Row-wise standardization (x − mean) / sqrt(var + eps), no affine part.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let c = x.cols() as f64;
        let mut v = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = v.row_mut(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / c;
            let is = 1.0 / (var + eps).sqrt();
            for e in row.iter_mut() {
                *e = (*e - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(v, Op::LayerNorm { x: a, inv_std })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|p| self.shape(*p).0).unwrap_or(0);
        if parts.iter().any(|p| self.shape(*p).0 != rows) {
            return Err(Error::Shape("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                v.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns start..end.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start > end || end > cols {
            return Err(Error::Shape(format!(
                "slice {start}..{end} of {cols} columns"
            )));
        }
        let x = self.value(a);
        let mut v = Matrix::zeros(rows, end - start);
        for r in 0..rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    /// 1×c → n×c.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if rows != 1 {
            return Err(Error::Shape(format!("repeat_rows of a {rows}-row matrix")));
        }
        let src = self.value(a).data().to_vec();
        let mut v = Matrix::zeros(n, cols);
        for r in 0..n {
            v.row_mut(r).copy_from_slice(&src);
        }
        Ok(self.push(v, Op::RepeatRows(a)))
    }

    /// The single entry (r, c) as a 1×1 matrix.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if r >= rows || c >= cols {
            return Err(Error::Shape(format!("pick ({r},{c}) of {rows}x{cols}")));
        }
        let v = Matrix::scalar(self.value(a).get(r, c));
        Ok(self.push(v, Op::Pick(a, r, c)))
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf,
    /// accumulated into a [`Gradients`] shaped like `store`.
    pub fn backward(&self, loss: Var, store: &ParameterStore) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));
        let mut grads = Gradients::zeros_like(store);

        fn acc(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut adj[v.0] {
                Some(m) => m.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            let y = &node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => grads.accumulate(*p, &g),
                Op::MatMul(a, b) => {
                    let da = gemm(&g, false, self.value(*b), true);
                    let db = gemm(self.value(*a), true, &g, false);
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::MatMulT(a, b) => {
                    let da = gemm(&g, false, self.value(*b), false);
                    let db = gemm(&g, true, self.value(*a), false);
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.map(|x| -x));
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    let da = g.zip_map(bv, |x, y| x / y);
                    // d(a/b)/db = −(a/b)/b = −y/b
                    let db = g.zip_map(y, |x, q| x * q).zip_map(bv, |x, y| -x / y);
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::AddRow(a, row) => {
                    let mut dr = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (d, x) in dr.iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    acc(&mut adj, *row, Matrix::row_vector(dr));
                    acc(&mut adj, *a, g);
                }
                Op::MulRow(a, row) => {
                    let av = self.value(*a);
                    let rv = self.value(*row).data();
                    let mut dr = vec![0.0; g.cols()];
                    let mut da = g.clone();
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            dr[c] += g.get(r, c) * av.get(r, c);
                            da.row_mut(r)[c] *= rv[c];
                        }
                    }
                    acc(&mut adj, *row, Matrix::row_vector(dr));
                    acc(&mut adj, *a, da);
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.map(|x| x * s)),
                Op::AddScalar(a) => acc(&mut adj, *a, g),
                Op::Relu(a) => {
                    let d = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    acc(&mut adj, *a, d);
                }
                Op::Softplus(a) => {
                    let d = g.zip_map(self.value(*a), |x, v| x * sigmoid(v));
                    acc(&mut adj, *a, d);
                }
                Op::Exp(a) => acc(&mut adj, *a, g.zip_map(y, |x, e| x * e)),
                Op::Log(a) => {
                    let d = g.zip_map(self.value(*a), |x, v| x / v);
                    acc(&mut adj, *a, d);
                }
                Op::Square(a) => {
                    let d = g.zip_map(self.value(*a), |x, v| 2.0 * x * v);
                    acc(&mut adj, *a, d);
                }
                Op::SoftmaxRows(a) => {
                    let mut d = g.clone();
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                        for (c, e) in d.row_mut(r).iter_mut().enumerate() {
                            *e = y.get(r, c) * (g.get(r, c) - dot);
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut d = g.clone();
                    for r in 0..g.rows() {
                        let s: f64 = g.row(r).iter().sum();
                        for (c, e) in d.row_mut(r).iter_mut().enumerate() {
                            *e = g.get(r, c) - y.get(r, c).exp() * s;
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::LogSumExpRows(a) => {
                    let sm = softmax_rows(self.value(*a));
                    let mut d = sm;
                    for r in 0..d.rows() {
                        let gr = g.get(r, 0);
                        for e in d.row_mut(r) {
                            *e *= gr;
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::SumCols(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let gr = g.get(r, 0);
                        d.row_mut(r).iter_mut().for_each(|e| *e = gr);
                    }
                    acc(&mut adj, *a, d);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Matrix::zeros(rows, cols);
                    if rows > 0 {
                        let n = rows as f64;
                        for r in 0..rows {
                            for (e, x) in d.row_mut(r).iter_mut().zip(g.data()) {
                                *e = x / n;
                            }
                        }
                    }
                    acc(&mut adj, *a, d);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut adj, *a, Matrix::filled(rows, cols, g.item()));
                }
                Op::LayerNorm { x, inv_std } => {
                    let c = y.cols() as f64;
                    let mut d = g.clone();
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gr.iter().sum::<f64>() / c;
                        let mean_gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / c;
                        for (k, e) in d.row_mut(r).iter_mut().enumerate() {
                            *e = inv_std[r] * (gr[k] - mean_g - yr[k] * mean_gy);
                        }
                    }
                    acc(&mut adj, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (rows, cols) = self.shape(*p);
                        let mut d = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut adj, *p, d);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut adj, *a, d);
                }
                Op::RepeatRows(a) => {
                    let mut d = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (e, x) in d.iter_mut().zip(g.row(r)) {
                            *e += x;
                        }
                    }
                    acc(&mut adj, *a, Matrix::row_vector(d));
                }
                Op::Pick(a, r, c) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Matrix::zeros(rows, cols);
                    d.row_mut(*r)[*c] = g.item();
                    acc(&mut adj, *a, d);
                }
            }
        }
        Ok(grads)
    }
}
