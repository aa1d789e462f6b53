use crate::error::{NnError, Result};
use crate::tensor::{gemm_acc, Tensor};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Handle to a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    SumCols(Var),
    MeanAll(Var),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    Log1mTanh2(Var),
    GaussPair { x: Var, mean: Var, log_std: Var },
    LseRows(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
/// already topologically sorted.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every tracked node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not reach the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape {
        op,
        detail: format!("{:?} vs {:?}", a.shape(), b.shape()),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Stable `log(1 - tanh(x)^2)`.
pub fn log1m_tanh2(x: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - x - softplus(-2.0 * x))
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Differentiable input (a parameter).
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let tracked = self.tracked(a);
        self.push(value, op, tracked)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let value = self.value(a).zip_map(self.value(b), f);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, op, tracked))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let value = ta.matmul(tb);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a, b), tracked))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let value = Tensor::from_fn(ta.rows(), ta.cols(), |i, j| ta.get(i, j) + tb.get(0, j));
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::AddRow(a, b), tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("min", a, b, f64::min, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn log1m_tanh2(&mut self, a: Var) -> Var {
        self.unary(a, log1m_tanh2, Op::Log1mTanh2(a))
    }

    /// Row sums: `B x n -> B x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |i, _| t.row(i).iter().sum());
        let tracked = self.tracked(a);
        self.push(value, Op::SumCols(a), tracked)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let tracked = self.tracked(a);
        self.push(value, Op::MeanAll(a), tracked)
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start > end || end > t.cols() {
            return Err(NnError::Shape {
                op: "slice_cols",
                detail: format!("{start}..{end} of {} columns", t.cols()),
            });
        }
        let value = Tensor::from_fn(t.rows(), end - start, |i, j| t.get(i, start + j));
        let tracked = self.tracked(a);
        Ok(self.push(value, Op::SliceCols(a, start), tracked))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(shape_err("concat_cols", ta, tb));
        }
        let value = ta.hcat(tb);
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::ConcatCols(a, b), tracked))
    }

    /// Pairwise diagonal-Gaussian log-densities. `x` is `B x d`, `mean` and
    /// `log_std` are `N x d`; the result is `B x N` with entry `(b, n)` equal to
    /// `log N(x_b; mean_n, diag(exp(log_std_n))^2)`.
    pub fn gauss_pair(&mut self, x: Var, mean: Var, log_std: Var) -> Result<Var> {
        let (tx, tm, ts) = (self.value(x), self.value(mean), self.value(log_std));
        if tm.shape() != ts.shape() {
            return Err(shape_err("gauss_pair", tm, ts));
        }
        if tx.cols() != tm.cols() {
            return Err(shape_err("gauss_pair", tx, tm));
        }
        let d = tx.cols();
        let mut value = Tensor::zeros(tx.rows(), tm.rows());
        for n in 0..tm.rows() {
            let (mu, ls) = (tm.row(n), ts.row(n));
            let norm: f64 = ls.iter().sum::<f64>() + d as f64 * HALF_LN_2PI;
            for b in 0..tx.rows() {
                let xb = tx.row(b);
                let mut q = 0.0;
                for j in 0..d {
                    let z = (xb[j] - mu[j]) * (-ls[j]).exp();
                    q += z * z;
                }
                value.set(b, n, -0.5 * q - norm);
            }
        }
        let tracked = self.tracked(x) || self.tracked(mean) || self.tracked(log_std);
        Ok(self.push(value, Op::GaussPair { x, mean, log_std }, tracked))
    }

    /// Row-wise log-sum-exp: `B x n -> B x 1`.
    pub fn lse_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::from_fn(t.rows(), 1, |i, _| lse(t.row(i)));
        let tracked = self.tracked(a);
        self.push(value, Op::LseRows(a), tracked)
    }

    /// Reverse pass from a `1 x 1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.shape() != (1, 1) {
            return Err(NnError::NonScalarLoss {
                rows: lt.rows(),
                cols: lt.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[idx].value;
        let acc = |v: Var, delta: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.tracked(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot => *slot = Some(delta),
            }
        };
        match self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.tracked(a) {
                    let ga = grads[a.0].get_or_insert_with(|| {
                        let t = self.value(a);
                        Tensor::zeros(t.rows(), t.cols())
                    });
                    gemm_acc(g, false, self.value(b), true, ga);
                }
                if self.tracked(b) {
                    let gb = grads[b.0].get_or_insert_with(|| {
                        let t = self.value(b);
                        Tensor::zeros(t.rows(), t.cols())
                    });
                    gemm_acc(self.value(a), true, g, false, gb);
                }
            }
            Op::AddRow(a, b) => {
                acc(a, g.clone(), grads);
                if self.tracked(b) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (s, x) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *s += x;
                        }
                    }
                    acc(b, gb, grads);
                }
            }
            Op::Add(a, b) => {
                acc(a, g.clone(), grads);
                acc(b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                acc(a, g.clone(), grads);
                acc(b, g.map(|x| -x), grads);
            }
            Op::Mul(a, b) => {
                acc(a, g.zip_map(self.value(b), |x, y| x * y), grads);
                acc(b, g.zip_map(self.value(a), |x, y| x * y), grads);
            }
            Op::Scale(a, c) => acc(a, g.map(|x| c * x), grads),
            Op::AddScalar(a) => acc(a, g.clone(), grads),
            Op::Relu(a) => acc(
                a,
                g.zip_map(self.value(a), |gi, x| if x > 0.0 { gi } else { 0.0 }),
                grads,
            ),
            Op::Tanh(a) => acc(a, g.zip_map(out, |gi, y| gi * (1.0 - y * y)), grads),
            Op::Exp(a) => acc(a, g.zip_map(out, |gi, y| gi * y), grads),
            Op::Square(a) => acc(a, g.zip_map(self.value(a), |gi, x| 2.0 * x * gi), grads),
            Op::Softplus(a) => acc(a, g.zip_map(self.value(a), |gi, x| gi * sigmoid(x)), grads),
            Op::Clamp(a, lo, hi) => acc(
                a,
                g.zip_map(self.value(a), |gi, x| if x < lo || x > hi { 0.0 } else { gi }),
                grads,
            ),
            Op::Min(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let mask = ta.zip_map(tb, |x, y| if x <= y { 1.0 } else { 0.0 });
                acc(a, g.zip_map(&mask, |gi, m| gi * m), grads);
                acc(b, g.zip_map(&mask, |gi, m| gi * (1.0 - m)), grads);
            }
            Op::SumCols(a) => {
                let t = self.value(a);
                acc(a, Tensor::from_fn(t.rows(), t.cols(), |i, _| g.get(i, 0)), grads);
            }
            Op::MeanAll(a) => {
                let t = self.value(a);
                let v = g.item() / t.len() as f64;
                acc(a, Tensor::full(t.rows(), t.cols(), v), grads);
            }
            Op::SliceCols(a, start) => {
                let t = self.value(a);
                let w = g.cols();
                let delta = Tensor::from_fn(t.rows(), t.cols(), |i, j| {
                    if j >= start && j < start + w {
                        g.get(i, j - start)
                    } else {
                        0.0
                    }
                });
                acc(a, delta, grads);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(a).cols();
                let cb = self.value(b).cols();
                acc(a, Tensor::from_fn(g.rows(), ca, |i, j| g.get(i, j)), grads);
                acc(b, Tensor::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j)), grads);
            }
            Op::Log1mTanh2(a) => acc(
                a,
                g.zip_map(self.value(a), |gi, x| -2.0 * x.tanh() * gi),
                grads,
            ),
            Op::GaussPair { x, mean, log_std } => {
                let (tx, tm, ts) = (self.value(x), self.value(mean), self.value(log_std));
                let d = tx.cols();
                let mut gx = Tensor::zeros(tx.rows(), d);
                let mut gm = Tensor::zeros(tm.rows(), d);
                let mut gs = Tensor::zeros(ts.rows(), d);
                for n in 0..tm.rows() {
                    for j in 0..d {
                        let mu = tm.get(n, j);
                        let inv_var = (-2.0 * ts.get(n, j)).exp();
                        let (mut dm, mut ds) = (0.0, 0.0);
                        for b in 0..tx.rows() {
                            let gbn = g.get(b, n);
                            if gbn == 0.0 {
                                continue;
                            }
                            let diff = tx.get(b, j) - mu;
                            let w = gbn * diff * inv_var;
                            gx.data_mut()[b * d + j] -= w;
                            dm += w;
                            ds += gbn * (diff * diff * inv_var - 1.0);
                        }
                        gm.set(n, j, dm);
                        gs.set(n, j, ds);
                    }
                }
                acc(x, gx, grads);
                acc(mean, gm, grads);
                acc(log_std, gs, grads);
            }
            Op::LseRows(a) => {
                let t = self.value(a);
                let delta = Tensor::from_fn(t.rows(), t.cols(), |i, j| {
                    g.get(i, 0) * (t.get(i, j) - out.get(i, 0)).exp()
                });
                acc(a, delta, grads);
            }
        }
    }
}

/// Log-sum-exp of a slice; `-inf` for an empty slice.
pub fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
