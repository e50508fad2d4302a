use super::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One recorded operation. Inputs are earlier tape positions, so the node
/// list is topologically ordered by construction.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    ScatterAdd { src: Var, index: Vec<usize> },
    IndexSelect { src: Var, index: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    ConcatCols(Vec<Var>),
    RowSums(Var),
    RepeatCol(Var),
    RepeatRows(Var),
    SumAll(Var),
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, if `v` required one.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but substitutes zeros for absent gradients.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::new(like.shape().to_vec(), vec![0.0; like.numel()]),
        }
    }
}

/// Define-by-run record of one forward pass.
///
/// A tape is rebuilt for every forward pass; values (the saved
/// activations) live alongside the operations that produced them.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded values.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers a differentiation leaf, keeping its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf)
    }

    /// Registers a constant that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.push(t, Op::Leaf)
    }

    /// The recorded value behind `v`.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    fn push(&mut self, t: Tensor, op: Op) -> Var {
        self.values.push(t);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    fn push_result(&mut self, shape: Vec<usize>, data: Vec<f64>, grad: bool, op: Op) -> Var {
        let mut t = Tensor::new(shape, data);
        t.requires_grad = grad;
        self.push(t, op)
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.values[v.0].requires_grad
    }

    /// Matrix product of an `m x k` and a `k x n` tensor.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.cols(),
            tb.rows(),
            "matmul: inner dimensions disagree: {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let aik = ta.data()[i * k + kk];
                let brow = &tb.data()[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
        let grad = self.needs_grad(a) || self.needs_grad(b);
        self.push_result(vec![m, n], out, grad, Op::Matmul(a, b))
    }

    /// Sums source rows into `out_rows` buckets: `out[index[e]] += src[e]`.
    /// Rows receiving no contribution stay zero.
    pub fn scatter_add(&mut self, src: Var, index: &[usize], out_rows: usize) -> Var {
        let ts = self.value(src);
        assert_eq!(
            ts.rows(),
            index.len(),
            "scatter_add: {} source rows but {} indices",
            ts.rows(),
            index.len()
        );
        let c = ts.cols();
        let mut out = vec![0.0; out_rows * c];
        for (e, &i) in index.iter().enumerate() {
            assert!(
                i < out_rows,
                "scatter_add: index[{e}] = {i} out of range for {out_rows} output rows"
            );
            let srow = &ts.data()[e * c..(e + 1) * c];
            let orow = &mut out[i * c..(i + 1) * c];
            for j in 0..c {
                orow[j] += srow[j];
            }
        }
        let grad = self.needs_grad(src);
        self.push_result(
            vec![out_rows, c],
            out,
            grad,
            Op::ScatterAdd { src, index: index.to_vec() },
        )
    }

    /// Gathers rows: `out[r] = src[index[r]]`.
    pub fn index_select(&mut self, src: Var, index: &[usize]) -> Var {
        let ts = self.value(src);
        let (rows, c) = (ts.rows(), ts.cols());
        let mut out = Vec::with_capacity(index.len() * c);
        for (pos, &i) in index.iter().enumerate() {
            assert!(i < rows, "index_select: index[{pos}] = {i} out of range for {rows} rows");
            out.extend_from_slice(&ts.data()[i * c..(i + 1) * c]);
        }
        let grad = self.needs_grad(src);
        self.push_result(
            vec![index.len(), c],
            out,
            grad,
            Op::IndexSelect { src, index: index.to_vec() },
        )
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape = if ta.numel() == 1 && tb.numel() != 1 {
            tb.shape().to_vec()
        } else if tb.numel() == 1 || ta.shape() == tb.shape() {
            ta.shape().to_vec()
        } else {
            panic!(
                "elementwise op on incompatible shapes {:?} vs {:?} (only equal or scalar-with-tensor supported)",
                ta.shape(),
                tb.shape()
            );
        };
        let n: usize = out_shape.iter().product();
        let mut out = Vec::with_capacity(n);
        let (da, db) = (ta.data(), tb.data());
        for i in 0..n {
            let x = da[if da.len() == 1 { 0 } else { i }];
            let y = db[if db.len() == 1 { 0 } else { i }];
            out.push(f(x, y));
        }
        let grad = self.needs_grad(a) || self.needs_grad(b);
        self.push_result(out_shape, out, grad, op)
    }

    /// Elementwise sum; one operand may be a one-element scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// Elementwise difference; one operand may be a one-element scalar.
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product; one operand may be a one-element scalar.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise quotient; one operand may be a one-element scalar.
    /// The divisor must be nonzero everywhere.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Multiplication by a compile-time constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|v| v * c).collect();
        let grad = self.needs_grad(a);
        self.push_result(ta.shape().to_vec(), out, grad, Op::Scale(a, c))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|&v| f(v)).collect();
        let grad = self.needs_grad(a);
        self.push_result(ta.shape().to_vec(), out, grad, op)
    }

    /// Rectified linear unit. The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Natural logarithm; inputs must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    /// Square root; inputs must be strictly positive for the gradient to
    /// stay finite.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let t = self.value(p);
                assert_eq!(
                    t.rows(),
                    rows,
                    "concat_cols: row counts disagree: {} vs {}",
                    rows,
                    t.rows()
                );
                t.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let grad = parts.iter().any(|&p| self.needs_grad(p));
        self.push_result(vec![rows, total], out, grad, Op::ConcatCols(parts.to_vec()))
    }

    /// Sums each row of an `R x C` matrix into an `R x 1` column.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let r = ta.rows();
        let out = (0..r).map(|i| ta.row(i).iter().sum()).collect();
        let grad = self.needs_grad(a);
        self.push_result(vec![r, 1], out, grad, Op::RowSums(a))
    }

    /// Repeats an `R x 1` column across `cols` columns.
    pub fn repeat_col(&mut self, a: Var, cols: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.cols(), 1, "repeat_col wants an Rx1 column, got {:?}", ta.shape());
        let r = ta.rows();
        let mut out = Vec::with_capacity(r * cols);
        for i in 0..r {
            out.extend(std::iter::repeat(ta.data()[i]).take(cols));
        }
        let grad = self.needs_grad(a);
        self.push_result(vec![r, cols], out, grad, Op::RepeatCol(a))
    }

    /// Repeats a `1 x C` row across `rows` rows.
    pub fn repeat_rows(&mut self, a: Var, rows: usize) -> Var {
        let ta = self.value(a);
        assert_eq!(ta.rows(), 1, "repeat_rows wants a 1xC row, got {:?}", ta.shape());
        let c = ta.cols();
        let mut out = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            out.extend_from_slice(ta.row(0));
        }
        let grad = self.needs_grad(a);
        self.push_result(vec![rows, c], out, grad, Op::RepeatRows(a))
    }

    /// Sum of every entry, as a `1 x 1` scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let s: f64 = ta.data().iter().sum();
        let grad = self.needs_grad(a);
        self.push_result(vec![1, 1], vec![s], grad, Op::SumAll(a))
    }

    /// Propagates gradients from a scalar loss back to every recorded
    /// leaf with `requires_grad`.
    ///
    /// Panics if `loss` is not a one-element tensor.
    pub fn backward(&self, loss: Var) -> Gradients {
        let lt = self.value(loss);
        assert_eq!(
            lt.numel(),
            1,
            "backward requires a scalar loss, got shape {:?}",
            lt.shape()
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() || !self.values[idx].requires_grad {
                continue;
            }
            let g = grads[idx].take().expect("gradient present");
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let out = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.values[i].requires_grad).map(|data| {
                    Tensor::new(self.values[i].shape().to_vec(), data)
                })
            })
            .collect();
        Gradients { grads: out }
    }

    fn accum(&self, grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl Iterator<Item = f64>) {
        if !self.needs_grad(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.values[v.0].numel()]);
        for (s, c) in slot.iter_mut().zip(contrib) {
            *s += c;
        }
    }

    #[allow(clippy::too_many_lines)]
    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs_grad(*a) {
                    // dA = G . B^T
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        for j in 0..n {
                            let gij = g[i * n + j];
                            for kk in 0..k {
                                da[i * k + kk] += gij * tb.data()[kk * n + j];
                            }
                        }
                    }
                    self.accum(grads, *a, da.into_iter());
                }
                if self.needs_grad(*b) {
                    // dB = A^T . G
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for kk in 0..k {
                            let aik = ta.data()[i * k + kk];
                            for j in 0..n {
                                db[kk * n + j] += aik * g[i * n + j];
                            }
                        }
                    }
                    self.accum(grads, *b, db.into_iter());
                }
            }
            Op::ScatterAdd { src, index } => {
                let c = self.value(*src).cols();
                let contrib = index
                    .iter()
                    .flat_map(|&i| g[i * c..(i + 1) * c].iter().copied())
                    .collect::<Vec<_>>();
                self.accum(grads, *src, contrib.into_iter());
            }
            Op::IndexSelect { src, index } => {
                if self.needs_grad(*src) {
                    let ts = self.value(*src);
                    let c = ts.cols();
                    let mut dsrc = vec![0.0; ts.numel()];
                    for (pos, &i) in index.iter().enumerate() {
                        for j in 0..c {
                            dsrc[i * c + j] += g[pos * c + j];
                        }
                    }
                    self.accum(grads, *src, dsrc.into_iter());
                }
            }
            Op::Add(a, b) => {
                self.accum_broadcast(grads, *a, g, |_, _, gi| gi, *a, *b, idx);
                self.accum_broadcast(grads, *b, g, |_, _, gi| gi, *a, *b, idx);
            }
            Op::Sub(a, b) => {
                self.accum_broadcast(grads, *a, g, |_, _, gi| gi, *a, *b, idx);
                self.accum_broadcast(grads, *b, g, |_, _, gi| -gi, *a, *b, idx);
            }
            Op::Mul(a, b) => {
                self.accum_broadcast(grads, *a, g, |_, y, gi| gi * y, *a, *b, idx);
                self.accum_broadcast(grads, *b, g, |x, _, gi| gi * x, *a, *b, idx);
            }
            Op::Div(a, b) => {
                self.accum_broadcast(grads, *a, g, |_, y, gi| gi / y, *a, *b, idx);
                self.accum_broadcast(grads, *b, g, |x, y, gi| -gi * x / (y * y), *a, *b, idx);
            }
            Op::Scale(a, c) => {
                self.accum(grads, *a, g.iter().map(|gi| gi * c));
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                self.accum(
                    grads,
                    *a,
                    ta.data().iter().zip(g).map(|(&x, gi)| if x > 0.0 { *gi } else { 0.0 }),
                );
            }
            Op::Tanh(a) => {
                let out = self.value(Var(idx));
                self.accum(grads, *a, out.data().iter().zip(g).map(|(&y, gi)| gi * (1.0 - y * y)));
            }
            Op::Exp(a) => {
                let out = self.value(Var(idx));
                self.accum(grads, *a, out.data().iter().zip(g).map(|(&y, gi)| gi * y));
            }
            Op::Ln(a) => {
                let ta = self.value(*a);
                self.accum(grads, *a, ta.data().iter().zip(g).map(|(&x, gi)| gi / x));
            }
            Op::Sqrt(a) => {
                let out = self.value(Var(idx));
                self.accum(grads, *a, out.data().iter().zip(g).map(|(&y, gi)| gi * 0.5 / y));
            }
            Op::ConcatCols(parts) => {
                let rows = self.value(Var(idx)).rows();
                let total = self.value(Var(idx)).cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs_grad(p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        self.accum(grads, p, dp.into_iter());
                    }
                    offset += w;
                }
            }
            Op::RowSums(a) => {
                let ta = self.value(*a);
                let (r, c) = (ta.rows(), ta.cols());
                let contrib = (0..r).flat_map(|i| std::iter::repeat(g[i]).take(c));
                self.accum(grads, *a, contrib);
            }
            Op::RepeatCol(a) => {
                let cols = self.value(Var(idx)).cols();
                let r = self.value(*a).rows();
                let contrib = (0..r).map(|i| g[i * cols..(i + 1) * cols].iter().sum());
                self.accum(grads, *a, contrib);
            }
            Op::RepeatRows(a) => {
                let rows = self.value(Var(idx)).rows();
                let c = self.value(*a).cols();
                let contrib = (0..c).map(|j| (0..rows).map(|r| g[r * c + j]).sum());
                self.accum(grads, *a, contrib);
            }
            Op::SumAll(a) => {
                let n = self.value(*a).numel();
                self.accum(grads, *a, std::iter::repeat(g[0]).take(n));
            }
        }
    }

    /// Routes an output gradient to one operand of a broadcast binary op,
    /// summing over the broadcast when that operand is a scalar.
    #[allow(clippy::too_many_arguments)]
    fn accum_broadcast(
        &self,
        grads: &mut [Option<Vec<f64>>],
        target: Var,
        g: &[f64],
        local: impl Fn(f64, f64, f64) -> f64,
        a: Var,
        b: Var,
        _idx: usize,
    ) {
        if !self.needs_grad(target) {
            return;
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let n = g.len();
        let at = |d: &[f64], i: usize| d[if d.len() == 1 { 0 } else { i }];
        let target_len = self.value(target).numel();
        if target_len == n {
            let contrib: Vec<f64> = (0..n).map(|i| local(at(da, i), at(db, i), g[i])).collect();
            self.accum(grads, target, contrib.into_iter());
        } else {
            // Scalar operand: sum contributions over the broadcast.
            debug_assert_eq!(target_len, 1);
            let s: f64 = (0..n).map(|i| local(at(da, i), at(db, i), g[i])).sum();
            self.accum(grads, target, std::iter::once(s));
        }
    }
}
