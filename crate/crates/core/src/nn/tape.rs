//! A small reverse-mode autodiff tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep is a
//! valid topological traversal. A node only records gradients when one of its
//! inputs does; constants and detached values cut the graph.

use super::mat::{gemm_acc, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulCol(Var, Var),
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    Transpose(Var),
    Gru(Box<GruCache>),
    MaxPool {
        steps: Vec<Var>,
        argmax: Vec<usize>,
    },
    Softmax(Var),
    LogClamp {
        x: Var,
        floor: f64,
    },
    Abs(Var),
    SumAll(Var),
    StraightThrough(Var),
    CrossEntropy {
        logits: Var,
        probs: Mat,
        labels: Vec<usize>,
    },
    Regularizer(Box<RegCache>),
}

#[derive(Debug)]
struct GruCache {
    xproj: Var,
    h: Var,
    u: Var,
    bhn: Var,
    keep: Vec<bool>,
    r: Mat,
    z: Mat,
    n: Mat,
    hn: Mat,
}

#[derive(Debug)]
struct RegCache {
    mask: Var,
    lengths: Vec<usize>,
    sparsity: f64,
    lambda_sparsity: f64,
    lambda_coherence: f64,
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads[v.0].as_ref()
    }

    /// The gradient of `v`, or zeros of the given shape if nothing reached it.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Mat {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(rows, cols))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
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

    fn push(&mut self, value: Mat, op: Op, grad: bool) -> Var {
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.nodes[v.0].grad)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].grad
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf, false)
    }

    pub fn param(&mut self, m: &Mat) -> Var {
        self.push(m.clone(), Op::Leaf, true)
    }

    /// Same value, no gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let m = self.value(v).clone();
        self.constant(m)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let g = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), g)
    }

    /// `a + bias` with `bias` a `1 × n` row broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (am, bm) = (self.value(a), self.value(bias));
        assert_eq!((bm.rows, bm.cols), (1, am.cols), "bias shape");
        let mut value = am.clone();
        for r in 0..value.rows {
            for (x, b) in value.row_mut(r).iter_mut().zip(&bm.data) {
                *x += b;
            }
        }
        let g = self.needs(&[a, bias]);
        self.push(value, Op::AddBias(a, bias), g)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Mat {
        let (am, bm) = (self.value(a), self.value(b));
        assert_eq!(am.shape(), bm.shape(), "elementwise shape mismatch");
        Mat::from_vec(
            am.rows,
            am.cols,
            am.data
                .iter()
                .zip(&bm.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x + y);
        let g = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x - y);
        let g = self.needs(&[a, b]);
        self.push(value, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip(a, b, |x, y| x * y);
        let g = self.needs(&[a, b]);
        self.push(value, Op::Mul(a, b), g)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let g = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), g)
    }

    /// Scales row `i` of `a` by `col[i]`; `col` is `m × 1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (am, cm) = (self.value(a), self.value(col));
        assert_eq!((cm.rows, cm.cols), (am.rows, 1), "column shape");
        let mut value = am.clone();
        for r in 0..value.rows {
            let s = cm.data[r];
            value.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        let g = self.needs(&[a, col]);
        self.push(value, Op::MulCol(a, col), g)
    }

    /// Gathers rows of `table`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Mat::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).copy_from_slice(t.row(id));
        }
        let g = self.needs(&[table]);
        self.push(
            value,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            g,
        )
    }

    pub fn concat_rows(&mut self, vs: &[Var]) -> Var {
        let cols = self.value(vs[0]).cols;
        let rows: usize = vs.iter().map(|&v| self.value(v).rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &v in vs {
            let m = self.value(v);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
        }
        let g = self.needs(vs);
        self.push(
            Mat::from_vec(rows, cols, data),
            Op::ConcatRows(vs.to_vec()),
            g,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.rows, "row slice out of range");
        let value = Mat::from_vec(
            len,
            m.cols,
            m.data[start * m.cols..(start + len) * m.cols].to_vec(),
        );
        let g = self.needs(&[a]);
        self.push(value, Op::SliceRows(a, start), g)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols, "column slice out of range");
        let mut value = Mat::zeros(m.rows, len);
        for r in 0..m.rows {
            value
                .row_mut(r)
                .copy_from_slice(&m.row(r)[start..start + len]);
        }
        let g = self.needs(&[a]);
        self.push(value, Op::SliceCols(a, start), g)
    }

    /// Same data in row-major order, new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.len(), rows * cols, "reshape changes the element count");
        let value = Mat::from_vec(rows, cols, m.data.clone());
        let g = self.needs(&[a]);
        self.push(value, Op::Reshape(a), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = transposed(self.value(a));
        let g = self.needs(&[a]);
        self.push(value, Op::Transpose(a), g)
    }

    /// One gated recurrent step with gates laid out `[reset | update | new]`:
    ///
    /// ```text
    /// r  = σ(xr + h·Ur)          z = σ(xz + h·Uz)
    /// n  = tanh(xn + r ⊙ (h·Un + b_hn))
    /// h' = (1 − z) ⊙ n + z ⊙ h
    /// ```
    ///
    /// `xproj` already holds the input projection plus input biases. Rows with
    /// `keep[b] == false` (padding) pass `h` through unchanged.
    pub fn gru_step(&mut self, xproj: Var, h: Var, u: Var, bhn: Var, keep: &[bool]) -> Var {
        let hm = self.value(h);
        let (batch, hid) = hm.shape();
        let xm = self.value(xproj);
        assert_eq!(xm.shape(), (batch, 3 * hid), "gru input projection shape");
        assert_eq!(keep.len(), batch);
        let hp = hm.matmul(self.value(u));
        let bm = self.value(bhn);

        let mut r = Mat::zeros(batch, hid);
        let mut z = Mat::zeros(batch, hid);
        let mut n = Mat::zeros(batch, hid);
        let mut hn = Mat::zeros(batch, hid);
        let mut out = Mat::zeros(batch, hid);
        for b in 0..batch {
            let (xr, hr, hrow) = (xm.row(b), hp.row(b), hm.row(b));
            for j in 0..hid {
                let rv = sigmoid(xr[j] + hr[j]);
                let zv = sigmoid(xr[hid + j] + hr[hid + j]);
                let hnv = hr[2 * hid + j] + bm.data[j];
                let nv = (xr[2 * hid + j] + rv * hnv).tanh();
                r.set(b, j, rv);
                z.set(b, j, zv);
                hn.set(b, j, hnv);
                n.set(b, j, nv);
                out.set(
                    b,
                    j,
                    if keep[b] {
                        (1.0 - zv) * nv + zv * hrow[j]
                    } else {
                        hrow[j]
                    },
                );
            }
        }
        let g = self.needs(&[xproj, h, u, bhn]);
        self.push(
            out,
            Op::Gru(Box::new(GruCache {
                xproj,
                h,
                u,
                bhn,
                keep: keep.to_vec(),
                r,
                z,
                n,
                hn,
            })),
            g,
        )
    }

    /// Elementwise max over time steps, considering for each row `b` only the
    /// steps with `valid[t][b]`. Rows without any valid step yield zeros.
    pub fn max_pool(&mut self, steps: &[Var], valid: &[Vec<bool>]) -> Var {
        assert_eq!(steps.len(), valid.len());
        let (rows, cols) = self.value(steps[0]).shape();
        let mut value = Mat::zeros(rows, cols);
        let mut argmax = vec![usize::MAX; rows * cols];
        for (t, &s) in steps.iter().enumerate() {
            let m = self.value(s);
            for b in 0..rows {
                if !valid[t][b] {
                    continue;
                }
                for j in 0..cols {
                    let k = b * cols + j;
                    let x = m.data[k];
                    if argmax[k] == usize::MAX || x > value.data[k] {
                        value.data[k] = x;
                        argmax[k] = t;
                    }
                }
            }
        }
        let g = self.needs(steps);
        self.push(
            value,
            Op::MaxPool {
                steps: steps.to_vec(),
                argmax,
            },
            g,
        )
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let g = self.needs(&[a]);
        self.push(value, Op::Softmax(a), g)
    }

    /// `ln(max(x, floor))`; no gradient below the floor.
    pub fn log_clamp(&mut self, x: Var, floor: f64) -> Var {
        let value = self.value(x).map(|v| v.max(floor).ln());
        let g = self.needs(&[x]);
        self.push(value, Op::LogClamp { x, floor }, g)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        let g = self.needs(&[a]);
        self.push(value, Op::Abs(a), g)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data.iter().sum();
        let g = self.needs(&[a]);
        self.push(Mat::scalar(s), Op::SumAll(a), g)
    }

    /// Forward value `hard`, gradient passed to `relaxed` unchanged.
    pub fn straight_through(&mut self, relaxed: Var, hard: Mat) -> Var {
        assert_eq!(self.value(relaxed).shape(), hard.shape());
        let g = self.needs(&[relaxed]);
        self.push(hard, Op::StraightThrough(relaxed), g)
    }

    /// Mean over rows of `−ln softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let probs = softmax_rows(self.value(logits));
        assert_eq!(probs.rows, labels.len());
        let n = labels.len().max(1) as f64;
        let lm = self.value(logits);
        let loss: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| -log_softmax_at(lm.row(r), y))
            .sum::<f64>()
            / n;
        let g = self.needs(&[logits]);
        self.push(
            Mat::scalar(loss),
            Op::CrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            g,
        )
    }

    /// Batch mean of `λ1·|Σ_t m_t / l − s| + λ2·Σ_{t≥2} |m_t − m_{t−1}|`
    /// over the first `lengths[b]` entries of row `b` of `mask`.
    pub fn regularizer(
        &mut self,
        mask: Var,
        lengths: &[usize],
        sparsity: f64,
        lambda_sparsity: f64,
        lambda_coherence: f64,
    ) -> Var {
        let m = self.value(mask);
        assert_eq!(m.rows, lengths.len());
        let mut total = 0.0;
        for (b, &l) in lengths.iter().enumerate() {
            let row = &m.row(b)[..l];
            let frac = row.iter().sum::<f64>() / l.max(1) as f64;
            let coh: f64 = row.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
            total += lambda_sparsity * (frac - sparsity).abs() + lambda_coherence * coh;
        }
        let value = Mat::scalar(total / lengths.len().max(1) as f64);
        let g = self.needs(&[mask]);
        self.push(
            value,
            Op::Regularizer(Box::new(RegCache {
                mask,
                lengths: lengths.to_vec(),
                sparsity,
                lambda_sparsity,
                lambda_coherence,
            })),
            g,
        )
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.value(loss).shape(),
            (1, 1),
            "backward needs a scalar loss"
        );
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            // interior gradients stay inspectable
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Mat>], v: Var, delta: Mat) {
        if !self.nodes[v.0].grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn acc_with(&self, grads: &mut [Option<Mat>], v: Var, f: impl FnOnce(&mut Mat)) {
        if !self.nodes[v.0].grad {
            return;
        }
        let (r, c) = self.value(v).shape();
        let slot = grads[v.0].get_or_insert_with(|| Mat::zeros(r, c));
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                self.acc_with(grads, *a, |ga| gemm_acc(g, false, bm, true, ga));
                self.acc_with(grads, *b, |gb| gemm_acc(am, true, g, false, gb));
            }
            Op::AddBias(a, bias) => {
                self.acc(grads, *a, g.clone());
                self.acc_with(grads, *bias, |gb| {
                    for r in 0..g.rows {
                        for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (am, bm) = (self.value(*a), self.value(*b));
                self.acc_with(grads, *a, |ga| {
                    for ((x, gv), bv) in ga.data.iter_mut().zip(&g.data).zip(&bm.data) {
                        *x += gv * bv;
                    }
                });
                self.acc_with(grads, *b, |gb| {
                    for ((x, gv), av) in gb.data.iter_mut().zip(&g.data).zip(&am.data) {
                        *x += gv * av;
                    }
                });
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.map(|x| x * s)),
            Op::MulCol(a, col) => {
                let (am, cm) = (self.value(*a), self.value(*col));
                self.acc_with(grads, *a, |ga| {
                    for r in 0..g.rows {
                        let s = cm.data[r];
                        for (x, gv) in ga.row_mut(r).iter_mut().zip(g.row(r)) {
                            *x += gv * s;
                        }
                    }
                });
                self.acc_with(grads, *col, |gc| {
                    for r in 0..g.rows {
                        gc.data[r] += g
                            .row(r)
                            .iter()
                            .zip(am.row(r))
                            .map(|(x, y)| x * y)
                            .sum::<f64>();
                    }
                });
            }
            Op::Embed { table, ids } => {
                self.acc_with(grads, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, gv) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *x += gv;
                        }
                    }
                });
            }
            Op::ConcatRows(vs) => {
                let mut start = 0;
                for &v in vs {
                    let rows = self.value(v).rows;
                    let part = Mat::from_vec(
                        rows,
                        g.cols,
                        g.data[start * g.cols..(start + rows) * g.cols].to_vec(),
                    );
                    self.acc(grads, v, part);
                    start += rows;
                }
            }
            Op::SliceRows(a, start) => {
                self.acc_with(grads, *a, |ga| {
                    let off = start * ga.cols;
                    for (x, gv) in ga.data[off..off + g.data.len()].iter_mut().zip(&g.data) {
                        *x += gv;
                    }
                });
            }
            Op::SliceCols(a, start) => {
                self.acc_with(grads, *a, |ga| {
                    for r in 0..g.rows {
                        for (x, gv) in ga.row_mut(r)[*start..*start + g.cols]
                            .iter_mut()
                            .zip(g.row(r))
                        {
                            *x += gv;
                        }
                    }
                });
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                self.acc(grads, *a, Mat::from_vec(r, c, g.data.clone()));
            }
            Op::Transpose(a) => self.acc(grads, *a, transposed(g)),
            Op::Gru(c) => self.gru_backward(c, g, grads),
            Op::MaxPool { steps, argmax } => {
                let cols = g.cols;
                for (t, &s) in steps.iter().enumerate() {
                    if !self.nodes[s.0].grad {
                        continue;
                    }
                    let mut part: Option<Mat> = None;
                    for (k, &am) in argmax.iter().enumerate() {
                        if am == t {
                            part.get_or_insert_with(|| Mat::zeros(g.rows, cols)).data[k] +=
                                g.data[k];
                        }
                    }
                    if let Some(p) = part {
                        self.acc(grads, s, p);
                    }
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                self.acc_with(grads, *a, |ga| {
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for ((x, yv), gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *x += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LogClamp { x, floor } => {
                let xm = self.value(*x);
                self.acc_with(grads, *x, |gx| {
                    for ((d, &xv), gv) in gx.data.iter_mut().zip(&xm.data).zip(&g.data) {
                        if xv > *floor {
                            *d += gv / xv;
                        }
                    }
                });
            }
            Op::Abs(a) => {
                let am = self.value(*a);
                self.acc_with(grads, *a, |ga| {
                    for ((d, &av), gv) in ga.data.iter_mut().zip(&am.data).zip(&g.data) {
                        *d += gv * sign(av);
                    }
                });
            }
            Op::SumAll(a) => {
                let (r, c) = self.value(*a).shape();
                self.acc(grads, *a, Mat::filled(r, c, g.item()));
            }
            Op::StraightThrough(relaxed) => self.acc(grads, *relaxed, g.clone()),
            Op::CrossEntropy {
                logits,
                probs,
                labels,
            } => {
                let scale = g.item() / labels.len().max(1) as f64;
                self.acc_with(grads, *logits, |gl| {
                    for (r, &y) in labels.iter().enumerate() {
                        for (k, (d, p)) in gl.row_mut(r).iter_mut().zip(probs.row(r)).enumerate() {
                            *d += scale * (p - if k == y { 1.0 } else { 0.0 });
                        }
                    }
                });
            }
            Op::Regularizer(c) => {
                let m = self.value(c.mask);
                let scale = g.item() / c.lengths.len().max(1) as f64;
                self.acc_with(grads, c.mask, |gm| {
                    for (b, &l) in c.lengths.iter().enumerate() {
                        let row = &m.row(b)[..l];
                        let frac = row.iter().sum::<f64>() / l.max(1) as f64;
                        let ds = c.lambda_sparsity * sign(frac - c.sparsity) / l.max(1) as f64;
                        let out = gm.row_mut(b);
                        for t in 0..l {
                            let mut d = ds;
                            if t > 0 {
                                d += c.lambda_coherence * sign(row[t] - row[t - 1]);
                            }
                            if t + 1 < l {
                                d -= c.lambda_coherence * sign(row[t + 1] - row[t]);
                            }
                            out[t] += scale * d;
                        }
                    }
                });
            }
        }
    }

    fn gru_backward(&self, c: &GruCache, g: &Mat, grads: &mut [Option<Mat>]) {
        let hm = self.value(c.h);
        let um = self.value(c.u);
        let (batch, hid) = hm.shape();
        let mut dx = Mat::zeros(batch, 3 * hid);
        let mut dhp = Mat::zeros(batch, 3 * hid);
        let mut dh = Mat::zeros(batch, hid);
        let mut dbhn = vec![0.0; hid];
        for b in 0..batch {
            if !c.keep[b] {
                dh.row_mut(b).copy_from_slice(g.row(b));
                continue;
            }
            for j in 0..hid {
                let gv = g.get(b, j);
                let (r, z, n, hn) = (c.r.get(b, j), c.z.get(b, j), c.n.get(b, j), c.hn.get(b, j));
                let hprev = hm.get(b, j);
                let dn_pre = gv * (1.0 - z) * (1.0 - n * n);
                let dz_pre = gv * (hprev - n) * z * (1.0 - z);
                let dr_pre = dn_pre * hn * r * (1.0 - r);
                let dhn = dn_pre * r;
                dx.set(b, j, dr_pre);
                dx.set(b, hid + j, dz_pre);
                dx.set(b, 2 * hid + j, dn_pre);
                dhp.set(b, j, dr_pre);
                dhp.set(b, hid + j, dz_pre);
                dhp.set(b, 2 * hid + j, dhn);
                dh.set(b, j, gv * z);
                dbhn[j] += dhn;
            }
        }
        self.acc_with(grads, c.u, |gu| gemm_acc(hm, true, &dhp, false, gu));
        self.acc_with(grads, c.bhn, |gb| {
            for (x, d) in gb.data.iter_mut().zip(&dbhn) {
                *x += d;
            }
        });
        if self.nodes[c.h.0].grad {
            gemm_acc(&dhp, false, um, true, &mut dh);
            self.acc(grads, c.h, dh);
        }
        self.acc(grads, c.xproj, dx);
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn transposed(m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.cols, m.rows);
    for r in 0..m.rows {
        for c in 0..m.cols {
            out.set(c, r, m.get(r, c));
        }
    }
    out
}

pub fn softmax_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
            s += *x;
        }
        row.iter_mut().for_each(|x| *x /= s);
    }
    out
}

fn log_softmax_at(row: &[f64], k: usize) -> f64 {
    let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
    row[k] - lse
}
