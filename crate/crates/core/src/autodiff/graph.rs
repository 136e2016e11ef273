use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of an elementwise op lines up with the left one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `[1, c]` repeated over rows.
    Row,
    /// `[r, 1]` repeated over columns.
    Col,
    /// `[1, 1]`.
    Scalar,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    Sum(Var),
    SumRows(Var),
    Mean(Var),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Square(Var),
    SliceRows(Var, usize),
    PadRows(Var),
    Reshape(Var),
    Bilinear(Var, Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A reverse-mode tape. Operations append nodes in evaluation order, so
/// every node's inputs precede it; [`Graph::backward`] walks the tape once in
/// reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Vec<f64>>>>,
    track_branches: bool,
    branch_hash: u64,
    min_kink_gap: f64,
}

fn dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.dims2()
        .ok_or_else(|| Error::shape(op, format!("expected a matrix, got shape {:?}", t.shape())))
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    let (ra, ca) = dims(op, a)?;
    let (rb, cb) = dims(op, b)?;
    if (ra, ca) == (rb, cb) {
        Ok(Broadcast::Same)
    } else if (rb, cb) == (1, 1) {
        Ok(Broadcast::Scalar)
    } else if rb == 1 && cb == ca {
        Ok(Broadcast::Row)
    } else if cb == 1 && rb == ra {
        Ok(Broadcast::Col)
    } else {
        Err(Error::shape(op, format!("cannot broadcast {:?} onto {:?}", b.shape(), a.shape())))
    }
}

/// Index into the right operand for element `(r, c)` of the left one.
#[inline]
fn bidx(kind: Broadcast, cols: usize, r: usize, c: usize) -> usize {
    match kind {
        Broadcast::Same => r * cols + c,
        Broadcast::Row => c,
        Broadcast::Col => r,
        Broadcast::Scalar => 0,
    }
}

/// `[n, k] x [k, m]`.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            min_kink_gap: f64::INFINITY,
            ..Self::default()
        }
    }

    /// Records a fingerprint of every discrete branch taken (ReLU signs,
    /// histogram bins) so gradient checks can detect non-smooth points.
    pub fn with_branch_tracking() -> Self {
        Self {
            track_branches: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf, true)
    }

    /// A leaf excluded from differentiation.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn branch_hash(&self) -> u64 {
        self.branch_hash
    }

    /// Smallest |x| seen at a ReLU input (only when tracking branches).
    pub fn min_kink_gap(&self) -> f64 {
        self.min_kink_gap
    }

    /// Mixes a discrete decision into the branch fingerprint.
    pub fn note_branch(&mut self, code: u64) {
        if self.track_branches {
            // FNV-1a style mixing.
            self.branch_hash ^= code.wrapping_add(0x9E37_79B9_7F4A_7C15);
            self.branch_hash = self.branch_hash.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = dims("matmul", self.value(a))?;
        let (k2, m) = dims("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("[{n}, {k}] x [{k2}, {m}]"),
            ));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims("transpose", self.value(a))?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), rg))
    }

    fn elementwise(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Broadcast) -> Op,
    ) -> Result<Var> {
        let kind = broadcast(name, self.value(a), self.value(b))?;
        let (r, c) = dims(name, self.value(a))?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(f(av[i * c + j], bv[bidx(kind, c, i, j)]));
            }
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![r, c], out)?, op(kind), rg))
    }

    /// `a + b`, with `b` optionally broadcast as a row, column or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, |k| Op::Add(a, b, k))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, |k| Op::Sub(a, b, k))
    }

    /// Elementwise product with the same broadcasting as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, |k| Op::Mul(a, b, k))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x * s).collect();
        let shape = t.shape().to_vec();
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Scale(a, s), rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), rg))
    }

    /// Column sums: `[r, c] -> [1, c]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = dims("sum_rows", self.value(a))?;
        let src = self.value(a).data();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, &x) in out.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![1, c], out)?, Op::SumRows(a), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = dims("concat_cols", self.value(a))?;
        let (rb, cb) = dims("concat_cols", self.value(b))?;
        if ra != rb {
            return Err(Error::shape("concat_cols", format!("[{ra}, {ca}] | [{rb}, {cb}]")));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&av[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![ra, ca + cb], out)?, Op::ConcatCols(a, b), rg))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = dims("concat_rows", self.value(a))?;
        let (rb, cb) = dims("concat_rows", self.value(b))?;
        if ca != cb {
            return Err(Error::shape("concat_rows", format!("[{ra}, {ca}] / [{rb}, {cb}]")));
        }
        let mut out = self.value(a).data().to_vec();
        out.extend_from_slice(self.value(b).data());
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(vec![ra + rb, ca], out)?, Op::ConcatRows(a, b), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let shape = t.shape().to_vec();
        let out: Vec<f64> = t.data().iter().map(|&x| f(x)).collect();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::new(shape, out).expect("shape preserved"), op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        if self.track_branches {
            let xs: Vec<f64> = self.value(a).data().to_vec();
            for (i, &x) in xs.iter().enumerate() {
                self.min_kink_gap = self.min_kink_gap.min(x.abs());
                self.note_branch(((i as u64) << 1) | u64::from(x > 0.0));
            }
        }
        Ok(self.unary(a, |x| x.max(0.0), Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, sigmoid, Op::Sigmoid(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, f64::tanh, Op::Tanh(a)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, |x| x * x, Op::Square(a)))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims("slice_rows", self.value(a))?;
        if start + len > r {
            return Err(Error::shape("slice_rows", format!("rows {start}..{} of {r}", start + len)));
        }
        let out = self.value(a).data()[start * c..(start + len) * c].to_vec();
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![len, c], out)?, Op::SliceRows(a, start), rg))
    }

    /// Appends zero rows up to `rows` total.
    pub fn pad_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (r, c) = dims("pad_rows", self.value(a))?;
        if rows < r {
            return Err(Error::shape("pad_rows", format!("cannot pad {r} rows to {rows}")));
        }
        let mut out = self.value(a).data().to_vec();
        out.resize(rows * c, 0.0);
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::new(vec![rows, c], out)?, Op::PadRows(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    /// Slice-wise bilinear form: `x [1, m]`, `w [k, m, m]`, `y [1, m]` give
    /// `out[k] = x w[k] y^T` as a `[1, k]` row.
    pub fn bilinear(&mut self, x: Var, w: Var, y: Var) -> Result<Var> {
        let (k, m) = match self.value(w).shape() {
            [k, m, m2] if m == m2 => (*k, *m),
            s => return Err(Error::shape("bilinear", format!("weight shape {s:?}"))),
        };
        for v in [x, y] {
            if dims("bilinear", self.value(v))? != (1, m) {
                return Err(Error::shape(
                    "bilinear",
                    format!("operand {:?} vs width {m}", self.value(v).shape()),
                ));
            }
        }
        let (xv, wv, yv) = (self.value(x).data(), self.value(w).data(), self.value(y).data());
        let mut out = vec![0.0; k];
        for (s, o) in out.iter_mut().enumerate() {
            let slice = &wv[s * m * m..(s + 1) * m * m];
            let mut acc = 0.0;
            for i in 0..m {
                let row = &slice[i * m..(i + 1) * m];
                let dot: f64 = row.iter().zip(yv).map(|(a, b)| a * b).sum();
                acc += xv[i] * dot;
            }
            *o = acc;
        }
        let rg = self.any_grad(&[x, w, y]);
        Ok(self.push(Tensor::new(vec![1, k], out)?, Op::Bilinear(x, w, y), rg))
    }

    /// Back-propagates from the scalar `loss`. A tape supports one backward
    /// pass; a second call is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(Error::Argument("backward already ran on this tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`; zeros when
    /// `v` did not influence the loss.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let grads = self.grads.as_ref()?;
        let shape = self.value(v).shape().to_vec();
        Some(match &grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).unwrap(),
            None => Tensor::zeros(&shape),
        })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let acc = |v: Var, grads: &mut [Option<Vec<f64>>], f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(buf);
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.value(a).dims2().unwrap();
                let m = self.value(b).dims2().unwrap().1;
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, grads, &mut |da| {
                    for r in 0..n {
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            let grow = &g[r * m..(r + 1) * m];
                            da[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(b, grads, &mut |db| {
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            if a_rp == 0.0 {
                                continue;
                            }
                            for (d, &gv) in db[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *d += a_rp * gv;
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(a).dims2().unwrap();
                acc(a, grads, &mut |da| {
                    for x in 0..r {
                        for y in 0..c {
                            da[x * c + y] += g[y * r + x];
                        }
                    }
                });
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                let (r, c) = node.value.dims2().unwrap();
                acc(a, grads, &mut |da| {
                    for (d, gv) in da.iter_mut().zip(g) {
                        *d += gv;
                    }
                });
                acc(b, grads, &mut |db| {
                    for x in 0..r {
                        for y in 0..c {
                            db[bidx(kind, c, x, y)] += sign * g[x * c + y];
                        }
                    }
                });
            }
            Op::Mul(a, b, kind) => {
                let (r, c) = node.value.dims2().unwrap();
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                acc(a, grads, &mut |da| {
                    for x in 0..r {
                        for y in 0..c {
                            da[x * c + y] += g[x * c + y] * bv[bidx(kind, c, x, y)];
                        }
                    }
                });
                acc(b, grads, &mut |db| {
                    for x in 0..r {
                        for y in 0..c {
                            db[bidx(kind, c, x, y)] += g[x * c + y] * av[x * c + y];
                        }
                    }
                });
            }
            Op::Scale(a, s) => acc(a, grads, &mut |da| {
                for (d, gv) in da.iter_mut().zip(g) {
                    *d += s * gv;
                }
            }),
            Op::Sum(a) => acc(a, grads, &mut |da| {
                for d in da.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::Mean(a) => {
                let n = self.value(a).len() as f64;
                acc(a, grads, &mut |da| {
                    for d in da.iter_mut() {
                        *d += g[0] / n;
                    }
                })
            }
            Op::SumRows(a) => {
                let c = g.len();
                acc(a, grads, &mut |da| {
                    for row in da.chunks_mut(c) {
                        for (d, gv) in row.iter_mut().zip(g) {
                            *d += gv;
                        }
                    }
                })
            }
            Op::ConcatCols(a, b) => {
                let (r, ca) = self.value(a).dims2().unwrap();
                let cb = self.value(b).dims2().unwrap().1;
                let w = ca + cb;
                acc(a, grads, &mut |da| {
                    for x in 0..r {
                        for y in 0..ca {
                            da[x * ca + y] += g[x * w + y];
                        }
                    }
                });
                acc(b, grads, &mut |db| {
                    for x in 0..r {
                        for y in 0..cb {
                            db[x * cb + y] += g[x * w + ca + y];
                        }
                    }
                });
            }
            Op::ConcatRows(a, b) => {
                let split = self.value(a).len();
                acc(a, grads, &mut |da| {
                    for (d, gv) in da.iter_mut().zip(&g[..split]) {
                        *d += gv;
                    }
                });
                acc(b, grads, &mut |db| {
                    for (d, gv) in db.iter_mut().zip(&g[split..]) {
                        *d += gv;
                    }
                });
            }
            Op::Relu(a) => {
                let xs = self.value(a).data();
                acc(a, grads, &mut |da| {
                    for ((d, gv), &x) in da.iter_mut().zip(g).zip(xs) {
                        if x > 0.0 {
                            *d += gv;
                        }
                    }
                })
            }
            Op::Sigmoid(a) => acc(a, grads, &mut |da| {
                for ((d, gv), &y) in da.iter_mut().zip(g).zip(out) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => acc(a, grads, &mut |da| {
                for ((d, gv), &y) in da.iter_mut().zip(g).zip(out) {
                    *d += gv * (1.0 - y * y);
                }
            }),
            Op::Square(a) => {
                let xs = self.value(a).data();
                acc(a, grads, &mut |da| {
                    for ((d, gv), &x) in da.iter_mut().zip(g).zip(xs) {
                        *d += 2.0 * x * gv;
                    }
                })
            }
            Op::SliceRows(a, start) => {
                let c = node.value.dims2().unwrap().1;
                acc(a, grads, &mut |da| {
                    for (d, gv) in da[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *d += gv;
                    }
                })
            }
            Op::PadRows(a) => acc(a, grads, &mut |da| {
                let n = da.len();
                for (d, gv) in da.iter_mut().zip(&g[..n]) {
                    *d += gv;
                }
            }),
            Op::Reshape(a) => acc(a, grads, &mut |da| {
                for (d, gv) in da.iter_mut().zip(g) {
                    *d += gv;
                }
            }),
            Op::Bilinear(x, w, y) => {
                let (k, m) = (g.len(), self.value(x).len());
                let (xv, wv, yv) = (self.value(x).data(), self.value(w).data(), self.value(y).data());
                acc(x, grads, &mut |dx| {
                    for (s, &gs) in g.iter().enumerate() {
                        for i in 0..m {
                            let row = &wv[s * m * m + i * m..s * m * m + (i + 1) * m];
                            dx[i] += gs * row.iter().zip(yv).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                acc(y, grads, &mut |dy| {
                    for (s, &gs) in g.iter().enumerate() {
                        for i in 0..m {
                            let coef = gs * xv[i];
                            let row = &wv[s * m * m + i * m..s * m * m + (i + 1) * m];
                            for (d, &wij) in dy.iter_mut().zip(row) {
                                *d += coef * wij;
                            }
                        }
                    }
                });
                acc(w, grads, &mut |dw| {
                    for s in 0..k {
                        for i in 0..m {
                            let coef = g[s] * xv[i];
                            for j in 0..m {
                                dw[s * m * m + i * m + j] += coef * yv[j];
                            }
                        }
                    }
                });
            }
        }
    }
}
