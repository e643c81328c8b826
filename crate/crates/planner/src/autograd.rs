//! Reverse-mode automatic differentiation over [`Mat`] values.
//!
//! A [`Tape`] records every operation of one forward pass. [`Tape::backward`]
//! walks it in reverse and returns the gradient of a scalar node with respect
//! to every parameter leaf.

use crate::tensor::Mat;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>),
    Rows(Var, Vec<usize>),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Mat, inv_std: Vec<f64> },
    Gelu(Var),
    CausalSoftmax(Var),
    Xent { logits: Var, probs: Mat, targets: Vec<usize> },
}

struct Node {
    value: Mat,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant with no gradient.
    pub fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Input)
    }

    /// A trainable leaf; its gradient is reported under `id`.
    pub fn param(&mut self, id: usize, m: &Mat) -> Var {
        self.push(m.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 x c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows, 1, "add_row expects a row vector");
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, bias.cols, "add_row width mismatch");
        for r in 0..v.rows {
            for (x, y) in v.row_mut(r).iter_mut().zip(&bias.data) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut v = self.value(a).clone();
        v.scale_assign(s);
        self.push(v, Op::Scale(a, s))
    }

    /// Rows `idx` of `table`, in order (an embedding lookup).
    pub fn gather(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros(idx.len(), t.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(v, Op::Gather(table, idx))
    }

    /// Stacks matrices of equal width vertically.
    pub fn concat(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in &parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat width mismatch");
            data.extend_from_slice(&m.data);
        }
        let rows = parts.iter().map(|p| self.value(*p).rows).sum();
        self.push(Mat::from_vec(rows, cols, data), Op::Concat(parts))
    }

    /// Selected rows of `x`.
    pub fn rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let m = self.value(x);
        let mut v = Mat::zeros(idx.len(), m.cols);
        for (r, &i) in idx.iter().enumerate() {
            v.row_mut(r).copy_from_slice(m.row(i));
        }
        self.push(v, Op::Rows(x, idx))
    }

    /// Row-wise layer normalization with gain and bias rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let m = self.value(x);
        let (g, b) = (self.value(gain), self.value(bias));
        let n = m.cols as f64;
        let mut xhat = Mat::zeros(m.rows, m.cols);
        let mut out = Mat::zeros(m.rows, m.cols);
        let mut inv_std = Vec::with_capacity(m.rows);
        for r in 0..m.rows {
            let row = m.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for c in 0..m.cols {
                let h = (row[c] - mean) * is;
                *xhat.at_mut(r, c) = h;
                *out.at_mut(r, c) = h * g.data[c] + b.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, gain, bias, xhat, inv_std })
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let mut v = self.value(x).clone();
        for a in &mut v.data {
            let x = *a;
            *a = 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh());
        }
        self.push(v, Op::Gelu(x))
    }

    /// Softmax of each row `i` over columns `0..=i`; later columns get 0.
    pub fn causal_softmax(&mut self, s: Var) -> Var {
        let m = self.value(s);
        let mut p = Mat::zeros(m.rows, m.cols);
        for i in 0..m.rows {
            let last = i.min(m.cols - 1);
            let row = &m.row(i)[..=last];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                *p.at_mut(i, j) = e;
                z += e;
            }
            for j in 0..=last {
                *p.at_mut(i, j) /= z;
            }
        }
        self.push(p, Op::CausalSoftmax(s))
    }

    /// Summed cross-entropy of `targets` under row-wise softmax of `logits`.
    /// Entries where `allowed` is false are excluded from the softmax, i.e.
    /// treated as `-inf` logits.
    ///
    /// Panics if a target is not allowed; callers check this first.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>, allowed: Option<&[Vec<bool>]>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows, targets.len(), "one target per row");
        let mut probs = Mat::zeros(z.rows, z.cols);
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let ok = |c: usize| allowed.is_none_or(|a| a[r][c]);
            assert!(ok(t), "target {t} is masked out in row {r}");
            let row = z.row(r);
            let max = (0..z.cols).filter(|&c| ok(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in (0..z.cols).filter(|&c| ok(c)) {
                let e = (row[c] - max).exp();
                *probs.at_mut(r, c) = e;
                sum += e;
            }
            for c in 0..z.cols {
                *probs.at_mut(r, c) /= sum;
            }
            total += max + sum.ln() - row[t];
        }
        self.push(Mat::scalar(total), Op::Xent { logits, probs, targets })
    }

    /// Gradients of the scalar `root` (seeded with `seed`) with respect to
    /// every parameter leaf, as `(param id, gradient)` pairs. A parameter
    /// used several times appears several times.
    pub fn backward(&self, root: Var, seed: f64) -> Vec<(usize, Mat)> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::scalar(seed));
        let mut out = Vec::new();

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(m) => m.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.push((*id, g)),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(*b));
                    let gb = self.value(*a).matmul_at(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulBt(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    let ga = g.matmul(self.value(*b));
                    let gb = g.matmul_at(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (x, y) in gb.data.iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale_assign(*s);
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(table, idx) => {
                    let t = self.value(*table);
                    let mut gt = Mat::zeros(t.rows, t.cols);
                    for (r, &k) in idx.iter().enumerate() {
                        for (x, y) in gt.row_mut(k).iter_mut().zip(g.row(r)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let rows = self.value(p).rows;
                        let slice = g.data[off * g.cols..(off + rows) * g.cols].to_vec();
                        acc(&mut grads, p, Mat::from_vec(rows, g.cols, slice));
                        off += rows;
                    }
                }
                Op::Rows(x, idx) => {
                    let m = self.value(*x);
                    let mut gx = Mat::zeros(m.rows, m.cols);
                    for (r, &k) in idx.iter().enumerate() {
                        for (a, b) in gx.row_mut(k).iter_mut().zip(g.row(r)) {
                            *a += b;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let n = g.cols as f64;
                    let mut gg = Mat::zeros(1, g.cols);
                    let mut gb = Mat::zeros(1, g.cols);
                    let mut gx = Mat::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let mut sum_d = 0.0;
                        let mut sum_dh = 0.0;
                        for c in 0..g.cols {
                            gg.data[c] += gr[c] * hr[c];
                            gb.data[c] += gr[c];
                            let d = gr[c] * gv.data[c];
                            sum_d += d;
                            sum_dh += d * hr[c];
                        }
                        let is = inv_std[r];
                        for c in 0..g.cols {
                            let d = gr[c] * gv.data[c];
                            *gx.at_mut(r, c) = is * (d - sum_d / n - hr[c] * sum_dh / n);
                        }
                    }
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *gain, gg);
                    acc(&mut grads, *bias, gb);
                }
                Op::Gelu(x) => {
                    let xv = self.value(*x);
                    let mut gx = g;
                    for (d, &x) in gx.data.iter_mut().zip(&xv.data) {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        *d *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::CausalSoftmax(s) => {
                    let p = &node.value;
                    let mut gs = Mat::zeros(p.rows, p.cols);
                    for i in 0..p.rows {
                        let last = i.min(p.cols - 1);
                        let dot: f64 = (0..=last).map(|j| g.at(i, j) * p.at(i, j)).sum();
                        for j in 0..=last {
                            *gs.at_mut(i, j) = p.at(i, j) * (g.at(i, j) - dot);
                        }
                    }
                    acc(&mut grads, *s, gs);
                }
                Op::Xent { logits, probs, targets } => {
                    let s = g.data[0];
                    let mut gz = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        *gz.at_mut(r, t) -= 1.0;
                    }
                    gz.scale_assign(s);
                    acc(&mut grads, *logits, gz);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric(f: impl Fn(&Mat) -> f64, x: &Mat) -> Mat {
        let eps = 1e-6;
        let mut g = Mat::zeros(x.rows, x.cols);
        for i in 0..x.data.len() {
            let mut p = x.clone();
            p.data[i] += eps;
            let mut m = x.clone();
            m.data[i] -= eps;
            g.data[i] = (f(&p) - f(&m)) / (2.0 * eps);
        }
        g
    }

    fn sample(rows: usize, cols: usize, salt: f64) -> Mat {
        Mat::from_vec(rows, cols, (0..rows * cols).map(|i| ((i as f64 + salt) * 1.37).sin()).collect())
    }

    fn check(build: impl Fn(&mut Tape, Var) -> Var, x: Mat) {
        let f = |m: &Mat| {
            let mut t = Tape::new();
            let v = t.param(0, m);
            let y = build(&mut t, v);
            t.value(y).data[0]
        };
        let mut t = Tape::new();
        let v = t.param(0, &x);
        let y = build(&mut t, v);
        let g = t.backward(y, 1.0).remove(0).1;
        let n = numeric(f, &x);
        for (a, b) in g.data.iter().zip(&n.data) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "analytic {a} vs numeric {b}");
        }
    }

    /// Reduces any matrix to a scalar through a fixed random projection.
    fn reduce(t: &mut Tape, y: Var) -> Var {
        let (r, c) = t.value(y).shape();
        let w = t.input(sample(c, 1, 0.5));
        let z = t.matmul(y, w);
        let ones = t.input(Mat::filled(1, r, 1.0));
        t.matmul(ones, z)
    }

    #[test]
    fn layer_norm_gradient() {
        check(
            |t, x| {
                let g = t.input(sample(1, 4, 2.0));
                let b = t.input(sample(1, 4, 3.0));
                let y = t.layer_norm(x, g, b);
                reduce(t, y)
            },
            sample(3, 4, 1.0),
        );
    }

    #[test]
    fn gelu_and_softmax_gradient() {
        check(
            |t, x| {
                let y = t.gelu(x);
                let s = t.matmul_bt(y, x);
                let p = t.causal_softmax(s);
                reduce(t, p)
            },
            sample(4, 3, 0.2),
        );
    }

    #[test]
    fn gather_rows_concat_gradient() {
        check(
            |t, x| {
                let a = t.gather(x, vec![2, 0, 2]);
                let b = t.rows(x, vec![1]);
                let c = t.concat(vec![a, b]);
                let bias = t.rows(x, vec![0]);
                let d = t.add_row(c, bias);
                let e = t.scale(d, 0.7);
                let f = t.add(e, c);
                reduce(t, f)
            },
            sample(3, 2, 4.0),
        );
    }

    #[test]
    fn masked_cross_entropy_gradient() {
        let allowed = vec![vec![true, false, true, true], vec![false, true, true, false]];
        check(
            |t, x| t.cross_entropy(x, vec![3, 1], Some(&allowed)),
            sample(2, 4, 5.0),
        );
    }

    #[test]
    fn uniform_logits_give_log_m() {
        let mut t = Tape::new();
        let z = t.input(Mat::zeros(1, 5));
        let allowed = vec![vec![true, true, false, true, false]];
        let l = t.cross_entropy(z, vec![1], Some(&allowed));
        assert!((t.value(l).data[0] - 3f64.ln()).abs() < 1e-15);
        let l = t.cross_entropy(z, vec![1], None);
        assert!((t.value(l).data[0] - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn causal_softmax_ignores_future_columns() {
        let mut t = Tape::new();
        let s = t.input(sample(3, 3, 0.0));
        let p = t.causal_softmax(s);
        let p = t.value(p);
        assert_eq!(p.at(0, 1), 0.0);
        assert_eq!(p.at(1, 2), 0.0);
        assert!((p.row(2).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
