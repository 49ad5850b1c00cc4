//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Operations are recorded in execution order; [`Tape::backward`] replays
//! them in reverse and accumulates adjoints. Constants and nodes produced by
//! [`Tape::stop_gradient`] never receive or pass on an adjoint.

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::tree::{BinaryOp, Partials, UnaryOp};

/// An elementwise function of the three channels whose partial derivatives
/// are available in closed form (activation trees and fixed baselines).
pub trait ChannelActivation: Sync {
    fn partials(&self, z: &[f64], m: &[f64], c: &[f64]) -> Result<Partials>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    StopGradient,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    MatMul(Var, Var),
    MatMulTransposeB(Var, Var),
    AddBias(Var, Var),
    Activation {
        z: Var,
        m: Var,
        c: Var,
        dz: Vec<f64>,
        dm: Vec<f64>,
        dc: Vec<f64>,
    },
    RowMix {
        w: Var,
        ch: Var,
        routing: Matrix,
        row_sums: Vec<f64>,
    },
    OneMinus(Var),
    Clip01(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Matrix,
        labels: Vec<usize>,
    },
    Sum(Var),
}

struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`; zeros when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.adjoints[v.0] {
            Some(m) => m.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

/// `(|W| + eps)` row-normalized, together with the row sums.
pub fn routing_matrix(w: &Matrix, eps: f64) -> (Matrix, Vec<f64>) {
    let (rows, cols) = w.shape();
    let mut data: Vec<f64> = w.as_slice().iter().map(|v| v.abs() + eps).collect();
    let mut sums = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &mut data[r * cols..(r + 1) * cols];
        let s: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= s;
        }
        sums.push(s);
    }
    (Matrix::from_vec_unchecked(rows, cols, data), sums)
}

fn accumulate(slot: &mut Option<Matrix>, add: Matrix) {
    match slot {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(add.as_slice()) {
                *a += b;
            }
        }
        None => *slot = Some(add),
    }
}

fn elementwise(a: &Matrix, f: impl Fn(usize, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().enumerate().map(|(i, &v)| f(i, v)).collect();
    Matrix::from_vec_unchecked(a.rows(), a.cols(), data)
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input (network parameter).
    pub fn parameter(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Copies `v`'s value into a node that blocks adjoint flow.
    pub fn stop_gradient(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.push(Op::StopGradient, value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Result<Var> {
        let value = self.value(a).map(op.token(), |u| op.apply(u))?;
        let rg = self.rg(a);
        Ok(self.push(Op::Unary(op, a), value, rg))
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), op.token(), |u, v| op.apply(u, v))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Binary(op, a, b), value, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// `a · wᵀ`.
    pub fn matmul_transpose_b(&mut self, a: Var, w: Var) -> Result<Var> {
        let value = self.value(a).matmul_transpose_b(self.value(w))?;
        let rg = self.rg(a) || self.rg(w);
        Ok(self.push(Op::MatMulTransposeB(a, w), value, rg))
    }

    /// Adds the `1 × cols` bias row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Op::AddBias(a, bias), value, rg))
    }

    pub fn activation(&mut self, f: &dyn ChannelActivation, z: Var, m: Var, c: Var) -> Result<Var> {
        let (zv, mv, cv) = (self.value(z), self.value(m), self.value(c));
        zv.same_shape(mv, "activation m")?;
        zv.same_shape(cv, "activation c")?;
        let p = f.partials(zv.as_slice(), mv.as_slice(), cv.as_slice())?;
        let value = Matrix::from_vec(zv.rows(), zv.cols(), p.value)
            .map_err(|_| Error::NonFinite("activation".into()))?;
        let rg = self.rg(z) || self.rg(m) || self.rg(c);
        Ok(self.push(
            Op::Activation {
                z,
                m,
                c,
                dz: p.dx,
                dm: p.dm,
                dc: p.dc,
            },
            value,
            rg,
        ))
    }

    /// `ch · Ãᵀ` where `Ã` is the row-normalized `|W| + eps`; the mixing
    /// step of channel propagation, before clipping.
    pub fn row_mix(&mut self, w: Var, ch: Var, eps: f64) -> Result<Var> {
        let (routing, row_sums) = routing_matrix(self.value(w), eps);
        let value = self.value(ch).matmul_transpose_b(&routing)?;
        let rg = self.rg(w) || self.rg(ch);
        Ok(self.push(
            Op::RowMix {
                w,
                ch,
                routing,
                row_sums,
            },
            value,
            rg,
        ))
    }

    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map("one_minus", |v| 1.0 - v)?;
        let rg = self.rg(a);
        Ok(self.push(Op::OneMinus(a), value, rg))
    }

    pub fn clip01(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map("clip01", |v| v.clamp(0.0, 1.0))?;
        let rg = self.rg(a);
        Ok(self.push(Op::Clip01(a), value, rg))
    }

    /// Mean softmax cross-entropy of `logits` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} logit rows for {} labels",
                lv.rows(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y >= lv.cols()) {
            return Err(Error::Label("label exceeds logit width".into()));
        }
        let probs = softmax_rows(lv);
        let n = labels.len().max(1) as f64;
        let loss: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -(log_softmax_at(lv.row(i), y)))
            .sum::<f64>()
            / n;
        if !loss.is_finite() {
            return Err(Error::Divergence("non-finite loss".into()));
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            Matrix::from_vec_unchecked(1, 1, vec![loss]),
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Op::Sum(a), Matrix::from_vec_unchecked(1, 1, vec![s]), rg)
    }

    /// Back-propagates from a `1 × 1` output node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::Dimension("backward needs a scalar output".into()));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(Matrix::from_vec_unchecked(1, 1, vec![1.0]));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(node, &g, &mut adj)?;
            adj[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                adj[i] = None;
            }
        }
        for g in adj.iter().flatten() {
            if g.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence("non-finite adjoint".into()));
            }
        }
        Ok(Gradients {
            adjoints: adj,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn send(&self, adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if self.rg(v) {
            accumulate(&mut adj[v.0], g);
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, adj: &mut [Option<Matrix>]) -> Result<()> {
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Add(a, b) => {
                self.send(adj, *a, g.clone());
                self.send(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.send(adj, *a, g.clone());
                self.send(adj, *b, elementwise(g, |_, v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.send(adj, *a, elementwise(g, |i, v| v * bv.as_slice()[i]));
                self.send(adj, *b, elementwise(g, |i, v| v * av.as_slice()[i]));
            }
            Op::Unary(op, a) => {
                let av = self.value(*a);
                self.send(adj, *a, elementwise(g, |i, v| v * op.derivative(av.as_slice()[i])));
            }
            Op::Binary(op, a, b) => {
                let (av, bv) = (self.value(*a).as_slice(), self.value(*b).as_slice());
                let parts: Vec<(f64, f64)> = av.iter().zip(bv).map(|(&x, &y)| op.partials(x, y)).collect();
                self.send(adj, *a, elementwise(g, |i, v| v * parts[i].0));
                self.send(adj, *b, elementwise(g, |i, v| v * parts[i].1));
            }
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul_transpose_b(self.value(*b))?;
                    self.send(adj, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).transpose_a_matmul(g)?;
                    self.send(adj, *b, gb);
                }
            }
            Op::MatMulTransposeB(a, w) => {
                if self.rg(*a) {
                    let ga = g.matmul(self.value(*w))?;
                    self.send(adj, *a, ga);
                }
                if self.rg(*w) {
                    let gw = g.transpose_a_matmul(self.value(*a))?;
                    self.send(adj, *w, gw);
                }
            }
            Op::AddBias(a, bias) => {
                self.send(adj, *a, g.clone());
                self.send(adj, *bias, g.column_sums());
            }
            Op::Activation { z, m, c, dz, dm, dc } => {
                self.send(adj, *z, elementwise(g, |i, v| v * dz[i]));
                self.send(adj, *m, elementwise(g, |i, v| v * dm[i]));
                self.send(adj, *c, elementwise(g, |i, v| v * dc[i]));
            }
            Op::RowMix {
                w,
                ch,
                routing,
                row_sums,
            } => {
                if self.rg(*ch) {
                    self.send(adj, *ch, g.matmul(routing)?);
                }
                if self.rg(*w) {
                    let chv = self.value(*ch);
                    let out = &node.value;
                    let wv = self.value(*w);
                    let (d_out, d_in) = wv.shape();
                    // dL/dA_ij = Σ_b g[b,i] (ch[b,j] - out[b,i]) / S_i
                    let g_ch = g.transpose_a_matmul(chv)?;
                    let mut gw = vec![0.0; d_out * d_in];
                    for i in 0..d_out {
                        let go: f64 = (0..g.rows()).map(|b| g.get(b, i) * out.get(b, i)).sum();
                        for j in 0..d_in {
                            let da = (g_ch.get(i, j) - go) / row_sums[i];
                            let wij = wv.get(i, j);
                            let s = if wij > 0.0 {
                                1.0
                            } else if wij < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            gw[i * d_in + j] = da * s;
                        }
                    }
                    self.send(adj, *w, Matrix::from_vec_unchecked(d_out, d_in, gw));
                }
            }
            Op::OneMinus(a) => self.send(adj, *a, elementwise(g, |_, v| -v)),
            Op::Clip01(a) => {
                let av = self.value(*a);
                self.send(
                    adj,
                    *a,
                    elementwise(g, |i, v| {
                        let x = av.as_slice()[i];
                        if (0.0..=1.0).contains(&x) {
                            v
                        } else {
                            0.0
                        }
                    }),
                );
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
            } => {
                let scale = g.get(0, 0) / labels.len().max(1) as f64;
                let k = probs.cols();
                let data = probs
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(idx, &p)| {
                        let (r, col) = (idx / k, idx % k);
                        let y = if labels[r] == col { 1.0 } else { 0.0 };
                        (p - y) * scale
                    })
                    .collect();
                self.send(adj, *logits, Matrix::from_vec_unchecked(probs.rows(), k, data));
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                let s = g.get(0, 0);
                self.send(adj, *a, Matrix::from_vec_unchecked(r, c, vec![s; r * c]));
            }
        }
        Ok(())
    }
}

fn log_softmax_at(row: &[f64], y: usize) -> f64 {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    row[y] - lse
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let (n, k) = logits.shape();
    let mut out = Vec::with_capacity(n * k);
    for r in 0..n {
        let row = logits.row(r);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / s));
    }
    Matrix::from_vec_unchecked(n, k, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff::{close, finite_difference_gradient};
    use crate::numeric::RngStream;

    fn rand_matrix(rng: &mut RngStream, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
    }

    /// Checks tape adjoints of `build` against central differences for every
    /// entry of every parameter.
    fn check(params: Vec<Matrix>, build: impl Fn(&mut Tape, &[Var]) -> Var, skip: impl Fn(&[Matrix]) -> bool) {
        if skip(&params) {
            return;
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.parameter(p.clone())).collect();
        let out = build(&mut tape, &vars);
        let grads = tape.backward(out).unwrap();
        let flat: Vec<f64> = params.iter().flat_map(|p| p.as_slice().to_vec()).collect();
        let shapes: Vec<(usize, usize)> = params.iter().map(|p| p.shape()).collect();
        let eval = |x: &[f64]| {
            let mut t = Tape::new();
            let mut off = 0;
            let vs: Vec<Var> = shapes
                .iter()
                .map(|&(r, c)| {
                    let m = Matrix::from_vec(r, c, x[off..off + r * c].to_vec()).unwrap();
                    off += r * c;
                    t.parameter(m)
                })
                .collect();
            let o = build(&mut t, &vs);
            t.value(o).get(0, 0)
        };
        let fd = finite_difference_gradient(eval, &flat, 1e-5).unwrap();
        let ad: Vec<f64> = vars.iter().flat_map(|&v| grads.wrt(v).into_vec()).collect();
        for (a, f) in ad.iter().zip(&fd) {
            assert!(close(*a, *f, 1e-4, 1e-6), "tape {a} vs fd {f}");
        }
    }

    #[test]
    fn matmul_add_mul_adjoints() {
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            let a = rand_matrix(&mut rng, 3, 4, -1.0, 1.0);
            let b = rand_matrix(&mut rng, 4, 2, -1.0, 1.0);
            let c = rand_matrix(&mut rng, 3, 2, -1.0, 1.0);
            check(
                vec![a, b, c],
                |t, v| {
                    let p = t.matmul(v[0], v[1]).unwrap();
                    let q = t.mul(p, v[2]).unwrap();
                    let r = t.add(q, p).unwrap();
                    let s = t.sub(r, v[2]).unwrap();
                    t.sum(s)
                },
                |_| false,
            );
        }
    }

    #[test]
    fn every_unary_operator_adjoint() {
        let mut rng = RngStream::new(2);
        for op in UnaryOp::ALL {
            let mut checked = 0;
            while checked < 100 {
                let a = rand_matrix(&mut rng, 1, 3, -3.0, 3.0);
                if a.as_slice().iter().any(|&u| op.kink_distance(u) < 1e-3) {
                    continue;
                }
                check(
                    vec![a],
                    |t, v| {
                        let u = t.unary(op, v[0]).unwrap();
                        t.sum(u)
                    },
                    |_| false,
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn every_binary_operator_adjoint() {
        let mut rng = RngStream::new(3);
        for op in BinaryOp::ALL {
            let mut checked = 0;
            while checked < 100 {
                let a = rand_matrix(&mut rng, 1, 3, -3.0, 3.0);
                let b = rand_matrix(&mut rng, 1, 3, -3.0, 3.0);
                let near = a
                    .as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .any(|(&x, &y)| op.kink_distance(x, y) < 1e-3 || (op == BinaryOp::Div && y.abs() < 0.05));
                if near {
                    continue;
                }
                check(
                    vec![a, b],
                    |t, v| {
                        let u = t.binary(op, v[0], v[1]).unwrap();
                        t.sum(u)
                    },
                    |_| false,
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn linear_model_loss_matches_finite_differences() {
        // Two-parameter linear model y = w*x + b on three points, squared loss.
        let xs = [0.5, -1.0, 2.0];
        let ys = [1.0, -0.5, 3.0];
        let loss = |p: &[f64]| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| {
                    let r = p[0] * x + p[1] - y;
                    r * r
                })
                .sum()
        };
        let p0 = [0.3, -0.2];
        let mut t = Tape::new();
        let w = t.parameter(Matrix::from_rows(&[vec![p0[0]]]).unwrap());
        let b = t.parameter(Matrix::from_rows(&[vec![p0[1]]]).unwrap());
        let x = t.constant(Matrix::from_vec(3, 1, xs.to_vec()).unwrap());
        let y = t.constant(Matrix::from_vec(3, 1, ys.to_vec()).unwrap());
        let wx = t.matmul(x, w).unwrap();
        let pred = t.add_bias(wx, b).unwrap();
        let r = t.sub(pred, y).unwrap();
        let sq = t.mul(r, r).unwrap();
        let l = t.sum(sq);
        assert!((t.value(l).get(0, 0) - loss(&p0)).abs() < 1e-12);
        let g = t.backward(l).unwrap();
        let fd = finite_difference_gradient(loss, &p0, 1e-5).unwrap();
        assert!(close(g.wrt(w).get(0, 0), fd[0], 1e-4, 1e-6));
        assert!(close(g.wrt(b).get(0, 0), fd[1], 1e-4, 1e-6));
    }

    #[test]
    fn stop_gradient_blocks_adjoints() {
        let mut t = Tape::new();
        let a = t.parameter(Matrix::from_rows(&[vec![2.0, 3.0]]).unwrap());
        let s = t.stop_gradient(a);
        let p = t.mul(a, s).unwrap();
        let l = t.sum(p);
        let g = t.backward(l).unwrap();
        // only the direct path contributes: d/da (a * const) = const
        assert_eq!(g.wrt(a).as_slice(), &[2.0, 3.0]);
        assert_eq!(g.wrt(s).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn row_mix_and_cross_entropy_adjoints() {
        let mut rng = RngStream::new(4);
        for _ in 0..100 {
            let w = rand_matrix(&mut rng, 3, 4, -1.0, 1.0);
            let ch = rand_matrix(&mut rng, 2, 4, 0.0, 1.0);
            let skip = |p: &[Matrix]| p[0].as_slice().iter().any(|v| v.abs() < 1e-3);
            check(
                vec![w, ch],
                |t, v| {
                    let o = t.one_minus(v[1]).unwrap();
                    let mixed = t.row_mix(v[0], o, 1e-8).unwrap();
                    let clipped = t.clip01(mixed).unwrap();
                    t.softmax_cross_entropy(clipped, &[0, 2]).unwrap()
                },
                skip,
            );
        }
    }
}
