//! Multivariate activation trees `f(x, m, c)`.
//!
//! A tree is a symbolic expression over the value channel `x`, the
//! missingness channel `m`, the confidence channel `c` and a fixed pool of
//! constants, combined with the unary and binary operators in [`ops`].
//! Evaluation is elementwise and total: every operator is safeguarded so a
//! finite input never yields NaN or infinity.

pub mod ops;
mod parse;
mod random;

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

pub use ops::{BinaryOp, Channel, UnaryOp, CONSTANTS};
pub use random::{random_tree, InitMethod, TerminalSet};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Terminal(Channel),
    Constant(f64),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

/// Size, depth and channel usage of a tree.
///
/// Depth counts nodes on the longest root-to-leaf path, so a lone terminal
/// has depth 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeStats {
    pub size: usize,
    pub depth: usize,
    pub channels_used: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTree {
    root: Node,
}

/// Values of `f` together with its partial derivatives in each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Partials {
    pub value: Vec<f64>,
    pub dx: Vec<f64>,
    pub dm: Vec<f64>,
    pub dc: Vec<f64>,
}

impl Node {
    fn size(&self) -> usize {
        match self {
            Node::Terminal(_) | Node::Constant(_) => 1,
            Node::Unary(_, a) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Terminal(_) | Node::Constant(_) => 1,
            Node::Unary(_, a) => 1 + a.depth(),
            Node::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn collect_channels(&self, out: &mut BTreeSet<Channel>) {
        match self {
            Node::Terminal(ch) => {
                out.insert(*ch);
            }
            Node::Constant(_) => {}
            Node::Unary(_, a) => a.collect_channels(out),
            Node::Binary(_, a, b) => {
                a.collect_channels(out);
                b.collect_channels(out);
            }
        }
    }

    fn eval_point(&self, x: f64, m: f64, c: f64) -> f64 {
        match self {
            Node::Terminal(Channel::X) => x,
            Node::Terminal(Channel::M) => m,
            Node::Terminal(Channel::C) => c,
            Node::Constant(v) => *v,
            Node::Unary(op, a) => op.apply(a.eval_point(x, m, c)),
            Node::Binary(op, a, b) => op.apply(a.eval_point(x, m, c), b.eval_point(x, m, c)),
        }
    }

    fn eval_margin(&self, x: f64, m: f64, c: f64) -> (f64, f64) {
        match self {
            Node::Terminal(_) | Node::Constant(_) => (self.eval_point(x, m, c), f64::INFINITY),
            Node::Unary(op, a) => {
                let (u, ma) = a.eval_margin(x, m, c);
                (op.apply(u), ma.min(op.kink_distance(u)))
            }
            Node::Binary(op, a, b) => {
                let (u, ma) = a.eval_margin(x, m, c);
                let (v, mb) = b.eval_margin(x, m, c);
                (op.apply(u, v), ma.min(mb).min(op.kink_distance(u, v)))
            }
        }
    }

    fn eval_vec(&self, x: &[f64], m: &[f64], c: &[f64]) -> Vec<f64> {
        match self {
            Node::Terminal(Channel::X) => x.to_vec(),
            Node::Terminal(Channel::M) => m.to_vec(),
            Node::Terminal(Channel::C) => c.to_vec(),
            Node::Constant(v) => vec![*v; x.len()],
            Node::Unary(op, a) => {
                let mut u = a.eval_vec(x, m, c);
                for v in &mut u {
                    *v = op.apply(*v);
                }
                u
            }
            Node::Binary(op, a, b) => {
                let mut u = a.eval_vec(x, m, c);
                let w = b.eval_vec(x, m, c);
                for (p, q) in u.iter_mut().zip(w) {
                    *p = op.apply(*p, q);
                }
                u
            }
        }
    }

    /// Forward-mode evaluation carrying derivatives with respect to all
    /// three channels.
    fn eval_partials(&self, x: &[f64], m: &[f64], c: &[f64]) -> Partials {
        let n = x.len();
        match self {
            Node::Terminal(ch) => {
                let (value, dx, dm, dc) = match ch {
                    Channel::X => (x.to_vec(), vec![1.0; n], vec![0.0; n], vec![0.0; n]),
                    Channel::M => (m.to_vec(), vec![0.0; n], vec![1.0; n], vec![0.0; n]),
                    Channel::C => (c.to_vec(), vec![0.0; n], vec![0.0; n], vec![1.0; n]),
                };
                Partials { value, dx, dm, dc }
            }
            Node::Constant(v) => Partials {
                value: vec![*v; n],
                dx: vec![0.0; n],
                dm: vec![0.0; n],
                dc: vec![0.0; n],
            },
            Node::Unary(op, a) => {
                let mut p = a.eval_partials(x, m, c);
                for i in 0..n {
                    let (v, d) = op.apply_with_derivative(p.value[i]);
                    p.value[i] = v;
                    p.dx[i] *= d;
                    p.dm[i] *= d;
                    p.dc[i] *= d;
                }
                p
            }
            Node::Binary(op, a, b) => {
                let mut p = a.eval_partials(x, m, c);
                let q = b.eval_partials(x, m, c);
                for i in 0..n {
                    let (v, da, db) = op.apply_with_partials(p.value[i], q.value[i]);
                    p.value[i] = v;
                    p.dx[i] = da * p.dx[i] + db * q.dx[i];
                    p.dm[i] = da * p.dm[i] + db * q.dm[i];
                    p.dc[i] = da * p.dc[i] + db * q.dc[i];
                }
                p
            }
        }
    }

    fn fmt_prefix(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Terminal(ch) => write!(f, "{ch}"),
            Node::Constant(v) => write!(f, "{v}"),
            Node::Unary(op, a) => {
                write!(f, "({op} ")?;
                a.fmt_prefix(f)?;
                f.write_str(")")
            }
            Node::Binary(op, a, b) => {
                write!(f, "({op} ")?;
                a.fmt_prefix(f)?;
                f.write_str(" ")?;
                b.fmt_prefix(f)?;
                f.write_str(")")
            }
        }
    }

    fn infix(&self, top: bool) -> String {
        match self {
            Node::Terminal(ch) => ch.token().to_string(),
            Node::Constant(v) => format!("{v}"),
            Node::Unary(op, a) => match op {
                UnaryOp::Identity => a.infix(top),
                UnaryOp::Negate => format!("-{}", a.infix(false)),
                UnaryOp::Abs => format!("|{}|", a.infix(true)),
                UnaryOp::Square => format!("{}^2", a.infix(false)),
                UnaryOp::Cube => format!("{}^3", a.infix(false)),
                UnaryOp::LogAbs => format!("log|{}|", a.infix(true)),
                UnaryOp::Sqrt => format!("sqrt|{}|", a.infix(true)),
                other => format!("{}({})", other.token(), a.infix(true)),
            },
            Node::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                    BinaryOp::Div => "/",
                    BinaryOp::Max | BinaryOp::Min => {
                        return format!("{}({}, {})", op.token(), a.infix(true), b.infix(true));
                    }
                };
                let body = format!("{} {sym} {}", a.infix(false), b.infix(false));
                if top {
                    body
                } else {
                    format!("({body})")
                }
            }
        }
    }

    /// Preorder walk; `visit(node, depth_of_node)` with the root at depth 1.
    fn walk<'a>(&'a self, depth: usize, visit: &mut impl FnMut(&'a Node, usize)) {
        visit(self, depth);
        match self {
            Node::Terminal(_) | Node::Constant(_) => {}
            Node::Unary(_, a) => a.walk(depth + 1, visit),
            Node::Binary(_, a, b) => {
                a.walk(depth + 1, visit);
                b.walk(depth + 1, visit);
            }
        }
    }

    fn replace_at(&mut self, target: usize, counter: &mut usize, replacement: &mut Option<Node>) {
        if *counter == target {
            if let Some(r) = replacement.take() {
                *self = r;
            }
            *counter += self.size();
            return;
        }
        *counter += 1;
        match self {
            Node::Terminal(_) | Node::Constant(_) => {}
            Node::Unary(_, a) => a.replace_at(target, counter, replacement),
            Node::Binary(_, a, b) => {
                a.replace_at(target, counter, replacement);
                if replacement.is_some() {
                    b.replace_at(target, counter, replacement);
                }
            }
        }
    }
}

fn check_constant(v: f64) -> Result<f64> {
    if CONSTANTS.contains(&v) {
        Ok(v)
    } else {
        Err(Error::Config(format!("constant {v} is not in the terminal pool")))
    }
}

impl ActivationTree {
    pub fn new(root: Node) -> Self {
        ActivationTree { root }
    }

    pub fn terminal(ch: Channel) -> Self {
        ActivationTree::new(Node::Terminal(ch))
    }

    pub fn constant(v: f64) -> Result<Self> {
        Ok(ActivationTree::new(Node::Constant(check_constant(v)?)))
    }

    pub fn unary(op: UnaryOp, child: ActivationTree) -> Self {
        ActivationTree::new(Node::Unary(op, Box::new(child.root)))
    }

    pub fn binary(op: BinaryOp, left: ActivationTree, right: ActivationTree) -> Self {
        ActivationTree::new(Node::Binary(op, Box::new(left.root), Box::new(right.root)))
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn channels(&self) -> BTreeSet<Channel> {
        let mut out = BTreeSet::new();
        self.root.collect_channels(&mut out);
        out
    }

    pub fn references(&self, ch: Channel) -> bool {
        self.channels().contains(&ch)
    }

    pub fn stats(&self) -> TreeStats {
        TreeStats {
            size: self.size(),
            depth: self.depth(),
            channels_used: self.channels().len(),
        }
    }

    fn check_lengths(x: &[f64], m: &[f64], c: &[f64]) -> Result<()> {
        if x.len() != m.len() || x.len() != c.len() {
            return Err(Error::Dimension(format!(
                "channel lengths x={}, m={}, c={}",
                x.len(),
                m.len(),
                c.len()
            )));
        }
        Ok(())
    }

    /// Elementwise evaluation.
    pub fn eval(&self, x: &[f64], m: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        Self::check_lengths(x, m, c)?;
        Ok(self.root.eval_vec(x, m, c))
    }

    pub fn eval_point(&self, x: f64, m: f64, c: f64) -> f64 {
        self.root.eval_point(x, m, c)
    }

    /// Values and `∂f/∂x`, treating `m` and `c` as constants.
    pub fn eval_with_grad_x(&self, x: &[f64], m: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.eval_partials(x, m, c)?;
        Ok((p.value, p.dx))
    }

    /// Values and partial derivatives in all three channels.
    pub fn eval_partials(&self, x: &[f64], m: &[f64], c: &[f64]) -> Result<Partials> {
        Self::check_lengths(x, m, c)?;
        Ok(self.root.eval_partials(x, m, c))
    }

    /// Smallest distance, over all operator applications at this input, to
    /// a point where some operator is non-smooth (ReLU at 0, `min`/`max`
    /// ties, clamp boundaries, the sign switch of protected division).
    pub fn kink_margin(&self, x: f64, m: f64, c: f64) -> f64 {
        self.root.eval_margin(x, m, c).1
    }

    /// Conventional infix rendering, e.g. `min(x * m, x) + x`.
    pub fn to_infix(&self) -> String {
        self.root.infix(true)
    }

    /// Nodes in preorder with their depth (root = 1).
    pub fn nodes(&self) -> Vec<(&Node, usize)> {
        let mut out = Vec::with_capacity(self.size());
        self.root.walk(1, &mut |n, d| out.push((n, d)));
        out
    }

    /// A copy of the subtree rooted at preorder index `index`.
    pub fn subtree(&self, index: usize) -> Option<ActivationTree> {
        self.nodes()
            .get(index)
            .map(|(n, _)| ActivationTree::new((*n).clone()))
    }

    /// A new tree with the subtree at preorder index `index` replaced.
    pub fn replace_subtree(&self, index: usize, replacement: ActivationTree) -> ActivationTree {
        let mut root = self.root.clone();
        let mut counter = 0;
        let mut slot = Some(replacement.root);
        root.replace_at(index, &mut counter, &mut slot);
        ActivationTree::new(root)
    }
}

impl fmt::Display for ActivationTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt_prefix(f)
    }
}

impl std::str::FromStr for ActivationTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4() -> ActivationTree {
        "(add (min (mul x m) x) x)".parse().unwrap()
    }

    #[test]
    fn missing_flag_doubles_positive_input() {
        let t = fig4();
        assert_eq!(t.eval(&[0.7], &[0.0], &[1.0]).unwrap(), vec![0.7]);
        assert_eq!(t.eval(&[0.7], &[1.0], &[1.0]).unwrap(), vec![1.4]);
        assert_eq!(t.eval_point(1.0, 1.0, 1.0), 2.0);
    }

    #[test]
    fn terminal_x_is_identity() {
        let t = ActivationTree::terminal(Channel::X);
        let x = vec![-3.0, 0.0, 1e300];
        assert_eq!(t.eval(&x, &[0.0; 3], &[1.0; 3]).unwrap(), x);
    }

    #[test]
    fn division_by_zero_constant_is_guarded() {
        let t: ActivationTree = "(div x 0)".parse().unwrap();
        let v = t.eval(&[2.0], &[0.0], &[1.0]).unwrap()[0];
        assert_eq!(v, 2.0 / 1e-6);
    }

    #[test]
    fn length_mismatch_is_error() {
        let t = fig4();
        assert!(matches!(t.eval(&[1.0, 2.0], &[0.0], &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn gradient_examples() {
        let sq: ActivationTree = "(square x)".parse().unwrap();
        let (_, g) = sq.eval_with_grad_x(&[3.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(g, vec![6.0]);
        let m = ActivationTree::terminal(Channel::M);
        let (_, g) = m.eval_with_grad_x(&[1.0, -2.0], &[1.0, 0.0], &[0.5, 1.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn stats_examples() {
        let s = ActivationTree::terminal(Channel::X).stats();
        assert_eq!((s.size, s.depth, s.channels_used), (1, 1, 1));
        let t: ActivationTree = "(mul (square x) c)".parse().unwrap();
        let s = t.stats();
        assert_eq!((s.size, s.depth, s.channels_used), (4, 3, 2));
        let s = ActivationTree::constant(0.5).unwrap().stats();
        assert_eq!((s.size, s.depth, s.channels_used), (1, 1, 0));
    }

    #[test]
    fn constants_outside_pool_rejected() {
        assert!(ActivationTree::constant(0.3).is_err());
    }

    #[test]
    fn subtree_replacement_by_preorder_index() {
        let t = fig4();
        // preorder: add, min, mul, x, m, x, x
        assert_eq!(t.subtree(2).unwrap().to_string(), "(mul x m)");
        let r = t.replace_subtree(2, ActivationTree::terminal(Channel::C));
        assert_eq!(r.to_string(), "(add (min c x) x)");
        let r = t.replace_subtree(6, ActivationTree::terminal(Channel::M));
        assert_eq!(r.to_string(), "(add (min (mul x m) x) m)");
        let r = t.replace_subtree(0, ActivationTree::terminal(Channel::M));
        assert_eq!(r.to_string(), "m");
        assert_eq!(t.nodes()[3].1, 4);
    }

    #[test]
    fn infix_rendering() {
        assert_eq!(fig4().to_infix(), "min(x * m, x) + x");
    }
}
