use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::RngStream;
use crate::tree::{random_tree, ActivationTree, BinaryOp, InitMethod, Node, TerminalSet, UnaryOp};

/// Attempts before crossover gives up and returns the parents.
pub const CROSSOVER_RETRIES: usize = 10;

/// What the softmax is applied to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScale {
    /// Fitness values as they are.
    #[default]
    Raw,
    /// Fitness ranks mapped to `[0, 1]`, ties sharing their mean rank.
    Rank,
}

fn scaled(fitness: &[f64], scale: SelectionScale) -> Vec<f64> {
    match scale {
        SelectionScale::Raw => fitness.to_vec(),
        SelectionScale::Rank => {
            let n = fitness.len();
            if n < 2 {
                return vec![0.0; n];
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]));
            let mut out = vec![0.0; n];
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j + 1 < n && fitness[order[j + 1]] == fitness[order[i]] {
                    j += 1;
                }
                for &o in &order[i..=j] {
                    out[o] = (i + j) as f64 / 2.0 / (n - 1) as f64;
                }
                i = j + 1;
            }
            out
        }
    }
}

/// Selection probabilities `∝ exp(F_i / temperature)`.
pub fn softmax_probabilities(fitness: &[f64], temperature: f64, scale: SelectionScale) -> Result<Vec<f64>> {
    if fitness.is_empty() {
        return Err(Error::Selection("empty population".into()));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Selection(format!("temperature {temperature} must be positive")));
    }
    let f = scaled(fitness, scale);
    let top = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = f.iter().map(|v| ((v - top) / temperature).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// `k` indices drawn independently with softmax probabilities.
pub fn softmax_select(
    fitness: &[f64],
    k: usize,
    temperature: f64,
    scale: SelectionScale,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let p = softmax_probabilities(fitness, temperature, scale)?;
    let mut cumulative = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in &p {
        acc += v;
        cumulative.push(acc);
    }
    Ok((0..k)
        .map(|_| {
            let u = rng.unit() * acc;
            cumulative.partition_point(|&c| c <= u).min(p.len() - 1)
        })
        .collect())
}

/// Swaps uniformly chosen subtrees. When no attempt keeps both children
/// within `max_depth`, the parents are returned.
pub fn crossover(
    a: &ActivationTree,
    b: &ActivationTree,
    max_depth: usize,
    rng: &mut RngStream,
) -> (ActivationTree, ActivationTree) {
    let (na, nb) = (a.size(), b.size());
    for _ in 0..CROSSOVER_RETRIES {
        let (i, j) = (rng.below(na), rng.below(nb));
        let sa = a.subtree(i).expect("index below size");
        let sb = b.subtree(j).expect("index below size");
        let ca = a.replace_subtree(i, sb);
        let cb = b.replace_subtree(j, sa);
        if ca.depth() <= max_depth && cb.depth() <= max_depth {
            return (ca, cb);
        }
    }
    (a.clone(), b.clone())
}

fn point_alternative(node: &Node, terminals: &TerminalSet, rng: &mut RngStream) -> Option<Node> {
    fn pick<T: Copy + PartialEq>(all: &[T], own: T, rng: &mut RngStream) -> Option<T> {
        let others: Vec<T> = all.iter().copied().filter(|&o| o != own).collect();
        (!others.is_empty()).then(|| others[rng.below(others.len())])
    }
    match node {
        Node::Unary(op, child) => pick(&UnaryOp::ALL, *op, rng).map(|o| Node::Unary(o, child.clone())),
        Node::Binary(op, l, r) => pick(&BinaryOp::ALL, *op, rng).map(|o| Node::Binary(o, l.clone(), r.clone())),
        leaf => {
            let others: Vec<Node> = terminals.all_terminals().into_iter().filter(|t| t != leaf).collect();
            (!others.is_empty()).then(|| others[rng.below(others.len())].clone())
        }
    }
}

/// Either replaces a random subtree with a fresh grow-tree that fits the
/// depth budget, or swaps one node for a same-arity alternative; each with
/// probability one half.
pub fn mutate(tree: &ActivationTree, max_depth: usize, terminals: &TerminalSet, rng: &mut RngStream) -> ActivationTree {
    let nodes = tree.nodes();
    let i = rng.below(nodes.len());
    let (node, level) = nodes[i];
    if rng.bernoulli(0.5) {
        let budget = max_depth.saturating_sub(level - 1).max(1);
        tree.replace_subtree(i, random_tree(rng, budget, InitMethod::Grow, terminals))
    } else {
        match point_alternative(node, terminals, rng) {
            Some(n) => tree.replace_subtree(i, ActivationTree::new(n)),
            None => tree.clone(),
        }
    }
}

/// Ramped half-and-half: depths cycle through `2..=max_depth`, methods
/// alternate between grow and full.
pub fn ramped_population(size: usize, max_depth: usize, terminals: &TerminalSet, rng: &mut RngStream) -> Vec<ActivationTree> {
    let depths: Vec<usize> = if max_depth >= 2 {
        (2..=max_depth).collect()
    } else {
        vec![1]
    };
    (0..size)
        .map(|i| {
            let depth = depths[(i / 2) % depths.len()];
            let method = if i % 2 == 0 { InitMethod::Grow } else { InitMethod::Full };
            random_tree(rng, depth, method, terminals)
        })
        .collect()
}
