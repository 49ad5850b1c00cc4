use super::ops::{BinaryOp, Channel, UnaryOp, CONSTANTS};
use super::{ActivationTree, Node};
use crate::numeric::RngStream;

/// Probability that a terminal draw picks a channel rather than a constant.
pub const CHANNEL_PROBABILITY: f64 = 0.7;
/// Probability that a `grow` node below the depth bound becomes a terminal.
pub const GROW_TERMINAL_PROBABILITY: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMethod {
    Grow,
    Full,
}

/// Channels the search may reference. Constants are always available.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TerminalSet {
    channels: Vec<Channel>,
}

impl Default for TerminalSet {
    fn default() -> Self {
        TerminalSet {
            channels: Channel::ALL.to_vec(),
        }
    }
}

impl TerminalSet {
    pub fn new(mut channels: Vec<Channel>) -> Self {
        channels.sort();
        channels.dedup();
        TerminalSet { channels }
    }

    pub fn without(&self, ch: Channel) -> Self {
        TerminalSet::new(self.channels.iter().copied().filter(|&c| c != ch).collect())
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn allows(&self, ch: Channel) -> bool {
        self.channels.contains(&ch)
    }

    pub fn random_terminal(&self, rng: &mut RngStream) -> Node {
        if !self.channels.is_empty() && rng.bernoulli(CHANNEL_PROBABILITY) {
            Node::Terminal(self.channels[rng.below(self.channels.len())])
        } else {
            Node::Constant(CONSTANTS[rng.below(CONSTANTS.len())])
        }
    }

    /// Every terminal in the set: allowed channels followed by constants.
    pub fn all_terminals(&self) -> Vec<Node> {
        self.channels
            .iter()
            .map(|&c| Node::Terminal(c))
            .chain(CONSTANTS.iter().map(|&v| Node::Constant(v)))
            .collect()
    }
}

const FUNCTION_COUNT: usize = UnaryOp::ALL.len() + BinaryOp::ALL.len();

fn random_function(
    rng: &mut RngStream,
    depth_left: usize,
    method: InitMethod,
    terminals: &TerminalSet,
) -> Node {
    let k = rng.below(FUNCTION_COUNT);
    if k < UnaryOp::ALL.len() {
        Node::Unary(
            UnaryOp::ALL[k],
            Box::new(gen(rng, depth_left - 1, method, terminals)),
        )
    } else {
        let op = BinaryOp::ALL[k - UnaryOp::ALL.len()];
        let a = gen(rng, depth_left - 1, method, terminals);
        let b = gen(rng, depth_left - 1, method, terminals);
        Node::Binary(op, Box::new(a), Box::new(b))
    }
}

fn gen(rng: &mut RngStream, depth_left: usize, method: InitMethod, terminals: &TerminalSet) -> Node {
    if depth_left <= 1 {
        return terminals.random_terminal(rng);
    }
    match method {
        InitMethod::Full => random_function(rng, depth_left, method, terminals),
        InitMethod::Grow => {
            if rng.bernoulli(GROW_TERMINAL_PROBABILITY) {
                terminals.random_terminal(rng)
            } else {
                random_function(rng, depth_left, method, terminals)
            }
        }
    }
}

/// Random tree of depth at most `max_depth` (exactly `max_depth` for
/// [`InitMethod::Full`]). Operators are drawn uniformly from the combined
/// unary and binary sets.
pub fn random_tree(
    rng: &mut RngStream,
    max_depth: usize,
    method: InitMethod,
    terminals: &TerminalSet,
) -> ActivationTree {
    ActivationTree::new(gen(rng, max_depth.max(1), method, terminals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_one_is_a_leaf() {
        let mut rng = RngStream::new(3);
        for _ in 0..200 {
            let t = random_tree(&mut rng, 1, InitMethod::Grow, &TerminalSet::default());
            assert_eq!(t.size(), 1);
        }
    }

    #[test]
    fn grow_respects_bound_and_full_hits_it() {
        let mut rng = RngStream::new(11);
        let mut seen = [false; 4];
        for _ in 0..1000 {
            let t = random_tree(&mut rng, 3, InitMethod::Grow, &TerminalSet::default());
            assert!((1..=3).contains(&t.depth()));
            seen[t.depth()] = true;
            let f = random_tree(&mut rng, 3, InitMethod::Full, &TerminalSet::default());
            assert_eq!(f.depth(), 3);
        }
        assert!(seen[1] && seen[2] && seen[3]);
    }

    #[test]
    fn fixed_seed_gives_same_sequence() {
        let draw = |seed| {
            let mut rng = RngStream::new(seed);
            (0..20)
                .map(|_| random_tree(&mut rng, 3, InitMethod::Grow, &TerminalSet::default()).to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn restricted_terminal_set_is_respected() {
        let ts = TerminalSet::default().without(Channel::C);
        let mut rng = RngStream::new(2);
        for _ in 0..500 {
            let t = random_tree(&mut rng, 3, InitMethod::Full, &ts);
            assert!(!t.references(Channel::C));
        }
    }

    #[test]
    fn channel_vs_constant_ratio() {
        let ts = TerminalSet::default();
        let mut rng = RngStream::new(8);
        let n = 20_000;
        let channels = (0..n)
            .filter(|_| matches!(ts.random_terminal(&mut rng), Node::Terminal(_)))
            .count();
        let frac = channels as f64 / n as f64;
        assert!((frac - 0.7).abs() < 0.02, "{frac}");
    }
}
