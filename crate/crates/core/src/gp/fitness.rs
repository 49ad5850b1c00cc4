use serde::{Deserialize, Serialize};

use crate::data::ChannelizedDataset;
use crate::error::{Error, Result};
use crate::network::{train, Activation, Horizon, MlpConfig};
use crate::numeric::RngStream;
use crate::tree::ActivationTree;

/// Weights of the channel bonus and the size and depth penalties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitnessWeights {
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub lambda_h: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights {
            lambda_d: 0.01,
            lambda_s: 0.0001,
            lambda_h: 0.0002,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitnessStatus {
    Evaluated,
    /// A lone terminal; never trained.
    DepthOne,
    /// Training produced non-finite values.
    Diverged,
    /// Any other evaluation error.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessBreakdown {
    pub a_val: f64,
    /// Node count.
    pub n: usize,
    /// Depth in nodes.
    pub h: usize,
    /// Distinct channels referenced.
    pub d: usize,
    pub d_term: f64,
    pub s_term: f64,
    pub h_term: f64,
    pub total: f64,
    pub status: FitnessStatus,
}

impl FitnessBreakdown {
    pub fn degenerate(&self) -> bool {
        self.status != FitnessStatus::Evaluated
    }

    /// Accuracy plus channel bonus minus size and depth penalties; zero for
    /// degenerate candidates.
    pub fn assemble(tree: &ActivationTree, a_val: f64, status: FitnessStatus, w: &FitnessWeights) -> Self {
        let s = tree.stats();
        let d_term = w.lambda_d * s.channels_used as f64;
        let s_term = w.lambda_s * s.size as f64;
        let h_term = w.lambda_h * (s.depth as f64 - 1.0);
        let total = match status {
            FitnessStatus::Evaluated => a_val + d_term - s_term - h_term,
            _ => 0.0,
        };
        FitnessBreakdown {
            a_val,
            n: s.size,
            h: s.depth,
            d: s.channels_used,
            d_term,
            s_term,
            h_term,
            total,
            status,
        }
    }
}

/// Scores a candidate by its best validation accuracy in `[0, 1]`.
pub trait Evaluator: Sync {
    fn validation_accuracy(&self, tree: &ActivationTree, rng: &mut RngStream) -> Result<f64>;
}

/// Trains a three-channel MLP with the tree in every hidden layer.
pub struct NetworkEvaluator<'d> {
    pub dataset: &'d ChannelizedDataset,
    pub mlp: MlpConfig,
    pub horizon: Horizon,
}

impl Evaluator for NetworkEvaluator<'_> {
    fn validation_accuracy(&self, tree: &ActivationTree, rng: &mut RngStream) -> Result<f64> {
        let ds = self.dataset;
        let model = train(
            &self.mlp,
            Activation::Tree(tree.clone()),
            (&ds.train.state(), &ds.train.y),
            (&ds.val.state(), &ds.val.y),
            ds.class_count,
            self.horizon,
            rng,
        )?;
        Ok(model.best_val_accuracy)
    }
}

/// Whether a network was trained for this candidate.
pub fn needs_training(tree: &ActivationTree) -> bool {
    tree.depth() > 1
}

/// Fitness of one candidate. Depth-one trees score 0 without training;
/// evaluation errors score 0 and are flagged.
pub fn fitness(
    tree: &ActivationTree,
    evaluator: &dyn Evaluator,
    weights: &FitnessWeights,
    rng: &mut RngStream,
) -> FitnessBreakdown {
    if !needs_training(tree) {
        return FitnessBreakdown::assemble(tree, 0.0, FitnessStatus::DepthOne, weights);
    }
    match evaluator.validation_accuracy(tree, rng) {
        Ok(a) if a.is_finite() => FitnessBreakdown::assemble(tree, a, FitnessStatus::Evaluated, weights),
        Ok(_) | Err(Error::Divergence(_)) | Err(Error::NonFinite(_)) => {
            log::debug!("candidate {tree} diverged");
            FitnessBreakdown::assemble(tree, 0.0, FitnessStatus::Diverged, weights)
        }
        Err(e) => {
            log::warn!("candidate {tree} failed: {e}");
            FitnessBreakdown::assemble(tree, 0.0, FitnessStatus::Failed, weights)
        }
    }
}
