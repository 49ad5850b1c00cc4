use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::ChannelActivation;
use crate::tree::ops::{sigmoid, ELU_ALPHA, LEAKY_SLOPE};
use crate::tree::{ActivationTree, Partials};

/// Fixed scalar activations used as baselines. They ignore `m` and `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Baseline {
    Relu,
    Swish,
    LeakyRelu,
    Elu,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Relu, Baseline::Swish, Baseline::LeakyRelu, Baseline::Elu];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Relu => "ReLU",
            Baseline::Swish => "Swish",
            Baseline::LeakyRelu => "LeakyReLU",
            Baseline::Elu => "ELU",
        }
    }

    pub fn from_name(s: &str) -> Option<Baseline> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
    }

    pub fn value_and_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Baseline::Relu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Baseline::Swish => {
                let s = sigmoid(z);
                (z * s, s + z * s * (1.0 - s))
            }
            Baseline::LeakyRelu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (LEAKY_SLOPE * z, LEAKY_SLOPE)
                }
            }
            Baseline::Elu => {
                if z > 0.0 {
                    (z, 1.0)
                } else {
                    (ELU_ALPHA * z.exp_m1(), ELU_ALPHA * z.exp())
                }
            }
        }
    }
}

/// Hidden-layer nonlinearity of a three-channel MLP.
#[derive(Clone, Debug, PartialEq)]
pub enum Activation {
    Tree(ActivationTree),
    Baseline(Baseline),
}

impl Activation {
    pub fn is_baseline(&self) -> bool {
        matches!(self, Activation::Baseline(_))
    }

    pub fn label(&self) -> String {
        match self {
            Activation::Tree(t) => t.to_string(),
            Activation::Baseline(b) => b.name().to_string(),
        }
    }

    pub fn eval(&self, z: &[f64], m: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        match self {
            Activation::Tree(t) => t.eval(z, m, c),
            Activation::Baseline(b) => Ok(z.iter().map(|&v| b.value_and_derivative(v).0).collect()),
        }
    }
}

impl ChannelActivation for Activation {
    fn partials(&self, z: &[f64], m: &[f64], c: &[f64]) -> Result<Partials> {
        match self {
            Activation::Tree(t) => t.eval_partials(z, m, c),
            Activation::Baseline(b) => {
                if z.len() != m.len() || z.len() != c.len() {
                    return Err(Error::Dimension("baseline activation channels".into()));
                }
                let (value, dx) = z.iter().map(|&v| b.value_and_derivative(v)).unzip();
                Ok(Partials {
                    value,
                    dx,
                    dm: vec![0.0; z.len()],
                    dc: vec![0.0; z.len()],
                })
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
