use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one parameter matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            first: vec![0.0; len],
            second: vec![0.0; len],
        }
    }

    pub fn for_matrix(m: &Matrix) -> Self {
        AdamState::new(m.as_slice().len())
    }
}

/// One Adam update with bias correction and decoupled weight decay.
///
/// `t` is the 1-based step index. Weight decay shrinks the parameters
/// (`p -= lr * wd * p`) before the moment-based delta is applied.
pub fn adam_step(
    params: &mut Matrix,
    grads: &Matrix,
    state: &mut AdamState,
    t: u64,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    params.same_shape(grads, "adam_step")?;
    if state.first.len() != grads.as_slice().len() || state.second.len() != state.first.len() {
        return Err(Error::Dimension("adam state length".into()));
    }
    if t == 0 {
        return Err(Error::Config("adam step index starts at 1".into()));
    }
    if grads.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    let bc1 = 1.0 - BETA1.powf(t as f64);
    let bc2 = 1.0 - BETA2.powf(t as f64);
    let p = params.data_mut();
    for i in 0..p.len() {
        let g = grads.as_slice()[i];
        p[i] -= lr * weight_decay * p[i];
        state.first[i] = BETA1 * state.first[i] + (1.0 - BETA1) * g;
        state.second[i] = BETA2 * state.second[i] + (1.0 - BETA2) * g * g;
        let mhat = state.first[i] / bc1;
        let vhat = state.second[i] / bc2;
        p[i] -= lr * mhat / (vhat.sqrt() + EPSILON);
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite parameter after update".into()));
    }
    Ok(())
}
