//! Propagation of missingness and confidence through a linear layer.
//!
//! The routing matrix is `A = |W| + ε`, row-normalized to `Ã`. Confidence
//! and observedness (`o = 1 − m`) of the layer inputs are mixed with `Ã`:
//! `c_out = c_in Ãᵀ`, `o_out = o_in Ãᵀ`, `m_out = 1 − o_out`, and every
//! propagated value is clipped to `[0, 1]`.

use crate::error::{Error, Result};
use crate::numeric::tape::routing_matrix;
use crate::numeric::Matrix;

/// Values, missingness and confidence flowing through a network, each
/// `batch × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThreeChannelState {
    pub values: Matrix,
    pub missingness: Matrix,
    pub confidence: Matrix,
}

impl ThreeChannelState {
    pub fn new(values: Matrix, missingness: Matrix, confidence: Matrix) -> Result<Self> {
        values.same_shape(&missingness, "state missingness")?;
        values.same_shape(&confidence, "state confidence")?;
        Ok(ThreeChannelState {
            values,
            missingness,
            confidence,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }

    pub fn observedness(&self) -> Matrix {
        Matrix::from_vec_unchecked(
            self.missingness.rows(),
            self.missingness.cols(),
            self.missingness.as_slice().iter().map(|m| 1.0 - m).collect(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> ThreeChannelState {
        ThreeChannelState {
            values: self.values.select_rows(idx),
            missingness: self.missingness.select_rows(idx),
            confidence: self.confidence.select_rows(idx),
        }
    }
}

fn clip01(m: Matrix) -> Matrix {
    let (r, c) = m.shape();
    Matrix::from_vec_unchecked(r, c, m.into_vec().into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Propagated `(m_out, c_out)` for weights `W` of shape `d_out × d_in`.
pub fn channelprop(
    weights: &Matrix,
    missingness: &Matrix,
    confidence: &Matrix,
    epsilon: f64,
) -> Result<(Matrix, Matrix)> {
    if weights.cols() != missingness.cols() || weights.cols() != confidence.cols() {
        return Err(Error::Dimension(format!(
            "channelprop weights {:?} vs channel width {}",
            weights.shape(),
            missingness.cols()
        )));
    }
    missingness.same_shape(confidence, "channelprop")?;
    if !(epsilon > 0.0) {
        return Err(Error::Config("channelprop epsilon must be positive".into()));
    }
    let (routing, _) = routing_matrix(weights, epsilon);
    let o_in = Matrix::from_vec_unchecked(
        missingness.rows(),
        missingness.cols(),
        missingness.as_slice().iter().map(|m| 1.0 - m).collect(),
    );
    let o_out = clip01(o_in.matmul_transpose_b(&routing)?);
    let m_out = Matrix::from_vec_unchecked(
        o_out.rows(),
        o_out.cols(),
        o_out.as_slice().iter().map(|o| 1.0 - o).collect(),
    );
    let c_out = clip01(confidence.matmul_transpose_b(&routing)?);
    Ok((m_out, c_out))
}

/// Per-sample mean of the input-layer channels, repeated across `width`
/// hidden units. Replaces propagation in the no-propagation ablation.
pub fn uniform_broadcast(missingness: &Matrix, confidence: &Matrix, width: usize) -> (Matrix, Matrix) {
    let spread = |src: &Matrix| {
        let mut data = Vec::with_capacity(src.rows() * width);
        for r in 0..src.rows() {
            let row = src.row(r);
            let mean = if row.is_empty() {
                0.0
            } else {
                row.iter().sum::<f64>() / row.len() as f64
            };
            data.extend(std::iter::repeat(mean.clamp(0.0, 1.0)).take(width));
        }
        Matrix::from_vec_unchecked(src.rows(), width, data)
    };
    (spread(missingness), spread(confidence))
}
