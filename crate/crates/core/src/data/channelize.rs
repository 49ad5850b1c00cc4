use super::encode::{EncodedDesign, EncodingMap};
use super::split::SplitIndices;
use crate::error::{Error, Result};
use crate::network::ThreeChannelState;
use crate::numeric::Matrix;

/// Lower bound on the confidence of a missing cell.
pub const CONFIDENCE_FLOOR: f64 = 0.1;
const STD_FLOOR: f64 = 1e-8;

/// One split's channels: `x` imputed and standardized, `m` the binary
/// mask, `c` the confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub x: Matrix,
    pub m: Matrix,
    pub c: Matrix,
    pub y: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn state(&self) -> ThreeChannelState {
        ThreeChannelState {
            values: self.x.clone(),
            missingness: self.m.clone(),
            confidence: self.c.clone(),
        }
    }

    pub fn missing_fraction(&self) -> f64 {
        let n = self.m.as_slice().len();
        if n == 0 {
            0.0
        } else {
            self.m.sum() / n as f64
        }
    }
}

/// Train-split z-score parameters per encoded column.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelizedDataset {
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub feature_means: Vec<f64>,
    pub missing_rates: Vec<f64>,
    pub standardization: Standardization,
    pub encoding: EncodingMap,
    pub class_count: usize,
    pub tau: f64,
}

impl ChannelizedDataset {
    pub fn width(&self) -> usize {
        self.encoding.width()
    }
}

/// Mean imputation, mask and confidence, then z-scoring. Every statistic
/// is fitted on `splits.train` only.
pub fn channelize(design: &EncodedDesign, splits: &SplitIndices, tau: f64) -> Result<ChannelizedDataset> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("confidence floor {tau} outside (0, 1]")));
    }
    if splits.train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    let n_rows = design.values.len();
    if let Some(&bad) = splits.train.iter().chain(&splits.val).chain(&splits.test).find(|&&r| r >= n_rows) {
        return Err(Error::Dimension(format!("split row {bad} outside {n_rows} rows")));
    }
    let d = design.map.width();
    let n_train = splits.train.len() as f64;
    let mut feature_means = vec![0.0; d];
    let mut missing_rates = vec![0.0; d];
    for j in 0..d {
        let (mut sum, mut seen) = (0.0, 0usize);
        for &r in &splits.train {
            if let Some(v) = design.values[r][j] {
                sum += v;
                seen += 1;
            }
        }
        feature_means[j] = if seen == 0 { 0.0 } else { sum / seen as f64 };
        missing_rates[j] = (splits.train.len() - seen) as f64 / n_train;
    }
    let imputed = |r: usize, j: usize| design.values[r][j].unwrap_or(feature_means[j]);

    let mut std = vec![0.0; d];
    let mut mean = vec![0.0; d];
    for j in 0..d {
        let mu = splits.train.iter().map(|&r| imputed(r, j)).sum::<f64>() / n_train;
        let var = splits.train.iter().map(|&r| (imputed(r, j) - mu).powi(2)).sum::<f64>() / n_train;
        mean[j] = mu;
        std[j] = var.sqrt().max(STD_FLOOR);
    }

    let build = |rows: &[usize]| -> Result<Split> {
        let mut x = Vec::with_capacity(rows.len() * d);
        let mut m = Vec::with_capacity(rows.len() * d);
        let mut c = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            for j in 0..d {
                let missing = design.values[r][j].is_none();
                x.push((imputed(r, j) - mean[j]) / std[j]);
                m.push(if missing { 1.0 } else { 0.0 });
                c.push(if missing { tau.max(1.0 - missing_rates[j]) } else { 1.0 });
            }
        }
        Ok(Split {
            x: Matrix::from_vec(rows.len(), d, x)?,
            m: Matrix::from_vec(rows.len(), d, m)?,
            c: Matrix::from_vec(rows.len(), d, c)?,
            y: rows.iter().map(|&r| design.labels[r]).collect(),
        })
    };
    Ok(ChannelizedDataset {
        train: build(&splits.train)?,
        val: build(&splits.val)?,
        test: build(&splits.test)?,
        feature_means,
        missing_rates,
        standardization: Standardization { mean, std },
        encoding: design.map.clone(),
        class_count: design.class_count,
        tau,
    })
}
