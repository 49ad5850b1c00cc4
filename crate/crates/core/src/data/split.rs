use serde::{Deserialize, Serialize};

use super::RawDataset;
use crate::error::{Error, Result};
use crate::numeric::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.6,
            val_fraction: 0.2,
            test_fraction: 0.2,
            stratified: true,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.train_fraction, self.val_fraction, self.test_fraction];
        if f.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("split fractions must be positive, got {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1, got {f:?}")));
        }
        Ok(())
    }
}

/// Disjoint, covering, ascending row indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn allocate(mut rows: Vec<usize>, spec: &SplitSpec, rng: &mut RngStream, out: &mut SplitIndices) {
    rng.shuffle(&mut rows);
    let n = rows.len();
    let n_train = ((n as f64 * spec.train_fraction).round() as usize).min(n);
    let n_val = ((n as f64 * spec.val_fraction).round() as usize).min(n - n_train);
    out.train.extend(&rows[..n_train]);
    out.val.extend(&rows[n_train..n_train + n_val]);
    out.test.extend(&rows[n_train + n_val..]);
}

/// Train/validation/test partition, stratified by class when requested.
/// Deterministic in `spec.seed`.
pub fn stratified_split(raw: &RawDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed).derive("split");
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    if spec.stratified {
        for class in 0..raw.class_count() {
            let rows: Vec<usize> = (0..raw.n_rows()).filter(|&i| raw.labels()[i] == class).collect();
            if rows.len() < 3 {
                return Err(Error::Stratification(format!(
                    "class `{}` has {} rows, need at least 3",
                    raw.class_names()[class],
                    rows.len()
                )));
            }
            allocate(rows, spec, &mut rng, &mut out);
        }
    } else {
        allocate((0..raw.n_rows()).collect(), spec, &mut rng, &mut out);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    if out.train.is_empty() {
        return Err(Error::Stratification("empty training split".into()));
    }
    Ok(out)
}
