//! Synthetic missingness for complete datasets.
//!
//! MCAR masks cells independently. MAR masks target features with a
//! logistic function of a never-masked pivot feature. MNAR masks a cell
//! with a logistic function of its own distance from the feature median.
//! Logistic intercepts are found by bisection so the expected masked
//! fraction equals the requested rate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Cell, RawDataset};
use crate::error::{Error, Result};
use crate::numeric::RngStream;
use crate::tree::ops::sigmoid;

/// Slope of the masking logistic in standardized units.
pub const LOGISTIC_SLOPE: f64 = 2.5;
const BISECTION_STEPS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    Mcar,
    Mar,
    Mnar,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Mcar, Mechanism::Mar, Mechanism::Mnar];
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Mcar => "MCAR",
            Mechanism::Mar => "MAR",
            Mechanism::Mnar => "MNAR",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MCAR" => Ok(Mechanism::Mcar),
            "MAR" => Ok(Mechanism::Mar),
            "MNAR" => Ok(Mechanism::Mnar),
            _ => Err(Error::Mechanism(format!("unknown mechanism `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    pub rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pivot_fraction")]
    pub mar_pivot_fraction: f64,
}

fn default_pivot_fraction() -> f64 {
    0.3
}

impl MissingnessSpec {
    pub fn new(mechanism: Mechanism, rate: f64, seed: u64) -> Self {
        MissingnessSpec {
            mechanism,
            rate,
            seed,
            mar_pivot_fraction: default_pivot_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::Config(format!("missingness rate {} outside [0, 1)", self.rate)));
        }
        if !(self.mar_pivot_fraction > 0.0 && self.mar_pivot_fraction < 1.0) {
            return Err(Error::Config("MAR pivot fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// What an injection did: masked cells among the cells eligible for
/// masking (all cells, or MAR target cells).
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionReport {
    pub masked: usize,
    pub eligible: usize,
    /// Features never masked (MAR pivots).
    pub pivots: Vec<usize>,
    /// Features that fell back to independent masking.
    pub fallbacks: Vec<usize>,
}

impl InjectionReport {
    pub fn realized_rate(&self) -> f64 {
        if self.eligible == 0 {
            0.0
        } else {
            self.masked as f64 / self.eligible as f64
        }
    }
}

fn require_complete(raw: &RawDataset) -> Result<()> {
    if raw.missing_count() > 0 {
        return Err(Error::Injection(format!(
            "dataset `{}` already has {} missing cells",
            raw.name(),
            raw.missing_count()
        )));
    }
    Ok(())
}

/// Intercept `a` with `mean(sigmoid(a + slope·s)) = rate`.
pub fn calibrate_intercept(scores: &[f64], slope: f64, rate: f64) -> f64 {
    let mean_p = |a: f64| scores.iter().map(|&s| sigmoid(a + slope * s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn zscore(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 1e-12) {
        return None;
    }
    Some(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Average ranks (ties share their mean rank), z-scored.
fn rank_standardize(v: &[f64]) -> Option<Vec<f64>> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        for &o in &order[i..=j] {
            ranks[o] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    zscore(&ranks)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Numeric view of a column; categorical cells map to their code in
/// first-appearance order.
fn column_values(raw: &RawDataset, j: usize) -> Vec<f64> {
    let mut codes: Vec<&str> = Vec::new();
    raw.cells()
        .iter()
        .map(|row| match &row[j] {
            Cell::Value(v) => *v,
            Cell::Category(s) => match codes.iter().position(|c| c == s) {
                Some(k) => k as f64,
                None => {
                    codes.push(s);
                    (codes.len() - 1) as f64
                }
            },
            Cell::Missing => f64::NAN,
        })
        .collect()
}

fn mask_column(cells: &mut [Vec<Cell>], j: usize, probs: impl Iterator<Item = f64>, rng: &mut RngStream) -> usize {
    let mut masked = 0;
    for (row, p) in cells.iter_mut().zip(probs) {
        if rng.bernoulli(p) {
            row[j] = Cell::Missing;
            masked += 1;
        }
    }
    masked
}

pub fn inject_mcar(raw: &RawDataset, rate: f64, rng: &mut RngStream) -> Result<(RawDataset, InjectionReport)> {
    require_complete(raw)?;
    let mut cells = raw.cells().to_vec();
    let mut masked = 0;
    if rate > 0.0 {
        for row in cells.iter_mut() {
            for cell in row.iter_mut() {
                if rng.bernoulli(rate) {
                    *cell = Cell::Missing;
                    masked += 1;
                }
            }
        }
    }
    let report = InjectionReport {
        masked,
        eligible: raw.n_rows() * raw.n_features(),
        pivots: Vec::new(),
        fallbacks: Vec::new(),
    };
    Ok((raw.with_cells(cells)?, report))
}

pub fn inject_mar(
    raw: &RawDataset,
    rate: f64,
    pivot_fraction: f64,
    rng: &mut RngStream,
) -> Result<(RawDataset, InjectionReport)> {
    require_complete(raw)?;
    let d = raw.n_features();
    if d < 2 {
        return Err(Error::Mechanism("MAR needs at least two features".into()));
    }
    let n_pivots = ((pivot_fraction * d as f64).ceil() as usize).clamp(1, d - 1);
    let mut order: Vec<usize> = (0..d).collect();
    rng.shuffle(&mut order);
    let mut pivots = order[..n_pivots].to_vec();
    pivots.sort_unstable();
    let targets: Vec<usize> = (0..d).filter(|j| !pivots.contains(j)).collect();

    let mut cells = raw.cells().to_vec();
    let mut masked = 0;
    let mut fallbacks = Vec::new();
    if rate > 0.0 {
        for &j in &targets {
            let pivot = pivots[rng.below(pivots.len())];
            match rank_standardize(&column_values(raw, pivot)) {
                Some(s) => {
                    let a = calibrate_intercept(&s, LOGISTIC_SLOPE, rate);
                    masked += mask_column(&mut cells, j, s.iter().map(|&v| sigmoid(a + LOGISTIC_SLOPE * v)), rng);
                }
                None => {
                    log::info!("MAR pivot {pivot} is constant; feature {j} masked independently");
                    fallbacks.push(j);
                    masked += mask_column(&mut cells, j, std::iter::repeat(rate), rng);
                }
            }
        }
    }
    let report = InjectionReport {
        masked,
        eligible: raw.n_rows() * targets.len(),
        pivots,
        fallbacks,
    };
    Ok((raw.with_cells(cells)?, report))
}

pub fn inject_mnar(raw: &RawDataset, rate: f64, rng: &mut RngStream) -> Result<(RawDataset, InjectionReport)> {
    require_complete(raw)?;
    let mut cells = raw.cells().to_vec();
    let mut masked = 0;
    let mut fallbacks = Vec::new();
    if rate > 0.0 {
        for (j, col) in raw.columns().iter().enumerate() {
            let scores = match col.kind {
                crate::data::ColumnKind::Numeric => {
                    let v = column_values(raw, j);
                    let med = median(&v);
                    zscore(&v.iter().map(|x| (x - med).abs()).collect::<Vec<_>>())
                }
                crate::data::ColumnKind::Categorical => None,
            };
            match scores {
                Some(s) => {
                    let a = calibrate_intercept(&s, LOGISTIC_SLOPE, rate);
                    masked += mask_column(&mut cells, j, s.iter().map(|&v| sigmoid(a + LOGISTIC_SLOPE * v)), rng);
                }
                None => {
                    log::info!("feature `{}` has no spread to rank; masked independently", col.name);
                    fallbacks.push(j);
                    masked += mask_column(&mut cells, j, std::iter::repeat(rate), rng);
                }
            }
        }
    }
    let report = InjectionReport {
        masked,
        eligible: raw.n_rows() * raw.n_features(),
        pivots: Vec::new(),
        fallbacks,
    };
    Ok((raw.with_cells(cells)?, report))
}

/// Applies `spec` with a stream seeded from `spec.seed`.
pub fn inject(raw: &RawDataset, spec: &MissingnessSpec) -> Result<(RawDataset, InjectionReport)> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed).derive("missingness");
    match spec.mechanism {
        Mechanism::Mcar => inject_mcar(raw, spec.rate, &mut rng),
        Mechanism::Mar => inject_mar(raw, spec.rate, spec.mar_pivot_fraction, &mut rng),
        Mechanism::Mnar => inject_mnar(raw, spec.rate, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::extreme_count_dataset;
    use crate::data::{Column, ColumnKind};

    fn gaussian(n: usize, d: usize, seed: u64) -> RawDataset {
        extreme_count_dataset(n, d, 3, &mut RngStream::new(seed))
    }

    fn missing_at(ds: &RawDataset, r: usize, j: usize) -> bool {
        ds.cells()[r][j].is_missing()
    }

    #[test]
    fn zero_rate_is_identity() {
        let ds = gaussian(50, 4, 1);
        for m in Mechanism::ALL {
            let (out, rep) = inject(&ds, &MissingnessSpec::new(m, 0.0, 3)).unwrap();
            assert_eq!(out, ds);
            assert_eq!(rep.masked, 0);
        }
    }

    #[test]
    fn mcar_binomial_band() {
        let ds = gaussian(1000, 10, 2);
        let (out, _) = inject(&ds, &MissingnessSpec::new(Mechanism::Mcar, 0.2, 7)).unwrap();
        assert!((1800..=2200).contains(&out.missing_count()), "{}", out.missing_count());
        assert_eq!(out.labels(), ds.labels());
    }

    #[test]
    fn mar_pivots_untouched_and_rate_calibrated() {
        let ds = gaussian(1000, 10, 3);
        let (out, rep) = inject(&ds, &MissingnessSpec::new(Mechanism::Mar, 0.2, 5)).unwrap();
        assert_eq!(rep.pivots.len(), 3);
        for &p in &rep.pivots {
            assert!((0..1000).all(|r| !missing_at(&out, r, p)));
        }
        assert!((0.17..=0.23).contains(&rep.realized_rate()), "{}", rep.realized_rate());
        assert_eq!(rep.eligible, 7000);
    }

    #[test]
    fn mnar_masks_extremes_more() {
        let ds = gaussian(2000, 10, 4);
        let (out, rep) = inject(&ds, &MissingnessSpec::new(Mechanism::Mnar, 0.2, 5)).unwrap();
        assert!((0.17..=0.23).contains(&rep.realized_rate()));
        let mut dev: Vec<(f64, bool)> = Vec::new();
        for r in 0..2000 {
            for j in 0..10 {
                if let Cell::Value(v) = ds.cells()[r][j] {
                    dev.push((v.abs(), missing_at(&out, r, j)));
                }
            }
        }
        dev.sort_by(|a, b| a.0.total_cmp(&b.0));
        let decile = dev.len() / 10;
        let rate = |s: &[(f64, bool)]| s.iter().filter(|x| x.1).count() as f64 / s.len() as f64;
        assert!(rate(&dev[dev.len() - decile..]) > rate(&dev[..decile]));
    }

    #[test]
    fn constant_feature_falls_back() {
        let ds = RawDataset::new(
            "c",
            vec![
                Column {
                    name: "k".into(),
                    kind: ColumnKind::Numeric,
                },
                Column {
                    name: "v".into(),
                    kind: ColumnKind::Numeric,
                },
            ],
            (0..400).map(|i| vec![Cell::Value(1.0), Cell::Value(i as f64)]).collect(),
            (0..400).map(|i| i % 2).collect(),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let (_, rep) = inject(&ds, &MissingnessSpec::new(Mechanism::Mnar, 0.3, 1)).unwrap();
        assert_eq!(rep.fallbacks, vec![0]);
    }

    #[test]
    fn errors() {
        let ds = gaussian(20, 1, 1);
        assert!(matches!(
            inject(&ds, &MissingnessSpec::new(Mechanism::Mar, 0.2, 1)),
            Err(Error::Mechanism(_))
        ));
        let (holed, _) = inject(&gaussian(50, 3, 1), &MissingnessSpec::new(Mechanism::Mcar, 0.5, 1)).unwrap();
        assert!(matches!(
            inject(&holed, &MissingnessSpec::new(Mechanism::Mcar, 0.2, 1)),
            Err(Error::Injection(_))
        ));
        assert!("mnar".parse::<Mechanism>().is_ok());
        assert!("MXAR".parse::<Mechanism>().is_err());
    }

    #[test]
    fn calibration_hits_target() {
        let s: Vec<f64> = (0..500).map(|i| (i as f64 / 50.0).sin()).collect();
        for rate in [0.05, 0.2, 0.5, 0.9] {
            let a = calibrate_intercept(&s, LOGISTIC_SLOPE, rate);
            let mean = s.iter().map(|&v| sigmoid(a + LOGISTIC_SLOPE * v)).sum::<f64>() / 500.0;
            assert!((mean - rate).abs() < 1e-9);
        }
    }
}
