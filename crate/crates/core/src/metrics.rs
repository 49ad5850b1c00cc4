//! Classification metrics. Binary tasks treat class 1 as positive;
//! multi-class tasks macro-average one-vs-rest values. Zero denominators
//! yield 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// `K × K` counts; entry `(i, j)` is true class `i` predicted as `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionCounts {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionCounts {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension("confusion matrix must be square".into()));
        }
        Ok(ConfusionCounts {
            k,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `(tp, fp, tn, fn)` treating `class` as positive.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(class, class);
        let row: u64 = (0..self.k).map(|j| self.get(class, j)).sum();
        let col: u64 = (0..self.k).map(|i| self.get(i, class)).sum();
        let fp = col - tp;
        let fn_ = row - tp;
        (tp, fp, self.total() - tp - fp - fn_, fn_)
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![0u64; k * k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::Label(format!("label {} outside 0..{k}", t.max(p))));
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionCounts { k, counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Binary,
    Macro,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub auc: f64,
    pub averaging: Averaging,
}

impl MetricReport {
    pub const NAMES: [&'static str; 6] = ["acc", "prec", "rec", "spec", "f1", "auc"];

    /// Values in the order of [`MetricReport::NAMES`].
    pub fn values(&self) -> [f64; 6] {
        [self.accuracy, self.precision, self.recall, self.specificity, self.f1, self.auc]
    }
}

/// Threshold-based metrics, before AUC.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn positive_class_metrics(cm: &ConfusionCounts, class: usize) -> [f64; 4] {
    let (tp, fp, tn, fn_) = cm.one_vs_rest(class);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    [precision, recall, ratio(tn, tn + fp), harmonic(precision, recall)]
}

pub fn scalar_metrics(cm: &ConfusionCounts) -> Result<ScalarMetrics> {
    let total = cm.total();
    if total == 0 || cm.k < 2 {
        return Err(Error::Metric("empty confusion matrix".into()));
    }
    let correct: u64 = (0..cm.k).map(|i| cm.get(i, i)).sum();
    let [precision, recall, specificity, f1] = if cm.k == 2 {
        positive_class_metrics(cm, 1)
    } else {
        let mut acc = [0.0; 4];
        for class in 0..cm.k {
            for (a, v) in acc.iter_mut().zip(positive_class_metrics(cm, class)) {
                *a += v;
            }
        }
        acc.map(|v| v / cm.k as f64)
    };
    Ok(ScalarMetrics {
        accuracy: ratio(correct, total),
        precision,
        recall,
        specificity,
        f1,
    })
}

/// Mann–Whitney AUC of `scores` for the positive set, ties counted half.
/// `None` when either side is empty.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&o| positive[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// AUC from per-class probabilities (`n × K`).
pub fn roc_auc(y_true: &[usize], scores: &Matrix, k: usize) -> Result<f64> {
    if scores.rows() != y_true.len() || scores.cols() != k {
        return Err(Error::Dimension(format!(
            "scores {:?} for {} labels and {k} classes",
            scores.shape(),
            y_true.len()
        )));
    }
    if let Some(&bad) = y_true.iter().find(|&&y| y >= k) {
        return Err(Error::Label(format!("label {bad} outside 0..{k}")));
    }
    let column = |j: usize| (0..scores.rows()).map(|r| scores.get(r, j)).collect::<Vec<_>>();
    if k == 2 {
        let pos: Vec<bool> = y_true.iter().map(|&y| y == 1).collect();
        return binary_auc(&pos, &column(1))
            .ok_or_else(|| Error::Metric("binary AUC needs both classes present".into()));
    }
    let mut sum = 0.0;
    let mut used = 0;
    for class in 0..k {
        let pos: Vec<bool> = y_true.iter().map(|&y| y == class).collect();
        match binary_auc(&pos, &column(class)) {
            Some(a) => {
                sum += a;
                used += 1;
            }
            None => log::debug!("class {class} absent from evaluation labels; excluded from macro AUC"),
        }
    }
    if used == 0 {
        return Err(Error::Metric("no class with both positives and negatives".into()));
    }
    Ok(sum / used as f64)
}

/// All six metrics from true labels and class probabilities. Predictions
/// are the per-row argmax.
pub fn evaluate(y_true: &[usize], probs: &Matrix, k: usize) -> Result<MetricReport> {
    let pred = probs.argmax_rows();
    let s = scalar_metrics(&confusion(y_true, &pred, k)?)?;
    Ok(MetricReport {
        accuracy: s.accuracy,
        precision: s.precision,
        recall: s.recall,
        specificity: s.specificity,
        f1: s.f1,
        auc: roc_auc(y_true, probs, k)?,
        averaging: if k == 2 { Averaging::Binary } else { Averaging::Macro },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: count every positive-negative pair.
    fn pair_count_auc(pos: &[bool], s: &[f64]) -> Option<f64> {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if pos[i] && !pos[j] {
                    pairs += 1.0;
                    if s[i] > s[j] {
                        wins += 1.0;
                    } else if s[i] == s[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        (pairs > 0.0).then(|| wins / pairs)
    }

    #[test]
    fn confusion_hand_count() {
        let cm = confusion(&[0, 1, 1], &[0, 0, 1], 2).unwrap();
        assert_eq!(cm, ConfusionCounts::from_rows(&[vec![1, 0], vec![1, 1]]).unwrap());
        assert_eq!(confusion(&[], &[], 2).unwrap().total(), 0);
        assert!(matches!(confusion(&[2], &[0], 2), Err(Error::Label(_))));
    }

    #[test]
    fn worked_confusion_example() {
        let cm = ConfusionCounts::from_rows(&[vec![40, 10], vec![20, 30]]).unwrap();
        let s = scalar_metrics(&cm).unwrap();
        assert!((s.accuracy - 0.7).abs() < 1e-12);
        assert!((s.precision - 0.75).abs() < 1e-12);
        assert!((s.recall - 0.6).abs() < 1e-12);
        assert!((s.specificity - 0.8).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_degenerate_classifiers() {
        let s = scalar_metrics(&ConfusionCounts::from_rows(&[vec![50, 0], vec![0, 50]]).unwrap()).unwrap();
        assert_eq!([s.accuracy, s.precision, s.recall, s.specificity, s.f1], [1.0; 5]);
        let s = scalar_metrics(&ConfusionCounts::from_rows(&[vec![50, 0], vec![50, 0]]).unwrap()).unwrap();
        assert_eq!((s.recall, s.specificity, s.precision, s.f1), (0.0, 1.0, 0.0, 0.0));
        assert!(matches!(
            scalar_metrics(&ConfusionCounts::from_rows(&[vec![0, 0], vec![0, 0]]).unwrap()),
            Err(Error::Metric(_))
        ));
    }

    #[test]
    fn auc_examples() {
        let labels = [false, false, true, true, false, true];
        let scores = [0.1, 0.4, 0.35, 0.8, 0.65, 0.9];
        assert!((binary_auc(&labels, &scores).unwrap() - 7.0 / 9.0).abs() < 1e-12);
        assert_eq!(binary_auc(&labels, &[0.3; 6]), Some(0.5));
        assert_eq!(binary_auc(&[false, true], &[0.0, 1.0]), Some(1.0));
        assert_eq!(binary_auc(&[true, true], &[0.0, 1.0]), None);
    }

    #[test]
    fn multiclass_auc_skips_absent_class() {
        let probs = Matrix::from_rows(&[
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.6, 0.3, 0.1],
            vec![0.1, 0.8, 0.1],
        ])
        .unwrap();
        let y = [0, 1, 0, 1];
        // Class 2 never occurs; classes 0 and 1 are perfectly ranked.
        assert_eq!(roc_auc(&y, &probs, 3).unwrap(), 1.0);
        let binary = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.4, 0.6]]).unwrap();
        assert!(matches!(roc_auc(&[1, 1], &binary, 2), Err(Error::Metric(_))));
    }

    #[test]
    fn macro_averages_one_vs_rest() {
        let cm = ConfusionCounts::from_rows(&[vec![2, 1, 0], vec![0, 3, 0], vec![1, 0, 1]]).unwrap();
        let s = scalar_metrics(&cm).unwrap();
        let p = (2.0 / 3.0 + 3.0 / 4.0 + 1.0) / 3.0;
        let r = (2.0 / 3.0 + 1.0 + 0.5) / 3.0;
        assert!((s.precision - p).abs() < 1e-12);
        assert!((s.recall - r).abs() < 1e-12);
        assert!((s.accuracy - 6.0 / 8.0).abs() < 1e-12);
    }

    fn labelled_scores() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
        (2usize..50).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                // Coarse grid to force ties.
                proptest::collection::vec((0u8..12).prop_map(|v| v as f64 / 11.0), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting((pos, s) in labelled_scores()) {
            prop_assert_eq!(binary_auc(&pos, &s).is_some(), pair_count_auc(&pos, &s).is_some());
            if let (Some(a), Some(b)) = (binary_auc(&pos, &s), pair_count_auc(&pos, &s)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn auc_is_rank_invariant((pos, s) in labelled_scores()) {
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
            prop_assert_eq!(binary_auc(&pos, &s), binary_auc(&pos, &t));
        }

        #[test]
        fn auc_complement_symmetry((pos, s) in labelled_scores()) {
            let flipped: Vec<bool> = pos.iter().map(|p| !p).collect();
            let inv: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
            if let Some(a) = binary_auc(&pos, &s) {
                prop_assert!((a + binary_auc(&pos, &inv).unwrap() - 1.0).abs() < 1e-12);
                prop_assert!((a + binary_auc(&flipped, &s).unwrap() - 1.0).abs() < 1e-12);
                prop_assert!((a - binary_auc(&flipped, &inv).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn metrics_lie_in_unit_interval(
            cells in proptest::collection::vec(0u64..20, 9),
        ) {
            let rows: Vec<Vec<u64>> = cells.chunks(3).map(|c| c.to_vec()).collect();
            let cm = ConfusionCounts::from_rows(&rows).unwrap();
            if cm.total() > 0 {
                let s = scalar_metrics(&cm).unwrap();
                for v in [s.accuracy, s.precision, s.recall, s.specificity, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
