use super::{Cell, ColumnKind, RawDataset};
use crate::error::{Error, Result};

/// One encoded column and where it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncodedFeature {
    Numeric { source: usize },
    /// Indicator of `category` in a categorical column; `None` marks the
    /// column for categories not seen during fitting.
    Indicator { source: usize, category: Option<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingMap {
    pub features: Vec<EncodedFeature>,
    pub names: Vec<String>,
}

impl EncodingMap {
    pub fn width(&self) -> usize {
        self.features.len()
    }
}

/// Numeric design with `None` marking missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDesign {
    pub values: Vec<Vec<Option<f64>>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub map: EncodingMap,
}

/// Numeric columns pass through. A categorical column becomes one
/// indicator per category observed in `fit_rows`, plus an `unseen`
/// indicator; a missing categorical cell is missing in every indicator of
/// its group.
pub fn encode_features(raw: &RawDataset, fit_rows: &[usize]) -> Result<EncodedDesign> {
    if let Some(&bad) = fit_rows.iter().find(|&&r| r >= raw.n_rows()) {
        return Err(Error::Dimension(format!("fit row {bad} outside {} rows", raw.n_rows())));
    }
    let mut features = Vec::new();
    let mut names = Vec::new();
    let mut groups: Vec<Vec<String>> = Vec::with_capacity(raw.n_features());
    for (j, col) in raw.columns().iter().enumerate() {
        match col.kind {
            ColumnKind::Numeric => {
                features.push(EncodedFeature::Numeric { source: j });
                names.push(col.name.clone());
                groups.push(Vec::new());
            }
            ColumnKind::Categorical => {
                let mut cats: Vec<String> = Vec::new();
                for &r in fit_rows {
                    if let Cell::Category(s) = &raw.cells()[r][j] {
                        if !cats.contains(s) {
                            cats.push(s.clone());
                        }
                    }
                }
                for c in &cats {
                    features.push(EncodedFeature::Indicator {
                        source: j,
                        category: Some(c.clone()),
                    });
                    names.push(format!("{}={c}", col.name));
                }
                features.push(EncodedFeature::Indicator {
                    source: j,
                    category: None,
                });
                names.push(format!("{}=unseen", col.name));
                groups.push(cats);
            }
        }
    }
    let values = raw
        .cells()
        .iter()
        .map(|row| {
            let mut out = Vec::with_capacity(features.len());
            for (j, (cell, col)) in row.iter().zip(raw.columns()).enumerate() {
                match (col.kind, cell) {
                    (ColumnKind::Numeric, Cell::Value(v)) => out.push(Some(*v)),
                    (ColumnKind::Numeric, _) => out.push(None),
                    (ColumnKind::Categorical, Cell::Category(s)) => {
                        let hit = groups[j].iter().position(|c| c == s);
                        out.extend((0..groups[j].len()).map(|k| Some(f64::from(u8::from(hit == Some(k))))));
                        out.push(Some(f64::from(u8::from(hit.is_none()))));
                    }
                    (ColumnKind::Categorical, _) => out.extend(std::iter::repeat(None).take(groups[j].len() + 1)),
                }
            }
            out
        })
        .collect();
    Ok(EncodedDesign {
        values,
        labels: raw.labels().to_vec(),
        class_count: raw.class_count(),
        map: EncodingMap { features, names },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn cat_dataset() -> RawDataset {
        RawDataset::new(
            "t",
            vec![
                Column {
                    name: "v".into(),
                    kind: ColumnKind::Numeric,
                },
                Column {
                    name: "k".into(),
                    kind: ColumnKind::Categorical,
                },
            ],
            vec![
                vec![Cell::Value(1.0), Cell::Category("a".into())],
                vec![Cell::Missing, Cell::Category("b".into())],
                vec![Cell::Value(3.0), Cell::Missing],
                vec![Cell::Value(4.0), Cell::Category("z".into())],
            ],
            vec![0, 1, 0, 1],
            vec!["n".into(), "p".into()],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_with_unseen_and_group_masking() {
        let ds = cat_dataset();
        let e = encode_features(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(e.map.names, vec!["v", "k=a", "k=b", "k=unseen"]);
        assert_eq!(e.values[0], vec![Some(1.0), Some(1.0), Some(0.0), Some(0.0)]);
        assert_eq!(e.values[1], vec![None, Some(0.0), Some(1.0), Some(0.0)]);
        assert_eq!(e.values[2], vec![Some(3.0), None, None, None]);
        // "z" was not seen in the fit rows.
        assert_eq!(e.values[3], vec![Some(4.0), Some(0.0), Some(0.0), Some(1.0)]);
    }

    #[test]
    fn numeric_only_is_identity() {
        let ds = RawDataset::new(
            "t",
            vec![Column {
                name: "v".into(),
                kind: ColumnKind::Numeric,
            }],
            vec![vec![Cell::Value(2.5)], vec![Cell::Missing]],
            vec![0, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let e = encode_features(&ds, &[0, 1]).unwrap();
        assert_eq!(e.map.width(), 1);
        assert_eq!(e.values, vec![vec![Some(2.5)], vec![None]]);
    }
}
