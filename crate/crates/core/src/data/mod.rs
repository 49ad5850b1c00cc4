//! Tabular data: loading, encoding, splitting, and the value, missingness
//! and confidence channels.

pub mod channelize;
pub mod encode;
pub mod load;
pub mod split;
pub mod synthetic;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use channelize::{channelize, ChannelizedDataset, Split, Standardization, CONFIDENCE_FLOOR};
pub use encode::{encode_features, EncodedDesign, EncodedFeature, EncodingMap};
pub use load::{load_csv, CsvOptions, Manifest, DEFAULT_MISSING_TOKENS};
pub use split::{stratified_split, SplitIndices, SplitSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Value(f64),
    Category(String),
    Missing,
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Rows of feature cells with integer class labels `0..class_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    name: String,
    columns: Vec<Column>,
    cells: Vec<Vec<Cell>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl RawDataset {
    pub fn new(
        name: impl Into<String>,
        columns: Vec<Column>,
        cells: Vec<Vec<Cell>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if cells.len() != labels.len() {
            return Err(Error::Dimension(format!("{} rows but {} labels", cells.len(), labels.len())));
        }
        for (i, row) in cells.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Parse {
                    row: i,
                    msg: format!("{} cells for {} columns", row.len(), columns.len()),
                });
            }
            for (cell, col) in row.iter().zip(&columns) {
                let ok = match (cell, col.kind) {
                    (Cell::Missing, _) => true,
                    (Cell::Value(v), ColumnKind::Numeric) => v.is_finite(),
                    (Cell::Category(_), ColumnKind::Categorical) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::Parse {
                        row: i,
                        msg: format!("cell {cell:?} does not fit {} column {}", col.kind, col.name),
                    });
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::Label(format!("label {bad} outside 0..{}", class_names.len())));
        }
        Ok(RawDataset {
            name: name.into(),
            columns,
            cells,
            labels,
            class_names,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn cells(&self) -> &[Vec<Cell>] {
        &self.cells
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_missing()).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        let total = self.n_rows() * self.n_features();
        if total == 0 {
            0.0
        } else {
            self.missing_count() as f64 / total as f64
        }
    }

    /// Same rows and labels with replaced cells; the cells must keep the
    /// shape and column kinds.
    pub fn with_cells(&self, cells: Vec<Vec<Cell>>) -> Result<RawDataset> {
        RawDataset::new(
            self.name.clone(),
            self.columns.clone(),
            cells,
            self.labels.clone(),
            self.class_names.clone(),
        )
    }
}
