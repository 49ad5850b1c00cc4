use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{Cell, Column, ColumnKind, RawDataset};
use crate::error::{Error, Result};

pub const DEFAULT_MISSING_TOKENS: [&str; 3] = ["?", "", "NA"];

/// How to read a delimited file into a [`RawDataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct CsvOptions {
    pub name: String,
    /// Feature columns, in file order.
    pub columns: Vec<Column>,
    pub label: String,
    /// File position of the label column when there is no header; last
    /// column when `None`.
    pub label_position: Option<usize>,
    pub header: bool,
    pub missing_tokens: Vec<String>,
    /// Class names in id order. When absent, ids follow first appearance.
    pub classes: Option<Vec<String>>,
}

impl CsvOptions {
    pub fn new(name: impl Into<String>, columns: Vec<Column>, label: impl Into<String>) -> Self {
        CsvOptions {
            name: name.into(),
            columns,
            label: label.into(),
            label_position: None,
            header: true,
            missing_tokens: DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect(),
            classes: None,
        }
    }
}

/// File position of every feature column and of the label.
fn resolve_positions(opts: &CsvOptions, header: Option<&csv::StringRecord>) -> Result<(Vec<usize>, usize)> {
    let width = opts.columns.len() + 1;
    match header {
        Some(h) => {
            let names: Vec<&str> = h.iter().map(str::trim).collect();
            if names.len() != width {
                return Err(Error::Config(format!(
                    "header has {} columns, schema expects {width}",
                    names.len()
                )));
            }
            let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
            let find = |name: &str| {
                index
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("column `{name}` not in header")))
            };
            let features = opts.columns.iter().map(|c| find(&c.name)).collect::<Result<Vec<_>>>()?;
            Ok((features, find(&opts.label)?))
        }
        None => {
            let label = opts.label_position.unwrap_or(width - 1);
            if label >= width {
                return Err(Error::Config(format!("label position {label} outside {width} columns")));
            }
            Ok(((0..width).filter(|&i| i != label).collect(), label))
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = if opts.header {
        Some(reader.headers().map_err(|e| Error::Parse { row: 0, msg: e.to_string() })?.clone())
    } else {
        None
    };
    let (positions, label_pos) = resolve_positions(opts, header.as_ref())?;
    let width = opts.columns.len() + 1;
    let is_missing = |s: &str| opts.missing_tokens.iter().any(|t| t == s);

    let mut class_names: Vec<String> = opts.classes.clone().unwrap_or_default();
    let fixed_classes = opts.classes.is_some();
    let mut cells = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0usize;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                msg: format!("{} fields, expected {width}", record.len()),
            });
        }
        let label_token = &record[label_pos];
        if is_missing(label_token) {
            dropped += 1;
            continue;
        }
        let label = match class_names.iter().position(|c| c == label_token) {
            Some(i) => i,
            None if fixed_classes => {
                return Err(Error::Label(format!("unknown label `{label_token}` at row {row}")));
            }
            None => {
                class_names.push(label_token.to_string());
                class_names.len() - 1
            }
        };
        let mut out = Vec::with_capacity(positions.len());
        for (col, &p) in opts.columns.iter().zip(&positions) {
            let token = &record[p];
            out.push(if is_missing(token) {
                Cell::Missing
            } else {
                match col.kind {
                    ColumnKind::Numeric => match token.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Value(v),
                        _ => {
                            return Err(Error::Parse {
                                row,
                                msg: format!("`{token}` is not a number in column {}", col.name),
                            })
                        }
                    },
                    ColumnKind::Categorical => Cell::Category(token.to_string()),
                }
            });
        }
        cells.push(out);
        labels.push(label);
    }
    if dropped > 0 {
        log::info!("{}: dropped {dropped} rows with a missing label", opts.name);
    }
    RawDataset::new(opts.name.clone(), opts.columns.clone(), cells, labels, class_names)
}

/// Dataset description stored next to the data file, in TOML.
///
/// `columns` entries are `name:kind` with kind `numeric` or `categorical`;
/// without a header, an entry `name:label` marks the label position.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_true")]
    pub header: bool,
    pub label: String,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    pub columns: Vec<String>,
    #[serde(default)]
    pub missing_tokens: Option<Vec<String>>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_true() -> bool {
    true
}

impl Manifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn data_path(&self) -> PathBuf {
        self.base_dir.join(&self.path)
    }

    pub fn csv_options(&self) -> Result<CsvOptions> {
        let mut columns = Vec::new();
        let mut label_position = None;
        for (i, entry) in self.columns.iter().enumerate() {
            let (name, kind) = entry
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("column entry `{entry}` needs name:kind")))?;
            let kind = match kind.trim() {
                "numeric" => ColumnKind::Numeric,
                "categorical" => ColumnKind::Categorical,
                "label" => {
                    label_position = Some(i);
                    continue;
                }
                other => return Err(Error::Config(format!("unknown column kind `{other}`"))),
            };
            columns.push(Column {
                name: name.trim().to_string(),
                kind,
            });
        }
        let mut opts = CsvOptions::new(self.name.clone(), columns, self.label.clone());
        opts.header = self.header;
        opts.label_position = label_position;
        opts.classes = self.classes.clone();
        if let Some(t) = &self.missing_tokens {
            opts.missing_tokens = t.clone();
        }
        Ok(opts)
    }

    pub fn load(&self) -> Result<RawDataset> {
        load_csv(self.data_path(), &self.csv_options()?)
    }
}
