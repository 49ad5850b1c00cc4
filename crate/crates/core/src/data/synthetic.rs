use super::{Cell, Column, ColumnKind, RawDataset};
use crate::numeric::RngStream;

/// Magnitude beyond which a standard-normal value counts as extreme.
pub const EXTREME_THRESHOLD: f64 = 1.0;

/// Complete dataset of `d` standard-normal features whose label is 1 when
/// at least `min_extreme` features exceed [`EXTREME_THRESHOLD`] in
/// magnitude.
///
/// Under value-dependent masking the extreme cells go missing, so the
/// mask carries label information the imputed values lose.
pub fn extreme_count_dataset(n: usize, d: usize, min_extreme: usize, rng: &mut RngStream) -> RawDataset {
    let columns = (0..d)
        .map(|j| Column {
            name: format!("f{j}"),
            kind: ColumnKind::Numeric,
        })
        .collect();
    let mut cells = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let extreme = row.iter().filter(|v| v.abs() > EXTREME_THRESHOLD).count();
        labels.push(usize::from(extreme >= min_extreme));
        cells.push(row.into_iter().map(Cell::Value).collect());
    }
    RawDataset::new(
        "extreme-count",
        columns,
        cells,
        labels,
        vec!["few_extreme".into(), "many_extreme".into()],
    )
    .expect("generated rows match their schema")
}
