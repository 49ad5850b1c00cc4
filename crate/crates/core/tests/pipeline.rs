//! Data pipeline and injection invariants on random tables.

use proptest::prelude::*;
use trichannel::data::{
    channelize, encode_features, stratified_split, Cell, Column, ColumnKind, RawDataset, SplitSpec, CONFIDENCE_FLOOR,
};
use trichannel::missingness::{inject, Mechanism, MissingnessSpec};
use trichannel::numeric::RngStream;

/// Numeric and categorical columns with scattered missing cells and two
/// classes of at least five rows each.
fn table(seed: u64, rows: usize, numeric: usize, categorical: usize, missing: f64) -> RawDataset {
    let mut rng = RngStream::new(seed);
    let mut columns: Vec<Column> = (0..numeric)
        .map(|j| Column {
            name: format!("n{j}"),
            kind: ColumnKind::Numeric,
        })
        .collect();
    columns.extend((0..categorical).map(|j| Column {
        name: format!("k{j}"),
        kind: ColumnKind::Categorical,
    }));
    let cells = (0..rows)
        .map(|_| {
            columns
                .iter()
                .map(|col| {
                    if rng.bernoulli(missing) {
                        Cell::Missing
                    } else if col.kind == ColumnKind::Numeric {
                        Cell::Value(rng.uniform(-5.0, 5.0))
                    } else {
                        Cell::Category(["a", "b", "c"][rng.below(3)].to_string())
                    }
                })
                .collect()
        })
        .collect();
    let labels = (0..rows).map(|i| i % 2).collect();
    RawDataset::new("random", columns, cells, labels, vec!["0".into(), "1".into()]).unwrap()
}

fn complete_table(seed: u64, rows: usize, cols: usize) -> RawDataset {
    table(seed, rows, cols, 0, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn statistics_come_from_training_rows_only(
        seed in any::<u64>(), rows in 12usize..60, numeric in 1usize..4, categorical in 0usize..2, missing in 0.0f64..0.5,
    ) {
        let raw = table(seed, rows, numeric, categorical, missing);
        let split = stratified_split(&raw, &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
        let design = encode_features(&raw, &split.train).unwrap();
        let ds = channelize(&design, &split, CONFIDENCE_FLOOR).unwrap();

        // Scrambling every non-training row must leave all fitted statistics
        // and the training channels untouched.
        let mut scrambled = design.clone();
        let mut rng = RngStream::new(seed ^ 1);
        for &r in split.val.iter().chain(&split.test) {
            for v in scrambled.values[r].iter_mut() {
                *v = if rng.bernoulli(0.5) { None } else { Some(rng.uniform(-1e3, 1e3)) };
            }
        }
        let other = channelize(&scrambled, &split, CONFIDENCE_FLOOR).unwrap();
        prop_assert_eq!(&ds.feature_means, &other.feature_means);
        prop_assert_eq!(&ds.missing_rates, &other.missing_rates);
        prop_assert_eq!(&ds.standardization, &other.standardization);
        prop_assert_eq!(&ds.train, &other.train);

        // Means and missing rates recomputed directly from the training rows.
        for j in 0..design.map.width() {
            let seen: Vec<f64> = split.train.iter().filter_map(|&r| design.values[r][j]).collect();
            let mu = if seen.is_empty() { 0.0 } else { seen.iter().sum::<f64>() / seen.len() as f64 };
            prop_assert!((ds.feature_means[j] - mu).abs() <= 1e-12 * (1.0 + mu.abs()));
            let r = (split.train.len() - seen.len()) as f64 / split.train.len() as f64;
            prop_assert_eq!(ds.missing_rates[j], r);
        }

        // Same inputs, same matrices.
        prop_assert_eq!(&ds, &channelize(&design, &split, CONFIDENCE_FLOOR).unwrap());
    }

    #[test]
    fn mask_and_confidence_follow_missing_cells(
        seed in any::<u64>(), rows in 12usize..60, numeric in 1usize..4, missing in 0.0f64..0.6,
    ) {
        let raw = table(seed, rows, numeric, 1, missing);
        let split = stratified_split(&raw, &SplitSpec { seed, ..SplitSpec::default() }).unwrap();
        let design = encode_features(&raw, &split.train).unwrap();
        let ds = channelize(&design, &split, CONFIDENCE_FLOOR).unwrap();
        for (rows, s) in [(&split.train, &ds.train), (&split.val, &ds.val), (&split.test, &ds.test)] {
            for (i, &r) in rows.iter().enumerate() {
                for j in 0..design.map.width() {
                    let (m, c) = (s.m.get(i, j), s.c.get(i, j));
                    prop_assert!((CONFIDENCE_FLOOR..=1.0).contains(&c));
                    prop_assert_eq!(m == 1.0, design.values[r][j].is_none());
                    if m == 0.0 {
                        prop_assert_eq!(c, 1.0);
                    } else {
                        prop_assert_eq!(c, CONFIDENCE_FLOOR.max(1.0 - ds.missing_rates[j]));
                        if ds.missing_rates[j] > 0.0 {
                            prop_assert!(c < 1.0);
                        }
                    }
                }
            }
        }
        // A raw missing numeric cell is exactly a masked encoded cell.
        for (i, &r) in split.train.iter().enumerate() {
            for j in 0..numeric {
                prop_assert_eq!(raw.cells()[r][j].is_missing(), ds.train.m.get(i, j) == 1.0);
            }
        }
    }

    #[test]
    fn injection_is_deterministic_and_never_touches_labels(
        seed in any::<u64>(), rate in 0.0f64..0.6, mech in prop_oneof![Just(Mechanism::Mcar), Just(Mechanism::Mar), Just(Mechanism::Mnar)],
    ) {
        let raw = complete_table(seed, 60, 5);
        let spec = MissingnessSpec::new(mech, rate, seed);
        let (a, ra) = inject(&raw, &spec).unwrap();
        let (b, rb) = inject(&raw, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(ra, rb);
        prop_assert_eq!(a.labels(), raw.labels());
        for (orig, row) in raw.cells().iter().zip(a.cells()) {
            for (o, c) in orig.iter().zip(row) {
                prop_assert!(c.is_missing() || c == o);
            }
        }
    }

    #[test]
    fn realized_rate_tracks_request(
        seed in any::<u64>(), rate in 0.05f64..0.6, mech in prop_oneof![Just(Mechanism::Mcar), Just(Mechanism::Mar), Just(Mechanism::Mnar)],
    ) {
        // iid draws only meet ±0.03 with high probability; 1400 rows keep it beyond 5σ even on MAR target cells.
        let raw = complete_table(seed, 1400, 8);
        let (out, report) = inject(&raw, &MissingnessSpec::new(mech, rate, seed)).unwrap();
        prop_assert!((report.realized_rate() - rate).abs() <= 0.03, "{mech} {rate} -> {}", report.realized_rate());
        if mech != Mechanism::Mar {
            prop_assert!((out.missing_fraction() - rate).abs() <= 0.03);
        }
    }
}

#[test]
fn mcar_mask_is_uncorrelated_with_values() {
    let raw = complete_table(9, 2000, 5);
    let (out, _) = inject(&raw, &MissingnessSpec::new(Mechanism::Mcar, 0.3, 9)).unwrap();
    let mut pairs = Vec::new();
    for (orig, row) in raw.cells().iter().zip(out.cells()) {
        for (o, c) in orig.iter().zip(row) {
            let Cell::Value(v) = o else { unreachable!() };
            pairs.push((*v, if c.is_missing() { 1.0 } else { 0.0 }));
        }
    }
    assert_eq!(pairs.len(), 10_000);
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let cov = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n;
    let sx = (pairs.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = (pairs.iter().map(|(_, y)| (y - my).powi(2)).sum::<f64>() / n).sqrt();
    let r = cov / (sx * sy);
    assert!(r.abs() <= 0.05, "correlation {r}");
}

#[test]
fn mnar_masks_track_extremeness() {
    let raw = complete_table(4, 2000, 5);
    let (out, _) = inject(&raw, &MissingnessSpec::new(Mechanism::Mnar, 0.3, 4)).unwrap();
    let (mut inner, mut outer) = ((0.0, 0.0), (0.0, 0.0));
    for (orig, row) in raw.cells().iter().zip(out.cells()) {
        for (o, c) in orig.iter().zip(row) {
            let Cell::Value(v) = o else { unreachable!() };
            let bucket = if v.abs() < 2.5 { &mut inner } else { &mut outer };
            bucket.0 += if c.is_missing() { 1.0 } else { 0.0 };
            bucket.1 += 1.0;
        }
    }
    assert!(outer.0 / outer.1 > inner.0 / inner.1 + 0.2);
}
