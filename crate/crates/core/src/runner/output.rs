//! Result files. Everything except `timings.csv` is a pure function of the
//! config, so two runs of one config write identical bytes.

use std::fs;
use std::path::Path;

use super::{AggregateRow, ExperimentConfig, ExperimentOutcome, RunOutcome, RunRecord};
use crate::error::{Error, Result};
use crate::gp::history_csv;
use crate::metrics::MetricReport;

pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "method", "acc_mean", "acc_std", "prec_mean", "prec_std", "rec_mean", "rec_std", "spec_mean", "spec_std", "f1_mean",
    "f1_std", "auc_mean", "auc_std",
];

const SWEEP_COLUMNS: [&str; 5] = ["rate", "method", "metric", "mean", "std"];

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn runs_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method", "ablation", "run", "seed", "status"];
    header.extend(MetricReport::NAMES);
    header.extend(["realized_rate", "trainings", "winner", "error"]);
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.method.to_string(), r.ablation.to_string(), r.run.to_string(), r.seed.to_string()];
        let (status, metrics, error) = match &r.outcome {
            RunOutcome::Completed(m) => ("ok", m.values().map(num).to_vec(), String::new()),
            RunOutcome::Failed(e) => ("failed", vec![String::new(); 6], e.clone()),
        };
        row.push(status.into());
        row.extend(metrics);
        row.push(r.realized_rate.map(num).unwrap_or_default());
        row.push(r.trainings.to_string());
        row.push(r.winner.clone().unwrap_or_default());
        row.push(error);
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_COLUMNS).map_err(csv_err)?;
    for a in rows {
        let mut row = vec![a.method.clone()];
        for k in 0..6 {
            row.push(num(a.mean[k]));
            row.push(num(a.std[k]));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

fn timings_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "ablation", "seed", "wall_seconds"]).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.method.to_string(),
            r.ablation.to_string(),
            r.seed.to_string(),
            format!("{:.3}", r.wall_seconds),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn manifest_text(config: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<String> {
    let seeds: Vec<String> = config.seeds().iter().map(u64::to_string).collect();
    let mut text = format!(
        "# trichannel {}\n# seeds: {}\n# records: {}\n",
        env!("CARGO_PKG_VERSION"),
        seeds.join(" "),
        outcome.records.len()
    );
    text.push_str(&config.to_toml()?);
    Ok(text)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `runs.csv`, `aggregate.csv`, `winners.txt` (one formula per
/// successful evolved run), `manifest.txt` (the full config and seeds),
/// `timings.csv` and one search history per evolved run.
pub fn emit_results(outcome: &ExperimentOutcome, config: &ExperimentConfig, dir: &Path) -> Result<()> {
    if outcome.records.is_empty() {
        return Err(Error::Config("no records to write".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("runs.csv"), &runs_csv(&outcome.records)?)?;
    write(&dir.join("aggregate.csv"), &aggregate_csv(&outcome.aggregate)?)?;
    let winners: String = outcome.winners().map(|w| format!("{w}\n")).collect();
    write(&dir.join("winners.txt"), &winners)?;
    write(&dir.join("manifest.txt"), &manifest_text(config, outcome)?)?;
    write(&dir.join("timings.csv"), &timings_csv(&outcome.records)?)?;
    let with_history: Vec<&RunRecord> = outcome.records.iter().filter(|r| !r.history.is_empty()).collect();
    if !with_history.is_empty() {
        let hist = dir.join("histories");
        fs::create_dir_all(&hist).map_err(|e| Error::io(&hist, e))?;
        for r in with_history {
            let name = format!("{}_seed{}.csv", r.ablation, r.seed);
            write(&hist.join(name), &history_csv(&r.history)?)?;
        }
    }
    Ok(())
}

/// Long-format sweep table plus one result directory per rate. Realized
/// injection rates appear under the metric `realized_rate`.
pub fn write_sweep(results: &[(f64, ExperimentOutcome)], config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for (rate, outcome) in results {
        for a in &outcome.aggregate {
            for (k, name) in MetricReport::NAMES.iter().enumerate() {
                w.write_record([num(*rate), a.method.clone(), name.to_string(), num(a.mean[k]), num(a.std[k])])
                    .map_err(csv_err)?;
            }
        }
        let realized: Vec<f64> = outcome
            .records
            .iter()
            .filter(|r| r.method == outcome.records[0].method)
            .filter_map(|r| r.realized_rate)
            .collect();
        let (mean, std) = super::mean_std(&realized);
        w.write_record([num(*rate), "injector".into(), "realized_rate".into(), num(mean), num(std)])
            .map_err(csv_err)?;
        let mut cfg = config.clone();
        if let Some(spec) = cfg.missingness.as_mut() {
            spec.rate = *rate;
        }
        emit_results(outcome, &cfg, &dir.join(format!("rate_{rate}")))?;
    }
    write(&dir.join("sweep.csv"), &finish(w)?)
}
