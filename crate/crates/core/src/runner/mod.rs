//! End-to-end experiments: injection, splitting, channelization, search,
//! final training and test evaluation, repeated over consecutive seeds.
//!
//! Every method in a run shares the seed `base_seed + r`, and with it the
//! same injected mask, split and channel matrices.

pub mod config;
pub mod output;

use std::time::Instant;

use crate::data::{
    channelize, encode_features, stratified_split, synthetic::extreme_count_dataset, ChannelizedDataset, Manifest,
    RawDataset,
};
use crate::error::{Error, Result};
use crate::gp::{evolve, EvolutionResult, GpConfig, HistoryRecord, NetworkEvaluator};
use crate::metrics::{evaluate, MetricReport};
use crate::missingness::inject;
use crate::network::{train, Activation, ChannelMode, MlpConfig};
use crate::numeric::{Matrix, RngStream};
use crate::tree::{ActivationTree, Channel, TerminalSet};

pub use config::{Ablation, DatasetSource, ExperimentConfig, Method};
pub use output::{aggregate_csv, emit_results, runs_csv, write_sweep, AGGREGATE_COLUMNS};

/// Loads or generates the configured dataset.
pub fn load_dataset(source: &DatasetSource) -> Result<RawDataset> {
    match source {
        DatasetSource::Manifest(path) => Manifest::from_path(path)?.load(),
        DatasetSource::Synthetic {
            rows,
            features,
            min_extreme,
            seed,
        } => {
            if *features == 0 || *min_extreme > *features {
                return Err(Error::Config("synthetic dataset needs 1 <= min_extreme <= features".into()));
            }
            Ok(extreme_count_dataset(*rows, *features, *min_extreme, &mut RngStream::new(*seed)))
        }
    }
}

/// The channelized data of one run, with the realized injection rate.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub seed: u64,
    pub data: ChannelizedDataset,
    pub realized_rate: Option<f64>,
}

/// Injects (when configured), splits, encodes on the training rows and
/// channelizes, all keyed by `seed`.
pub fn prepare_run(raw: &RawDataset, config: &ExperimentConfig, seed: u64) -> Result<PreparedRun> {
    let (raw, realized_rate) = match &config.missingness {
        Some(spec) => {
            let mut spec = *spec;
            spec.seed = seed;
            let (injected, report) = inject(raw, &spec)?;
            (injected, Some(report.realized_rate()))
        }
        None => (raw.clone(), None),
    };
    let mut split = config.split;
    split.seed = seed;
    let indices = stratified_split(&raw, &split)?;
    let design = encode_features(&raw, &indices.train)?;
    let data = channelize(&design, &indices, config.tau)?;
    Ok(PreparedRun {
        seed,
        data,
        realized_rate,
    })
}

/// Experiment wiring for one ablation variant.
#[derive(Clone, Debug)]
pub struct AblationWiring {
    pub data: ChannelizedDataset,
    pub terminals: TerminalSet,
    pub mlp: MlpConfig,
}

fn fill(m: &Matrix, value: f64) -> Matrix {
    Matrix::filled(m.rows(), m.cols(), value).expect("finite fill value")
}

/// Removes one component: `no_confidence` drops terminal `c` and feeds
/// `c = 1`, `no_flag` drops `m` and feeds `m = 0`, `no_channelprop`
/// broadcasts the input-layer channel means to every hidden unit.
pub fn apply_ablation(variant: Ablation, data: &ChannelizedDataset, mlp: &MlpConfig) -> AblationWiring {
    let mut data = data.clone();
    let mut mlp = mlp.clone();
    let mut terminals = TerminalSet::default();
    match variant {
        Ablation::Full => {}
        Ablation::NoConfidence => {
            terminals = terminals.without(Channel::C);
            for s in [&mut data.train, &mut data.val, &mut data.test] {
                s.c = fill(&s.c, 1.0);
            }
        }
        Ablation::NoFlag => {
            terminals = terminals.without(Channel::M);
            for s in [&mut data.train, &mut data.val, &mut data.test] {
                s.m = fill(&s.m, 0.0);
            }
        }
        Ablation::NoChannelprop => mlp.channel_mode = ChannelMode::UniformBroadcast,
    }
    AblationWiring { data, terminals, mlp }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Completed(MetricReport),
    Failed(String),
}

/// One method on one seed.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub method: Method,
    pub ablation: Ablation,
    pub run: usize,
    pub seed: u64,
    /// Prefix form of the evolved activation.
    pub winner: Option<String>,
    pub outcome: RunOutcome,
    pub wall_seconds: f64,
    pub realized_rate: Option<f64>,
    /// Networks trained during search, the final one excluded.
    pub trainings: usize,
    pub history: Vec<HistoryRecord>,
}

impl RunRecord {
    pub fn metrics(&self) -> Option<&MetricReport> {
        match &self.outcome {
            RunOutcome::Completed(r) => Some(r),
            RunOutcome::Failed(_) => None,
        }
    }
}

/// Mean and sample standard deviation of each metric over the successful
/// runs of one method.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub successes: usize,
    pub failures: usize,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Label used in tables: the method, suffixed by the ablation variant when
/// one is active.
pub fn method_label(method: Method, ablation: Ablation) -> String {
    match (method, ablation) {
        (Method::Evolved, a) if a != Ablation::Full => format!("{method}[{a}]"),
        _ => method.to_string(),
    }
}

pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut labels: Vec<String> = Vec::new();
    for r in records {
        let l = method_label(r.method, r.ablation);
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| method_label(r.method, r.ablation) == label).collect();
            let ok: Vec<[f64; 6]> = group.iter().filter_map(|r| r.metrics()).map(MetricReport::values).collect();
            let failures = group.len() - ok.len();
            if failures > 0 {
                log::warn!("{label}: {failures} failed run(s) left out of the aggregate");
            }
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for k in 0..6 {
                let col: Vec<f64> = ok.iter().map(|v| v[k]).collect();
                (mean[k], std[k]) = mean_std(&col);
            }
            AggregateRow {
                method: label,
                successes: ok.len(),
                failures,
                mean,
                std,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentOutcome {
    /// Mean test accuracy of a method, if any run succeeded.
    pub fn mean_accuracy(&self, label: &str) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|a| a.method == label && a.successes > 0)
            .map(|a| a.mean[0])
    }

    pub fn winners(&self) -> impl Iterator<Item = &str> {
        self.records
            .iter()
            .filter(|r| r.metrics().is_some())
            .filter_map(|r| r.winner.as_deref())
    }
}

fn test_report(model: &crate::network::Mlp, data: &ChannelizedDataset) -> Result<MetricReport> {
    let probs = model.predict_proba(&data.test.state())?;
    evaluate(&data.test.y, &probs, data.class_count)
}

/// Searches on the short horizon, then retrains the winner on the full
/// horizon and evaluates it on the test split.
pub fn run_evolved(
    prepared: &PreparedRun,
    gp: &GpConfig,
    mlp: &MlpConfig,
    ablation: Ablation,
) -> Result<(ActivationTree, EvolutionResult, MetricReport)> {
    let wiring = apply_ablation(ablation, &prepared.data, mlp);
    let evaluator = NetworkEvaluator {
        dataset: &wiring.data,
        mlp: wiring.mlp.clone(),
        horizon: wiring.mlp.short,
    };
    let mut gp = gp.clone();
    gp.seed = prepared.seed;
    let result = evolve(&evaluator, &gp, &wiring.terminals)?;
    let winner = result.best.tree.clone();
    let report = final_fit(&wiring.data, &wiring.mlp, Activation::Tree(winner.clone()), prepared.seed)?;
    Ok((winner, result, report))
}

/// Full-horizon training and test metrics for a fixed activation.
pub fn final_fit(data: &ChannelizedDataset, mlp: &MlpConfig, activation: Activation, seed: u64) -> Result<MetricReport> {
    let model = train(
        mlp,
        activation,
        (&data.train.state(), &data.train.y),
        (&data.val.state(), &data.val.y),
        data.class_count,
        mlp.full,
        &mut RngStream::new(seed).derive("final"),
    )?;
    test_report(&model.mlp, data)
}

fn run_method(prepared: &PreparedRun, run: usize, method: Method, config: &ExperimentConfig) -> RunRecord {
    let start = Instant::now();
    let mut record = RunRecord {
        method,
        ablation: if method == Method::Evolved { config.ablation } else { Ablation::Full },
        run,
        seed: prepared.seed,
        winner: None,
        outcome: RunOutcome::Failed(String::new()),
        wall_seconds: 0.0,
        realized_rate: prepared.realized_rate,
        trainings: 0,
        history: Vec::new(),
    };
    let outcome = match method {
        Method::Evolved => run_evolved(prepared, &config.gp, &config.mlp, config.ablation).map(|(w, res, rep)| {
            record.winner = Some(w.to_string());
            record.trainings = res.trainings;
            record.history = res.history;
            rep
        }),
        Method::Baseline(b) => final_fit(&prepared.data, &config.mlp, Activation::Baseline(b), prepared.seed),
    };
    record.outcome = match outcome {
        Ok(r) => RunOutcome::Completed(r),
        Err(e) => {
            log::warn!("{method} seed {}: {e}", prepared.seed);
            RunOutcome::Failed(e.to_string())
        }
    };
    record.wall_seconds = start.elapsed().as_secs_f64();
    record
}

#[cfg(feature = "parallel")]
fn map_runs<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_runs<R>(n: usize, f: impl Fn(usize) -> R) -> Vec<R> {
    (0..n).map(f).collect()
}

/// Runs every configured method on every seed. A dataset or preparation
/// failure aborts; a failure inside one method run is recorded and left out
/// of the aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let raw = load_dataset(&config.dataset)?;
    run_experiment_on(&raw, config)
}

/// As [`run_experiment`], on an already loaded dataset.
pub fn run_experiment_on(raw: &RawDataset, config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let seeds = config.seeds();
    let prepared: Vec<PreparedRun> = map_runs(seeds.len(), |r| prepare_run(raw, config, seeds[r]))
        .into_iter()
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Method)> = (0..seeds.len())
        .flat_map(|r| config.methods.iter().map(move |&m| (r, m)))
        .collect();
    let mut records = map_runs(jobs.len(), |j| {
        let (r, m) = jobs[j];
        run_method(&prepared[r], r, m, config)
    });
    records.sort_by_key(|r| (config.methods.iter().position(|&m| m == r.method), r.run));
    let aggregate = aggregate(&records);
    Ok(ExperimentOutcome { records, aggregate })
}

/// Runs the evolved method once per variant; each variant sees the same
/// seeds and data.
pub fn run_ablation(raw: &RawDataset, config: &ExperimentConfig, variants: &[Ablation]) -> Result<ExperimentOutcome> {
    let mut records = Vec::new();
    for &v in variants {
        let mut cfg = config.clone();
        cfg.methods = vec![Method::Evolved];
        cfg.ablation = v;
        records.extend(run_experiment_on(raw, &cfg)?.records);
    }
    let aggregate = aggregate(&records);
    Ok(ExperimentOutcome { records, aggregate })
}

/// One experiment per missingness rate, all with the same base seed. The
/// configured mechanism is used, MCAR when none is configured.
pub fn rate_sweep(raw: &RawDataset, config: &ExperimentConfig, rates: &[f64]) -> Result<Vec<(f64, ExperimentOutcome)>> {
    if rates.is_empty() {
        return Err(Error::Config("rate sweep needs at least one rate".into()));
    }
    rates
        .iter()
        .map(|&rate| {
            let mut cfg = config.clone();
            let mut spec = cfg
                .missingness
                .unwrap_or_else(|| crate::missingness::MissingnessSpec::new(crate::missingness::Mechanism::Mcar, rate, 0));
            spec.rate = rate;
            cfg.missingness = Some(spec);
            Ok((rate, run_experiment_on(raw, &cfg)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::missingness::{Mechanism, MissingnessSpec};
    use crate::network::Baseline;

    fn toy_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            dataset: DatasetSource::Synthetic {
                rows: 120,
                features: 4,
                min_extreme: 2,
                seed: 3,
            },
            missingness: Some(MissingnessSpec::new(Mechanism::Mcar, 0.2, 0)),
            methods: vec![Method::Baseline(Baseline::Relu)],
            runs: 2,
            base_seed: 11,
            ..ExperimentConfig::default()
        };
        cfg.mlp.hidden_widths = vec![6];
        cfg.mlp.full.max_epochs = 5;
        cfg.mlp.short.max_epochs = 2;
        cfg.gp.population_size = 4;
        cfg.gp.generations = 2;
        cfg
    }

    #[test]
    fn one_record_per_method_and_seed() {
        let cfg = toy_config();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![11, 12]);
        let again = run_experiment(&cfg).unwrap();
        assert_eq!(aggregate_csv(&out.aggregate).unwrap(), aggregate_csv(&again.aggregate).unwrap());
    }

    #[test]
    fn methods_share_prepared_data() {
        let cfg = toy_config();
        let raw = load_dataset(&cfg.dataset).unwrap();
        let a = prepare_run(&raw, &cfg, 5).unwrap();
        let b = prepare_run(&raw, &cfg, 5).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, prepare_run(&raw, &cfg, 6).unwrap().data);
    }

    #[test]
    fn zero_rate_leaves_channels_trivial() {
        let mut cfg = toy_config();
        cfg.missingness = Some(MissingnessSpec::new(Mechanism::Mcar, 0.0, 0));
        let raw = load_dataset(&cfg.dataset).unwrap();
        let p = prepare_run(&raw, &cfg, 0).unwrap();
        for s in [&p.data.train, &p.data.val, &p.data.test] {
            assert!(s.m.as_slice().iter().all(|&v| v == 0.0));
            assert!(s.c.as_slice().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn ablation_wiring() {
        let cfg = toy_config();
        let raw = load_dataset(&cfg.dataset).unwrap();
        let p = prepare_run(&raw, &cfg, 0).unwrap();
        let w = apply_ablation(Ablation::NoConfidence, &p.data, &cfg.mlp);
        assert!(!w.terminals.allows(Channel::C));
        assert!(w.data.train.c.as_slice().iter().all(|&v| v == 1.0));
        assert_eq!(w.data.train.m, p.data.train.m);
        let w = apply_ablation(Ablation::NoFlag, &p.data, &cfg.mlp);
        assert!(!w.terminals.allows(Channel::M));
        assert!(w.data.val.m.as_slice().iter().all(|&v| v == 0.0));
        let w = apply_ablation(Ablation::NoChannelprop, &p.data, &cfg.mlp);
        assert_eq!(w.mlp.channel_mode, ChannelMode::UniformBroadcast);
        assert_eq!(w.terminals, TerminalSet::default());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
    }

    #[test]
    fn failed_runs_are_left_out() {
        let mut cfg = toy_config();
        cfg.mlp.learning_rate = 1e300;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.records.iter().all(|r| matches!(r.outcome, RunOutcome::Failed(_))));
        assert_eq!(out.aggregate[0].successes, 0);
        assert_eq!(out.aggregate[0].failures, 2);
    }
}
