use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use trichannel::gp::history_csv;
use trichannel::metrics::MetricReport;
use trichannel::missingness::{Mechanism, MissingnessSpec};
use trichannel::network::Activation;
use trichannel::runner::{
    self, aggregate_csv, emit_results, final_fit, load_dataset, prepare_run, rate_sweep, run_ablation, run_evolved,
    write_sweep, Ablation, AggregateRow, ExperimentConfig,
};
use trichannel::tree::ActivationTree;

#[derive(Parser)]
#[command(name = "trichannel", version, about = "Evolve and compare three-channel activations on incomplete tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; run r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true, default_value = "results")]
    out_dir: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Missingness rate(s). MCAR unless the config names a mechanism.
    #[arg(long, global = true, value_delimiter = ',')]
    rate: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the dataset and run the data pipeline once.
    Prepare,
    /// One genetic search on the first seed, winner retrained and tested.
    Evolve,
    /// Every configured method on every seed.
    Compare,
    /// The evolved method under ablation variants.
    Ablate {
        /// Variants to run; all four by default.
        #[arg(long, value_delimiter = ',')]
        variant: Vec<String>,
    },
    /// One comparison per missingness rate.
    Sweep,
    /// Train and test a network with a fixed formula.
    EvalFormula {
        /// Prefix formula, e.g. "(add (min (mul x m) x) x)".
        formula: String,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_path(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = common.runs {
        cfg.runs = r;
    }
    if let [rate] = common.rate[..] {
        let mut spec = cfg.missingness.unwrap_or_else(|| MissingnessSpec::new(Mechanism::Mcar, rate, 0));
        spec.rate = rate;
        cfg.missingness = Some(spec);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_aggregate(rows: &[AggregateRow]) {
    print!("{:<24}", "method");
    for n in MetricReport::NAMES {
        print!(" {n:>15}");
    }
    println!();
    for a in rows {
        print!("{:<24}", a.method);
        for k in 0..6 {
            print!(" {:>7.4}±{:<7.4}", a.mean[k], a.std[k]);
        }
        if a.failures > 0 {
            print!("  ({} failed)", a.failures);
        }
        println!();
    }
}

fn print_report(label: &str, r: &MetricReport) {
    let cells: Vec<String> = MetricReport::NAMES
        .iter()
        .zip(r.values())
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect();
    println!("{label}: {}", cells.join(" "));
}

fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    let raw = load_dataset(&cfg.dataset)?;
    println!(
        "dataset {}: {} rows, {} features, {} classes, {:.4} missing",
        raw.name(),
        raw.n_rows(),
        raw.n_features(),
        raw.class_count(),
        raw.missing_fraction()
    );
    let p = prepare_run(&raw, cfg, cfg.base_seed)?;
    if let Some(r) = p.realized_rate {
        println!("injected rate {r:.4}");
    }
    println!("encoded width {}", p.data.width());
    for (name, s) in [("train", &p.data.train), ("val", &p.data.val), ("test", &p.data.test)] {
        println!("{name:<5} {:>6} rows, {:.4} missing", s.len(), s.missing_fraction());
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn evolve(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let raw = load_dataset(&cfg.dataset)?;
    let p = prepare_run(&raw, cfg, cfg.base_seed)?;
    let (winner, result, report) = run_evolved(&p, &cfg.gp, &cfg.mlp, cfg.ablation)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_file(&out.join("history.csv"), &history_csv(&result.history)?)?;
    write_file(&out.join("winner.txt"), &format!("{winner}\n"))?;
    println!("winner {winner} (generation {}, fitness {:.4})", result.best_generation, result.best.total());
    println!("{} networks trained", result.trainings);
    print_report("test", &report);
    Ok(())
}

fn eval_formula(cfg: &ExperimentConfig, formula: &str, runs_given: bool) -> Result<()> {
    let tree: ActivationTree = formula.parse().with_context(|| format!("parsing `{formula}`"))?;
    let raw = load_dataset(&cfg.dataset)?;
    let seeds = if runs_given { cfg.seeds() } else { vec![cfg.base_seed] };
    let mut acc = Vec::new();
    for seed in seeds {
        let p = prepare_run(&raw, cfg, seed)?;
        let r = final_fit(&p.data, &cfg.mlp, Activation::Tree(tree.clone()), seed)?;
        print_report(&format!("seed {seed}"), &r);
        acc.push(r.accuracy);
    }
    if acc.len() > 1 {
        let (m, s) = runner::mean_std(&acc);
        println!("accuracy {m:.4} ± {s:.4}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Cli { command, common } = Cli::parse();
    run(command, common)
}

fn run(command: Command, common: Common) -> Result<()> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = load_config(&common)?;
    let out = &common.out_dir;
    match command {
        Command::Prepare => prepare(&cfg),
        Command::Evolve => evolve(&cfg, out),
        Command::Compare => {
            let outcome = runner::run_experiment(&cfg)?;
            emit_results(&outcome, &cfg, out)?;
            print_aggregate(&outcome.aggregate);
            Ok(())
        }
        Command::Ablate { variant } => {
            let variants: Vec<Ablation> = if variant.is_empty() {
                Ablation::ALL.to_vec()
            } else {
                variant.iter().map(|v| v.parse()).collect::<Result<_, _>>()?
            };
            if cfg.missingness.is_none() {
                log::warn!("ablation without injected missingness: m and c carry no signal unless the data has gaps");
            }
            let raw = load_dataset(&cfg.dataset)?;
            cfg.methods = vec![runner::Method::Evolved];
            let outcome = run_ablation(&raw, &cfg, &variants)?;
            emit_results(&outcome, &cfg, out)?;
            write_file(&out.join("ablation.csv"), &aggregate_csv(&outcome.aggregate)?)?;
            print_aggregate(&outcome.aggregate);
            Ok(())
        }
        Command::Sweep => {
            let rates = if common.rate.is_empty() {
                cfg.sweep_rates.clone()
            } else {
                common.rate.clone()
            };
            if rates.iter().any(|r| !(0.0..1.0).contains(r)) {
                bail!("sweep rates must lie in [0, 1)");
            }
            let raw = load_dataset(&cfg.dataset)?;
            let results = rate_sweep(&raw, &cfg, &rates)?;
            write_sweep(&results, &cfg, out)?;
            for (rate, o) in &results {
                println!("rate {rate}");
                print_aggregate(&o.aggregate);
            }
            Ok(())
        }
        Command::EvalFormula { formula } => eval_formula(&cfg, &formula, common.runs.is_some()),
    }
}
