use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use skd_core::data::{generate_synthetic, write_csv, Manifest};
use skd_core::distill::Method;
use skd_core::harness::{
    self, compare_runs, save_checkpoint, sweep_alpha, sweep_table, Data, DataSource,
    ExperimentConfig, RunResult,
};
use skd_core::Error;

/// Knowledge distillation experiments with a learned logit simplifier.
#[derive(Parser)]
#[command(name = "skd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Distillation method: none, kd, skd-attn, skd-fc1 or skd-fc2.
    #[arg(long)]
    method: Option<Method>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset as train/val CSV plus a manifest.
    GenData {
        /// Config whose `data` section holds the synthetic spec; defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Generator seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Train the teacher with cross-entropy and save its checkpoint.
    TrainTeacher(RunArgs),
    /// Distill a student for every configured seed.
    Distill(RunArgs),
    /// Distill once per configured alpha and rank the results.
    SweepAlpha(RunArgs),
    /// Tabulate saved run results side by side, with pairwise differences.
    Compare {
        /// `run-*.json` files written by `distill`.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check every tape gradient against finite differences.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidTemperature(_) | Error::InvalidRate(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SKD_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed_override {
        cfg.seeds = vec![seed];
    }
    if let Some(m) = args.method {
        cfg.distill.method = m;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Failure::Run(format!("{}: {e}", cfg.out_dir.display())))?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    harness::write_json(path, value)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn save_run(cfg: &ExperimentConfig, r: &RunResult) -> Result<(), Failure> {
    let path = harness::save_run(cfg, r)?;
    info!("wrote {}", path.display());
    println!(
        "{}: top-1 {:.4} ± {:.4}, agreement {:.4}, {:.3} ms/batch",
        r.label, r.top1.mean, r.top1.std, r.val_agreement.mean, r.ms_per_batch.mean
    );
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenData { config, out, seed_override } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p).map_err(|e| Failure::Config(e.to_string()))?,
                None => ExperimentConfig::default(),
            };
            let DataSource::Synthetic(mut spec) = cfg.data else {
                return Err(Failure::Config("gen-data needs a synthetic data spec".into()));
            };
            if let Some(s) = seed_override {
                spec.seed = s;
            }
            let (train, val) = generate_synthetic(&spec)?;
            fs::create_dir_all(&out).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
            write_csv(&train, &out.join("train.csv"))?;
            write_csv(&val, &out.join("val.csv"))?;
            write_json(&out.join("manifest.json"), &Manifest::new(&spec, &train, &val))?;
            println!("{} train / {} val samples in {}", train.len(), val.len(), out.display());
        }
        Command::TrainTeacher(args) => {
            let mut cfg = load_config(&args)?;
            if let Some(seed) = args.seed_override {
                cfg.teacher.seed = seed;
            }
            let data = Data::load(&cfg.data)?;
            let run = harness::train_teacher(&cfg, &data)?;
            save_checkpoint(&cfg.out_dir.join("teacher.json"), &run.checkpoint)?;
            write_json(&cfg.out_dir.join("teacher-metrics.json"), &run.metrics)?;
            if let Some(m) = run.metrics.last() {
                println!("teacher: val top-1 {:.4}, train top-1 {:.4}", m.val_top1, m.train_top1);
            }
        }
        Command::Distill(args) => {
            let cfg = load_config(&args)?;
            let data = Data::load(&cfg.data)?;
            let t = harness::resolve_teacher(&cfg, &data)?;
            let r = harness::distill(&cfg, &data, &t)?;
            save_run(&cfg, &r)?;
        }
        Command::SweepAlpha(args) => {
            let cfg = load_config(&args)?;
            if !cfg.distill.method.uses_simplifier() {
                return Err(Failure::Config(format!("sweep-alpha needs an skd method, got {}", cfg.distill.method)));
            }
            let data = Data::load(&cfg.data)?;
            let t = harness::resolve_teacher(&cfg, &data)?;
            let rows = sweep_alpha(&cfg, &data, &t, &cfg.alphas)?;
            let table = sweep_table(&rows);
            table.write_csv(&cfg.out_dir.join("sweep.csv"))?;
            write_json(&cfg.out_dir.join("sweep.json"), &rows)?;
            print!("{}", table.to_text());
            if rows.iter().any(|r| r.result.is_err()) {
                return Err(Failure::Run("some sweep runs failed".into()));
            }
        }
        Command::Compare { results, out } => {
            let runs = results
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))?;
                    serde_json::from_str::<RunResult>(&text).map_err(|e| Failure::Run(format!("{}: {e}", p.display())))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let table = compare_runs(&runs)?.table();
            fs::create_dir_all(&out).map_err(|e| Failure::Run(format!("{}: {e}", out.display())))?;
            table.write_csv(&out.join("comparison.csv"))?;
            print!("{}", table.to_text());
        }
        Command::GradCheck { cases, seed } => {
            let entries = harness::gradcheck::suite(cases, seed)?;
            let mut ok = true;
            for e in &entries {
                println!(
                    "{:<14} {:>4} cases  max rel err {:.2e}  {}",
                    e.name,
                    e.cases,
                    e.max_rel_error,
                    if e.passed() { "ok" } else { "FAILED" }
                );
                ok &= e.passed();
            }
            if !ok {
                return Err(Failure::Run("gradient check failed".into()));
            }
        }
    }
    Ok(())
}
