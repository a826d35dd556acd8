use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use netcpr::agents::AlgorithmKind;
use netcpr::pipeline::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "netcpr", version, about = "Train, label and analyse agents on a shared water reservoir")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Train one team per (algorithm, rate, alpha, seed)
    Train,
    /// Measure restraint, label policies and write heatmaps
    Evaluate,
    /// Estimate meta-games and draw Schelling diagrams
    Schelling,
    /// Social metrics and bootstrap bounds per algorithm
    Report,
    /// Run every stage in order
    All,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); omitted fields take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, env = "NETCPR_OUT")]
    out: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, default_value_t = default_jobs())]
    jobs: usize,
    /// Comma-separated algorithms, e.g. ia2c,neurcomm
    #[arg(long, global = true, value_delimiter = ',')]
    kinds: Option<Vec<AlgorithmKind>>,
    /// Comma-separated regeneration rates
    #[arg(long, global = true, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// Comma-separated connectivity weights
    #[arg(long, global = true, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load_config(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = match &c.config {
        Some(path) => pipeline::read_json(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        config.master_seed = seed;
    }
    if let Some(kinds) = &c.kinds {
        config.kinds = kinds.clone();
    }
    if let Some(rates) = &c.rates {
        config.rates = rates.clone();
    }
    if let Some(alphas) = &c.alphas {
        config.alphas = alphas.clone();
    }
    let out = c
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    config.validate()?;
    Ok((config, out))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (config, out) = load_config(&cli.common)?;
    let jobs = cli.common.jobs;
    match cli.command {
        Command::Train => {
            let s = pipeline::cmd_train(&config, &out, jobs)?;
            println!("trained {} teams, {} already present", s.trained, s.skipped);
        }
        Command::Evaluate => {
            let s = pipeline::cmd_evaluate(&config, &out, jobs)?;
            println!("labelled {} teams", s.evaluated);
            for m in &s.missing {
                eprintln!("missing: {m}");
            }
            for c in &s.coverage {
                println!(
                    "{} alpha={}: {} cooperate, {} defect, {} unlabeled",
                    c.algorithm, c.alpha, c.cooperate, c.defect, c.unlabeled
                );
            }
        }
        Command::Schelling => {
            for s in pipeline::cmd_schelling(&config, &out, jobs)? {
                let ssd = match s.is_ssd {
                    Some(true) => "SSD",
                    Some(false) => "no SSD",
                    None => "incomplete",
                };
                println!("{} alpha={}: {ssd}, equilibria {:?}", s.algorithm, s.alpha, s.equilibria);
                for g in &s.gaps {
                    eprintln!("  gap: {g}");
                }
            }
        }
        Command::Report => {
            let b = pipeline::cmd_report(&config, &out, jobs)?;
            println!("report for {} cells in {}", b.reports.len(), out.join("report").display());
        }
        Command::All => {
            let b = pipeline::cmd_all(&config, &out, jobs)?;
            println!("report for {} cells in {}", b.reports.len(), out.join("report").display());
        }
    }
    Ok(())
}
