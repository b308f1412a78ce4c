//! Command-line workbench around the solver library.
//!
//! Typical flow:
//! ```text
//! bundlenet generate   --config config.json --dataset data/mcnd-small
//! bundlenet reference  --dataset data/mcnd-small --threads 4
//! bundlenet gridsearch --dataset data/mcnd-small --method bundle-constant --out results
//! bundlenet train      --dataset data/mcnd-small --checkpoint model.ckpt
//! bundlenet evaluate   --dataset data/mcnd-small --method learned \
//!        --checkpoint model.ckpt --budgets 10,25,50,100 --out results
//! bundlenet report     --results results --out report
//! ```

use anyhow::{bail, Context, Result};
use bundlenet::harness::{
    cmd_evaluate, cmd_generate, cmd_gridsearch, cmd_reference, cmd_report, cmd_train,
    read_result_rows, read_series_records, train_log_path, write_best_table, write_result_rows,
    write_series_records, HarnessConfig, Method,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "bundlenet", version, about = "Bundle-method workbench for Lagrangian dual bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config with generator/eta/solver/train sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (holds manifest.json and instance files).
    #[arg(long)]
    dataset: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Seed recorded in result rows.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Common {
    fn load_config(&self) -> Result<HarnessConfig> {
        match &self.config {
            Some(path) => {
                HarnessConfig::load(path).with_context(|| format!("loading {}", path.display()))
            }
            None => Ok(HarnessConfig::default()),
        }
    }
}

fn parse_budgets(text: &str) -> Result<Vec<usize>> {
    let budgets: Vec<usize> = text
        .split(',')
        .map(|part| part.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("invalid budget list {text:?}"))?;
    if budgets.is_empty() || budgets.contains(&0) {
        bail!("budgets must be positive iteration counts");
    }
    Ok(budgets)
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of instances plus its manifest.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Compute (or improve) per-instance reference bounds.
    Reference {
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search the initial step size for one method over the test split.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        /// One of bundle-constant|bundle-soft|bundle-hard|bundle-balancing|descent|adam.
        #[arg(long)]
        method: String,
        #[arg(long, default_value = "10,25,50,100")]
        budgets: String,
        /// Output directory for result artifacts.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Train the learned solver on the train split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Checkpoint output path.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Evaluate one method over the test split at the given budgets.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        /// Checkpoint path (required for --method learned).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "10,25,50,100")]
        budgets: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Merge evaluation artifacts into the final CSV and plot-data series.
    Report {
        /// Directory containing *.rows.csv / *.series.csv artifacts.
        #[arg(long, default_value = "results")]
        results: PathBuf,
        /// Output directory for rows.csv and the series files.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { common } => {
            let config = common.load_config()?;
            let manifest = cmd_generate(&config, &common.dataset)?;
            println!(
                "generated {} instances into {}",
                manifest.instances.len(),
                common.dataset.display()
            );
        }
        Command::Reference { common } => {
            let config = common.load_config()?;
            let manifest = cmd_reference(&common.dataset, &config, common.threads)?;
            let done = manifest
                .instances
                .iter()
                .filter(|e| e.reference.is_some())
                .count();
            println!(
                "references stored for {done}/{} instances",
                manifest.instances.len()
            );
        }
        Command::Gridsearch {
            common,
            method,
            budgets,
            out,
        } => {
            let config = common.load_config()?;
            let method = Method::parse(&method)?;
            let budgets = parse_budgets(&budgets)?;
            let outcome = cmd_gridsearch(
                &common.dataset,
                &config,
                method,
                &budgets,
                common.threads,
                common.seed,
            )?;
            std::fs::create_dir_all(&out)?;
            let dataset_name = outcome
                .rows
                .first()
                .map(|r| r.dataset.clone())
                .unwrap_or_default();
            let prefix = format!("grid_{}_{}", dataset_name, method.label());
            write_result_rows(&out.join(format!("{prefix}.rows.csv")), &outcome.rows)?;
            write_series_records(&out.join(format!("{prefix}.series.csv")), &outcome.series)?;
            write_best_table(&out.join(format!("{prefix}.best.csv")), &outcome.best)?;
            for cell in &outcome.best {
                println!(
                    "budget {:>4}: best eta0 = {} (mean gap {:.4}%)",
                    cell.budget, cell.eta0, cell.mean_gap
                );
            }
        }
        Command::Train { common, checkpoint } => {
            let config = common.load_config()?;
            let log = cmd_train(&common.dataset, &config, &checkpoint)?;
            if let (Some(first), Some(last)) = (log.first(), log.last()) {
                println!(
                    "trained {} epochs: mean loss {:.6} -> {:.6}; checkpoint {}; log {}",
                    log.len(),
                    first.mean_loss,
                    last.mean_loss,
                    checkpoint.display(),
                    train_log_path(&checkpoint).display()
                );
            }
        }
        Command::Evaluate {
            common,
            method,
            checkpoint,
            budgets,
            out,
        } => {
            let config = common.load_config()?;
            let method = Method::parse(&method)?;
            let budgets = parse_budgets(&budgets)?;
            let outcome = cmd_evaluate(
                &common.dataset,
                &config,
                method,
                checkpoint.as_deref(),
                &budgets,
                common.threads,
                common.seed,
            )?;
            std::fs::create_dir_all(&out)?;
            let dataset_name = outcome
                .rows
                .first()
                .map(|r| r.dataset.clone())
                .unwrap_or_default();
            let eta_tag = outcome
                .rows
                .first()
                .map(|r| r.eta0.replace('.', "p"))
                .unwrap_or_default();
            let prefix = format!("eval_{}_{}_{}", dataset_name, method.label(), eta_tag);
            write_result_rows(&out.join(format!("{prefix}.rows.csv")), &outcome.rows)?;
            write_series_records(&out.join(format!("{prefix}.series.csv")), &outcome.series)?;
            for budget in &budgets {
                let gaps: Vec<f64> = outcome
                    .rows
                    .iter()
                    .filter(|r| r.budget == *budget)
                    .map(|r| r.gap_pct)
                    .collect();
                let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
                println!("budget {budget:>4}: mean gap {mean:.4}%");
            }
        }
        Command::Report { results, out } => {
            let mut rows = Vec::new();
            let mut series = Vec::new();
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&results)
                .with_context(|| format!("reading {}", results.display()))?
                .map(|entry| entry.map(|e| e.path()))
                .collect::<std::result::Result<_, _>>()?;
            paths.sort();
            for path in paths {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.ends_with(".rows.csv") {
                    rows.extend(read_result_rows(&path)?);
                } else if name.ends_with(".series.csv") {
                    series.extend(read_series_records(&path)?);
                }
            }
            let report = cmd_report(&rows, &series, &out)?;
            println!(
                "wrote {} and {} series files",
                report.rows_csv.display(),
                report.series_files.len()
            );
        }
    }
    Ok(())
}
