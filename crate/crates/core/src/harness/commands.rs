//! The six workbench commands: dataset generation, reference bounds, step
//! size grid search, training, budgeted evaluation and report writing.
//!
//! Evaluation runs each method once at the largest requested budget and reads
//! the smaller budgets off the trace prefix; the algorithms never look at the
//! budget, so the prefix of a long run is exactly the short run. Work is
//! parallelized over (instance, eta0) cells; results are collected in input
//! order, so outputs do not depend on the thread count (wall times aside).

use crate::error::{Error, Result};
use crate::eta::EtaConfig;
use crate::harness::config::{HarnessConfig, Method, ProblemKind};
use crate::harness::manifest::{gap_pct, DatasetManifest, InstanceEntry, Split};
use crate::harness::report::{write_report, IterationRecord, ReportPaths, ResultRow};
use crate::autodiff::Tape;
use crate::network::{
    rollout, LatentMode, NetDims, NetParams, RolloutOptions, TrainConfig, TrainLogRow,
};
use crate::oracles::{
    generate_gap, generate_mcnd, make_min_oracle, save_instance, Instance, MinOracle, Multipliers,
    Oracle,
};
use crate::solver::{run_adam, run_bundle, run_descent};
use crate::trace::{Termination, Trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Initial step sizes explored by the grid search.
pub const ETA0_GRID: [f64; 6] = [0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0];

/// Iteration budget of the per-eta0 probe runs inside the reference command.
const REFERENCE_SWEEP_BUDGET: usize = 150;
/// Iteration budget of the long reference run.
const REFERENCE_LONG_BUDGET: usize = 2000;
const REFERENCE_EPSILON: f64 = 1e-8;

pub fn build_oracle(instance: Instance) -> Result<MinOracle<Instance>> {
    use crate::oracles::DualProblem;
    let start = Multipliers::zeros(instance.dual_dimension(), instance.sign_constrained());
    make_min_oracle(instance, &start)
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))
}

/// Writes instance files plus the manifest; fully deterministic per seed.
pub fn cmd_generate(config: &HarnessConfig, out_dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir)?;
    let gen = &config.generator;
    let mut instances = Vec::new();
    let mut make = |split: Split, count: usize, offset: u64| -> Result<()> {
        let split_name = match split {
            Split::Train => "train",
            Split::Test => "test",
        };
        for i in 0..count {
            let seed = gen.base_seed + offset + i as u64;
            let instance = match gen.problem {
                ProblemKind::Mcnd => Instance::Mcnd(generate_mcnd(&gen.mcnd, seed)?),
                ProblemKind::Gap => Instance::Gap(generate_gap(&gen.gap, seed)?),
            };
            let file = format!("{}-{split_name}-{i:03}.json", gen.name);
            save_instance(&out_dir.join(&file), &instance)?;
            instances.push(InstanceEntry {
                file,
                seed,
                split,
                reference: None,
            });
        }
        Ok(())
    };
    make(Split::Train, gen.train_instances, 0)?;
    make(Split::Test, gen.test_instances, gen.train_instances as u64)?;

    let manifest = DatasetManifest {
        name: gen.name.clone(),
        problem: gen.problem,
        instances,
        generator: serde_json::to_value(gen)?,
    };
    manifest.save(out_dir)?;

    // Round-trip check: everything written must load and validate.
    for entry in &manifest.instances {
        manifest.load_instance(out_dir, entry)?;
    }
    Ok(manifest)
}

fn expect_finished(trace: &Trace, context: &str) -> Result<()> {
    if let Termination::Error(msg) = &trace.termination {
        return Err(Error::contract(format!("{context}: {msg}")));
    }
    Ok(())
}

/// Computes reference bounds: per instance, a coarse constant-eta sweep picks
/// the starting step size, then a long soft-strategy run polishes the bound.
/// Stored references only ever increase (max-merge).
pub fn cmd_reference(dataset_dir: &Path, config: &HarnessConfig, threads: usize) -> Result<DatasetManifest> {
    let (mut manifest, _) = DatasetManifest::load(dataset_dir)?;
    let pool = thread_pool(threads)?;

    let bounds: Vec<Result<f64>> = pool.install(|| {
        manifest
            .instances
            .par_iter()
            .map(|entry| -> Result<f64> {
                let instance = manifest.load_instance(dataset_dir, entry)?;
                let oracle = build_oracle(instance)?;
                let start = vec![0.0; oracle.dimension()];

                let mut best_bound = f64::NEG_INFINITY;
                let mut best_eta0 = ETA0_GRID[0];
                for &eta0 in &ETA0_GRID {
                    let eta = EtaConfig {
                        kind: crate::eta::EtaKind::Constant,
                        eta0,
                        ..config.eta
                    };
                    let solver = config.solver.to_solver_config(eta, REFERENCE_SWEEP_BUDGET);
                    let trace = run_bundle(&oracle, &start, &solver)?;
                    expect_finished(&trace, entry.id())?;
                    let bound = trace.best_raw_lr_within(None);
                    if bound > best_bound {
                        best_bound = bound;
                        best_eta0 = eta0;
                    }
                }

                let eta = EtaConfig {
                    kind: crate::eta::EtaKind::Soft,
                    eta0: best_eta0,
                    ..config.eta
                };
                let mut solver = config.solver.to_solver_config(eta, REFERENCE_LONG_BUDGET);
                solver.epsilon = REFERENCE_EPSILON;
                let trace = run_bundle(&oracle, &start, &solver)?;
                expect_finished(&trace, entry.id())?;
                Ok(best_bound.max(trace.best_raw_lr_within(None)))
            })
            .collect()
    });

    for (index, bound) in bounds.into_iter().enumerate() {
        let bound = bound?;
        if !bound.is_finite() {
            return Err(Error::NonFinite("reference bound"));
        }
        manifest.merge_reference(index, bound);
    }
    manifest.save(dataset_dir)?;
    Ok(manifest)
}

/// One budgeted run of a method on one oracle, returning the full trace at
/// the largest budget.
#[allow(clippy::too_many_arguments)]
fn run_method(
    oracle: &dyn Oracle,
    method: Method,
    eta0: f64,
    budget: usize,
    config: &HarnessConfig,
    checkpoint: Option<&(NetParams, RolloutOptions)>,
) -> Result<Trace> {
    let start = vec![0.0; oracle.dimension()];
    match method {
        Method::Bundle(kind) => {
            let eta = EtaConfig {
                kind,
                eta0,
                ..config.eta
            };
            let solver = config.solver.to_solver_config(eta, budget);
            run_bundle(oracle, &start, &solver)
        }
        Method::Descent => run_descent(oracle, &start, eta0, budget, config.solver.record_times),
        Method::Adam => run_adam(
            oracle,
            &start,
            eta0,
            budget,
            0.9,
            0.999,
            1e-8,
            config.solver.record_times,
        ),
        Method::Learned => {
            let (params, options) = checkpoint.expect("learned method requires a checkpoint");
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = rollout(
                &mut tape,
                &bound,
                &params.dims,
                oracle,
                &start,
                budget,
                options,
                &mut rng,
            )?;
            Ok(out.trace)
        }
    }
}

/// Expands one trace into per-budget result rows and per-iteration records.
#[allow(clippy::too_many_arguments)]
fn collect_outputs(
    trace: &Trace,
    entry: &InstanceEntry,
    dataset: &str,
    method_label: &str,
    eta0_label: &str,
    budgets: &[usize],
    seed: u64,
    rows: &mut Vec<ResultRow>,
    series: &mut Vec<IterationRecord>,
) -> Result<()> {
    let reference = entry
        .reference
        .ok_or_else(|| Error::contract(format!("{}: missing reference", entry.id())))?;
    for &budget in budgets {
        let bound = trace.best_raw_lr_within(Some(budget));
        rows.push(ResultRow {
            dataset: dataset.to_string(),
            instance: entry.id().to_string(),
            method: method_label.to_string(),
            eta0: eta0_label.to_string(),
            budget,
            gap_pct: gap_pct(reference, bound)?,
            bound,
            wall_time_s: trace.cumulative_time_within(budget),
            seed,
        });
    }
    let mut running_best = f64::NEG_INFINITY;
    let mut running_time = 0.0;
    for row in &trace.rows {
        running_best = running_best.max(row.raw_lr);
        running_time += row.wall_time;
        series.push(IterationRecord {
            dataset: dataset.to_string(),
            instance: entry.id().to_string(),
            method: method_label.to_string(),
            eta0: eta0_label.to_string(),
            iteration: row.iteration,
            bound: running_best,
            gap_pct: gap_pct(reference, running_best)?,
            cum_time_s: running_time,
        });
    }
    Ok(())
}

fn format_eta0(eta0: f64) -> String {
    format!("{eta0}")
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub rows: Vec<ResultRow>,
    pub series: Vec<IterationRecord>,
    /// Winning eta0 per budget, with its mean gap over the test split.
    pub best: Vec<BestCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestCell {
    pub method: String,
    pub budget: usize,
    pub eta0: f64,
    pub mean_gap: f64,
}

/// Grid search over the six initial step sizes on the test split.
pub fn cmd_gridsearch(
    dataset_dir: &Path,
    config: &HarnessConfig,
    method: Method,
    budgets: &[usize],
    threads: usize,
    seed: u64,
) -> Result<GridSearchOutcome> {
    if method.needs_checkpoint() {
        return Err(Error::contract(
            "grid search applies to methods with an eta0 parameter, not the learned solver",
        ));
    }
    if budgets.is_empty() {
        return Err(Error::contract("no budgets requested"));
    }
    let (manifest, _) = DatasetManifest::load(dataset_dir)?;
    manifest.require_references(Split::Test)?;
    let max_budget = *budgets.iter().max().expect("nonempty");
    let test: Vec<&InstanceEntry> = manifest.split(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::contract("test split is empty"));
    }

    let mut cells = Vec::new();
    for &eta0 in &ETA0_GRID {
        for entry in &test {
            cells.push((eta0, *entry));
        }
    }
    let pool = thread_pool(threads)?;
    let outputs: Vec<Result<(Vec<ResultRow>, Vec<IterationRecord>)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(eta0, entry)| {
                let instance = manifest.load_instance(dataset_dir, entry)?;
                let oracle = build_oracle(instance)?;
                let trace = run_method(&oracle, method, *eta0, max_budget, config, None)?;
                expect_finished(&trace, entry.id())?;
                let mut rows = Vec::new();
                let mut series = Vec::new();
                collect_outputs(
                    &trace,
                    entry,
                    &manifest.name,
                    method.label(),
                    &format_eta0(*eta0),
                    budgets,
                    seed,
                    &mut rows,
                    &mut series,
                )?;
                Ok((rows, series))
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut series = Vec::new();
    for output in outputs {
        let (r, s) = output?;
        rows.extend(r);
        series.extend(s);
    }

    let mut best = Vec::new();
    for &budget in budgets {
        let mut winner: Option<BestCell> = None;
        for &eta0 in &ETA0_GRID {
            let label = format_eta0(eta0);
            let gaps: Vec<f64> = rows
                .iter()
                .filter(|r| r.budget == budget && r.eta0 == label)
                .map(|r| r.gap_pct)
                .collect();
            let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let better = winner.as_ref().map_or(true, |w| mean_gap < w.mean_gap);
            if better {
                winner = Some(BestCell {
                    method: method.label().to_string(),
                    budget,
                    eta0,
                    mean_gap,
                });
            }
        }
        best.push(winner.expect("grid is nonempty"));
    }
    Ok(GridSearchOutcome { rows, series, best })
}

/// Writes the winning-eta0 table as CSV.
pub fn write_best_table(path: &Path, best: &[BestCell]) -> Result<()> {
    let mut text = String::from("method,budget,eta0,mean_gap\n");
    for cell in best {
        writeln!(
            text,
            "{},{},{},{}",
            cell.method, cell.budget, cell.eta0, cell.mean_gap
        )
        .expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Trains on the train split and writes the checkpoint plus a CSV log.
/// Only train-split files are ever opened.
pub fn cmd_train(
    dataset_dir: &Path,
    config: &HarnessConfig,
    checkpoint_out: &Path,
) -> Result<Vec<TrainLogRow>> {
    let (manifest, _) = DatasetManifest::load(dataset_dir)?;
    let entries: Vec<&InstanceEntry> = manifest.split(Split::Train).collect();
    if entries.is_empty() {
        return Err(Error::contract("train split is empty"));
    }
    let mut oracles = Vec::with_capacity(entries.len());
    for entry in &entries {
        let instance = manifest.load_instance(dataset_dir, entry)?;
        oracles.push(build_oracle(instance)?);
    }
    let oracle_refs: Vec<&dyn Oracle> = oracles.iter().map(|o| o as &dyn Oracle).collect();

    let mut params = NetParams::init(NetDims::new(config.train.latent), config.train.seed);
    let mut log = Vec::new();
    let outcome = crate::network::train(&mut params, &oracle_refs, &config.train, &mut log);
    write_train_log(&train_log_path(checkpoint_out), &log)?;
    outcome?;
    params.save(checkpoint_out, Some(serde_json::to_value(&config.train)?))?;
    Ok(log)
}

pub fn train_log_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".to_string());
    name.push_str(".log.csv");
    checkpoint.with_file_name(name)
}

pub fn write_train_log(path: &Path, log: &[TrainLogRow]) -> Result<()> {
    let mut text = String::from("epoch,mean_loss,wall_time_s\n");
    for row in log {
        writeln!(text, "{},{},{}", row.epoch, row.mean_loss, row.wall_time_s)
            .expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct EvalOutcome {
    pub rows: Vec<ResultRow>,
    pub series: Vec<IterationRecord>,
}

/// Budgeted evaluation of one method over the test split. Classic methods
/// take their eta0 from the config's eta section; the learned method loads a
/// checkpoint (which may come from a different dataset — features are
/// dimension-independent, so cross-dataset evaluation is just a different
/// checkpoint path).
pub fn cmd_evaluate(
    dataset_dir: &Path,
    config: &HarnessConfig,
    method: Method,
    checkpoint: Option<&Path>,
    budgets: &[usize],
    threads: usize,
    seed: u64,
) -> Result<EvalOutcome> {
    if budgets.is_empty() {
        return Err(Error::contract("no budgets requested"));
    }
    let (manifest, _) = DatasetManifest::load(dataset_dir)?;
    manifest.require_references(Split::Test)?;
    let max_budget = *budgets.iter().max().expect("nonempty");

    let learned = if method.needs_checkpoint() {
        let path = checkpoint.ok_or_else(|| {
            Error::contract("the learned method needs --checkpoint <file>")
        })?;
        let (params, echo) = NetParams::load(path)?;
        // Prefer the psi the checkpoint was trained with.
        let psi = echo
            .and_then(|e| serde_json::from_value::<TrainConfig>(e).ok())
            .map(|c| c.psi)
            .unwrap_or(config.train.psi);
        let options = RolloutOptions {
            psi,
            mode: LatentMode::Mean,
            eta_star: config.eta.eta_star,
            record_times: config.solver.record_times,
            ..RolloutOptions::default()
        };
        Some((params, options))
    } else {
        None
    };

    let eta0 = config.eta.eta0;
    let eta0_label = if method.needs_checkpoint() {
        "learned".to_string()
    } else {
        format_eta0(eta0)
    };

    let test: Vec<&InstanceEntry> = manifest.split(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::contract("test split is empty"));
    }
    let pool = thread_pool(threads)?;
    let outputs: Vec<Result<(Vec<ResultRow>, Vec<IterationRecord>)>> = pool.install(|| {
        test.par_iter()
            .map(|entry| {
                let instance = manifest.load_instance(dataset_dir, entry)?;
                let oracle = build_oracle(instance)?;
                let trace =
                    run_method(&oracle, method, eta0, max_budget, config, learned.as_ref())?;
                expect_finished(&trace, entry.id())?;
                let mut rows = Vec::new();
                let mut series = Vec::new();
                collect_outputs(
                    &trace,
                    entry,
                    &manifest.name,
                    method.label(),
                    &eta0_label,
                    budgets,
                    seed,
                    &mut rows,
                    &mut series,
                )?;
                Ok((rows, series))
            })
            .collect()
    });

    let mut outcome = EvalOutcome::default();
    for output in outputs {
        let (rows, series) = output?;
        outcome.rows.extend(rows);
        outcome.series.extend(series);
    }
    Ok(outcome)
}

/// Writes the final report (main CSV + per-method series files).
pub fn cmd_report(
    rows: &[ResultRow],
    series: &[IterationRecord],
    out_dir: &Path,
) -> Result<ReportPaths> {
    if rows.is_empty() {
        return Err(Error::contract("no result rows to report"));
    }
    write_report(out_dir, rows, series)
}
