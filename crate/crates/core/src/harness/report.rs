//! Result rows and CSV/plot-data writers.
//!
//! The main CSV has the fixed schema
//! `dataset,instance,method,eta0,budget,gap_pct,bound,wall_time_s,seed`.
//! For each (dataset, method) pair two series files are emitted for external
//! plotting: mean gap per iteration and mean gap against mean cumulative
//! wall time. Rows are sorted before writing, so output bytes do not depend
//! on evaluation order.

use crate::error::Result;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const RESULT_HEADER: &str = "dataset,instance,method,eta0,budget,gap_pct,bound,wall_time_s,seed";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub instance: String,
    pub method: String,
    /// Initial step size, or `"learned"` for the network.
    pub eta0: String,
    pub budget: usize,
    pub gap_pct: f64,
    pub bound: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl ResultRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.instance,
            self.method,
            self.eta0,
            self.budget,
            self.gap_pct,
            self.bound,
            self.wall_time_s,
            self.seed
        )
    }

    fn sort_key(&self) -> (String, String, String, String, usize) {
        (
            self.dataset.clone(),
            self.method.clone(),
            self.eta0.clone(),
            self.instance.clone(),
            self.budget,
        )
    }
}

/// Per-iteration record backing the series files.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub dataset: String,
    pub instance: String,
    pub method: String,
    pub eta0: String,
    pub iteration: usize,
    /// Best raw bound seen up to this iteration.
    pub bound: f64,
    pub gap_pct: f64,
    pub cum_time_s: f64,
}

pub fn write_result_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut text = String::from(RESULT_HEADER);
    text.push('\n');
    for row in sorted {
        text.push_str(&row.csv_line());
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub const SERIES_HEADER: &str =
    "dataset,instance,method,eta0,iteration,bound,gap_pct,cum_time_s";

/// Reads rows written by [`write_result_rows`]. Rust's float formatting is
/// shortest-roundtrip, so the parse reproduces the original values exactly.
pub fn read_result_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RESULT_HEADER => {}
        other => {
            return Err(crate::Error::contract(format!(
                "{}: unexpected header {other:?}",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (number, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(crate::Error::contract(format!(
                "{}: line {}: expected 9 fields",
                path.display(),
                number + 2
            )));
        }
        let parse_err = |what: &str| {
            crate::Error::contract(format!(
                "{}: line {}: bad {what}",
                path.display(),
                number + 2
            ))
        };
        rows.push(ResultRow {
            dataset: fields[0].to_string(),
            instance: fields[1].to_string(),
            method: fields[2].to_string(),
            eta0: fields[3].to_string(),
            budget: fields[4].parse().map_err(|_| parse_err("budget"))?,
            gap_pct: fields[5].parse().map_err(|_| parse_err("gap_pct"))?,
            bound: fields[6].parse().map_err(|_| parse_err("bound"))?,
            wall_time_s: fields[7].parse().map_err(|_| parse_err("wall_time_s"))?,
            seed: fields[8].parse().map_err(|_| parse_err("seed"))?,
        });
    }
    Ok(rows)
}

pub fn write_series_records(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let mut text = String::from(SERIES_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset, r.instance, r.method, r.eta0, r.iteration, r.bound, r.gap_pct, r.cum_time_s
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_series_records(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == SERIES_HEADER => {}
        other => {
            return Err(crate::Error::contract(format!(
                "{}: unexpected header {other:?}",
                path.display()
            )))
        }
    }
    let mut records = Vec::new();
    for (number, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(crate::Error::contract(format!(
                "{}: line {}: expected 8 fields",
                path.display(),
                number + 2
            )));
        }
        let parse_err = |what: &str| {
            crate::Error::contract(format!(
                "{}: line {}: bad {what}",
                path.display(),
                number + 2
            ))
        };
        records.push(IterationRecord {
            dataset: fields[0].to_string(),
            instance: fields[1].to_string(),
            method: fields[2].to_string(),
            eta0: fields[3].to_string(),
            iteration: fields[4].parse().map_err(|_| parse_err("iteration"))?,
            bound: fields[5].parse().map_err(|_| parse_err("bound"))?,
            gap_pct: fields[6].parse().map_err(|_| parse_err("gap_pct"))?,
            cum_time_s: fields[7].parse().map_err(|_| parse_err("cum_time_s"))?,
        });
    }
    Ok(records)
}

/// Written series files for one report.
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub rows_csv: PathBuf,
    pub series_files: Vec<PathBuf>,
}

/// Writes the main CSV plus, per (dataset, method, eta0), the two-column
/// series files `(iteration, mean_gap)` and `(cum_time_s, mean_gap)`.
pub fn write_report(out_dir: &Path, rows: &[ResultRow], series: &[IterationRecord]) -> Result<ReportPaths> {
    std::fs::create_dir_all(out_dir)?;
    let rows_csv = out_dir.join("rows.csv");
    write_result_rows(&rows_csv, rows)?;

    // Group by (dataset, method, eta0); within a group, average per iteration
    // over instances.
    let mut groups: std::collections::BTreeMap<(String, String, String), Vec<&IterationRecord>> =
        std::collections::BTreeMap::new();
    for record in series {
        groups
            .entry((
                record.dataset.clone(),
                record.method.clone(),
                record.eta0.clone(),
            ))
            .or_default()
            .push(record);
    }

    let mut series_files = Vec::new();
    for ((dataset, method, eta0), records) in groups {
        let mut by_iteration: std::collections::BTreeMap<usize, (f64, f64, usize)> =
            std::collections::BTreeMap::new();
        for r in records {
            let slot = by_iteration.entry(r.iteration).or_insert((0.0, 0.0, 0));
            slot.0 += r.gap_pct;
            slot.1 += r.cum_time_s;
            slot.2 += 1;
        }
        let tag = method_tag(&method, &eta0);

        let mut iter_text = String::from("iteration,mean_gap\n");
        let mut time_text = String::from("cum_time_s,mean_gap\n");
        for (iteration, (gap_sum, time_sum, count)) in by_iteration {
            let mean_gap = gap_sum / count as f64;
            let mean_time = time_sum / count as f64;
            writeln!(iter_text, "{iteration},{mean_gap}").expect("string write");
            writeln!(time_text, "{mean_time},{mean_gap}").expect("string write");
        }
        let iter_path = out_dir.join(format!("series_{dataset}_{tag}_iterations.csv"));
        let time_path = out_dir.join(format!("series_{dataset}_{tag}_time.csv"));
        std::fs::write(&iter_path, iter_text)?;
        std::fs::write(&time_path, time_text)?;
        series_files.push(iter_path);
        series_files.push(time_path);
    }
    Ok(ReportPaths {
        rows_csv,
        series_files,
    })
}

fn method_tag(method: &str, eta0: &str) -> String {
    if eta0 == "learned" {
        method.to_string()
    } else {
        format!("{method}@{}", eta0.replace('.', "p"))
    }
}
