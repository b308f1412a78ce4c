//! Uniform per-iteration record emitted by every solver.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepType {
    Serious,
    Null,
    /// Initial evaluation or a method without a serious/null dichotomy.
    NotApplicable,
}

impl StepType {
    pub fn label(self) -> &'static str {
        match self {
            StepType::Serious => "serious",
            StepType::Null => "null",
            StepType::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Stopping test certified approximate optimality.
    Stopped,
    /// Iteration budget exhausted.
    Budget,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Objective at the iterate evaluated this iteration.
    pub trial_value: f64,
    /// Objective at the stabilization center (exact or surrogate).
    pub center_value: f64,
    /// Unscaled Lagrangian bound at the iterate, for reporting.
    pub raw_lr: f64,
    /// Proximal parameter / step size used this iteration.
    pub eta: f64,
    pub step: StepType,
    /// Seconds spent in this iteration's solver work, 0 when timing is off.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Minimum objective value over all recorded iterates.
    pub best_value: f64,
    pub termination: Termination,
    pub oracle_calls: usize,
}

impl Trace {
    pub fn new() -> Self {
        Trace {
            rows: Vec::new(),
            best_value: f64::INFINITY,
            termination: Termination::Budget,
            oracle_calls: 0,
        }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.best_value = self.best_value.min(row.trial_value);
        self.rows.push(row);
    }

    /// Largest raw bound over the first `limit` rows (the whole trace when
    /// `limit` is `None`).
    pub fn best_raw_lr_within(&self, limit: Option<usize>) -> f64 {
        let rows: &[TraceRow] = match limit {
            Some(l) => {
                let end = self.rows.iter().take_while(|r| r.iteration <= l).count();
                &self.rows[..end]
            }
            None => &self.rows,
        };
        rows.iter()
            .map(|r| r.raw_lr)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cumulative wall time over rows with `iteration <= limit`.
    pub fn cumulative_time_within(&self, limit: usize) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.iteration <= limit)
            .map(|r| r.wall_time)
            .sum()
    }
}

impl Default for Trace {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_value_tracks_minimum() {
        let mut trace = Trace::new();
        for (i, v) in [3.0, 1.0, 2.0].into_iter().enumerate() {
            trace.push(TraceRow {
                iteration: i,
                trial_value: v,
                center_value: v,
                raw_lr: -v,
                eta: 1.0,
                step: StepType::NotApplicable,
                wall_time: 0.0,
            });
        }
        assert_eq!(trace.best_value, 1.0);
        assert_eq!(trace.best_raw_lr_within(None), -1.0);
        assert_eq!(trace.best_raw_lr_within(Some(0)), -3.0);
    }
}
