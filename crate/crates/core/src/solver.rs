//! The classical proximal bundle loop plus the two subgradient baselines.
//!
//! All three methods minimize the scaled oracle objective and emit the same
//! `Trace`. Trial points are `proj(center - eta * direction)` where the
//! projection clips at zero exactly when the oracle is sign-constrained.

use crate::bundle::{BundleEntry, BundleState};
use crate::error::{Error, Result};
use crate::eta::{long_term_gate, update_eta, EtaConfig, EtaState, StepOutcome};
use crate::master::{predicted_quantities, solve_dmp, stopping_test, DEFAULT_TOL};
use crate::oracles::Oracle;
use crate::trace::{StepType, Termination, Trace, TraceRow};
use crate::vecmath;
use std::time::Instant;

/// Weight threshold below which a master weight counts as inactive.
const ACTIVITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Serious-step acceptance fraction of the predicted decrease, in (0, 1).
    pub serious_m: f64,
    /// Stopping tolerance.
    pub epsilon: f64,
    pub max_iter: usize,
    pub eta: EtaConfig,
    /// Entries unused for this many iterations are pruned.
    pub prune_window: usize,
    pub record_times: bool,
    /// Testing hook: cap the bundle to the newest entries before each solve.
    #[doc(hidden)]
    pub max_bundle_size: Option<usize>,
}

impl SolverConfig {
    pub fn new(eta: EtaConfig) -> Self {
        SolverConfig {
            eta,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.serious_m > 0.0 && self.serious_m < 1.0) {
            return Err(Error::contract("serious-step parameter must be in (0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::contract("stopping tolerance must be > 0"));
        }
        if self.prune_window == 0 {
            return Err(Error::contract("prune window must be >= 1"));
        }
        self.eta.validate()
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            serious_m: 0.001,
            epsilon: 1e-6,
            max_iter: 100,
            eta: EtaConfig::default(),
            prune_window: 20,
            record_times: true,
            max_bundle_size: None,
        }
    }
}

fn check_start(oracle: &dyn Oracle, start: &[f64]) -> Result<()> {
    if start.len() != oracle.dimension() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dimension(),
            got: start.len(),
        });
    }
    if oracle.sign_constrained() && start.iter().any(|&v| v < 0.0) {
        return Err(Error::contract(
            "starting point must be feasible for a sign-constrained oracle",
        ));
    }
    Ok(())
}

fn project_signs(point: &mut [f64], sign_constrained: bool) {
    if sign_constrained {
        for v in point.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

struct IterationClock {
    start: Option<Instant>,
}

impl IterationClock {
    fn new(enabled: bool) -> Self {
        IterationClock {
            start: enabled.then(Instant::now),
        }
    }

    fn elapsed(&self) -> f64 {
        self.start.map_or(0.0, |s| s.elapsed().as_secs_f64())
    }
}

/// Proximal bundle method.
///
/// Per iteration: solve the master problem, test the optimality certificate,
/// step to `proj(center - eta * w)`, evaluate, append the new entry, accept
/// the center move when the actual decrease reaches `m` times the decrease
/// predicted by the cutting-plane model, update eta, prune.
pub fn run_bundle(oracle: &dyn Oracle, start: &[f64], config: &SolverConfig) -> Result<Trace> {
    config.validate()?;
    check_start(oracle, start)?;
    let sign_constrained = oracle.sign_constrained();

    let mut trace = Trace::new();
    let clock = IterationClock::new(config.record_times);
    let first = match oracle.evaluate(start) {
        Ok(eval) => eval,
        Err(e) => {
            trace.termination = Termination::Error(e.to_string());
            return Ok(trace);
        }
    };
    trace.oracle_calls = 1;
    let mut eta_state = EtaState::new(&config.eta);
    let mut state = BundleState::initial(start.to_vec(), first.value, first.subgradient);
    trace.push(TraceRow {
        iteration: 0,
        trial_value: first.value,
        center_value: first.value,
        raw_lr: first.raw_lr_value,
        eta: eta_state.eta,
        step: StepType::NotApplicable,
        wall_time: clock.elapsed(),
    });

    for t in 1..=config.max_iter {
        let clock = IterationClock::new(config.record_times);
        state.iteration = t;
        if let Some(cap) = config.max_bundle_size {
            if state.entries.len() > cap {
                let drop = state.entries.len() - cap;
                state.entries.drain(..drop);
            }
        }

        let solution = match solve_dmp(&state.entries, eta_state.eta, DEFAULT_TOL) {
            Ok(s) => s,
            Err(e) => {
                trace.termination = Termination::Error(e.to_string());
                return Ok(trace);
            }
        };
        state.mark_active(&solution.weights, ACTIVITY_EPS);

        match stopping_test(
            &solution.direction,
            solution.sigma,
            config.eta.eta_star,
            config.epsilon,
            state.center_value,
        ) {
            Ok(true) => {
                trace.termination = Termination::Stopped;
                return Ok(trace);
            }
            Ok(false) => {}
            Err(e) => {
                trace.termination = Termination::Error(e.to_string());
                return Ok(trace);
            }
        }

        let mut trial = state.center.clone();
        vecmath::axpy(-eta_state.eta, &solution.direction, &mut trial);
        project_signs(&mut trial, sign_constrained);
        let d = vecmath::sub(&trial, &state.center);

        let eval = match oracle.evaluate(&trial) {
            Ok(e) => e,
            Err(e) => {
                trace.termination = Termination::Error(e.to_string());
                return Ok(trace);
            }
        };
        trace.oracle_calls += 1;

        // Model-predicted decrease at the accepted direction; a degenerate
        // (nonpositive) prediction classifies the step as null.
        let predicted_decrease = -state.model_value(&d)?;
        let actual_decrease = state.center_value - eval.value;
        let serious =
            predicted_decrease > 0.0 && actual_decrease >= config.serious_m * predicted_decrease;

        let lin_error = state.center_value
            - eval.value
            - vecmath::dot(&eval.subgradient, &vecmath::sub(&state.center, &trial));
        let mut entry = BundleEntry::new(eval.subgradient, lin_error, eval.value, trial.clone());
        entry.last_active = t;
        state.append(entry)?;

        if serious {
            state.translate_errors(&trial, eval.value)?;
        }

        let quantities = predicted_quantities(&solution, eta_state.eta, config.eta.eta_star);
        let outcome = if serious {
            StepOutcome::Serious
        } else {
            StepOutcome::Null
        };
        let gates = long_term_gate(
            config.eta.kind,
            quantities.v_star,
            quantities.eps_star,
            quantities.quad,
            quantities.lin,
            config.eta.m_tilde,
            outcome,
        );
        let eta_used = eta_state.eta;
        eta_state = update_eta(eta_state, &config.eta, outcome, gates);
        state.prune_unused(config.prune_window)?;

        trace.push(TraceRow {
            iteration: t,
            trial_value: eval.value,
            center_value: state.center_value,
            raw_lr: eval.raw_lr_value,
            eta: eta_used,
            step: if serious {
                StepType::Serious
            } else {
                StepType::Null
            },
            wall_time: clock.elapsed(),
        });
    }
    trace.termination = Termination::Budget;
    Ok(trace)
}

/// Subgradient descent with step halving after more than two consecutive
/// non-improving iterations (compared against the best value so far).
pub fn run_descent(
    oracle: &dyn Oracle,
    start: &[f64],
    eta0: f64,
    max_iter: usize,
    record_times: bool,
) -> Result<Trace> {
    if !(eta0 > 0.0) {
        return Err(Error::contract("descent: eta0 must be > 0"));
    }
    check_start(oracle, start)?;
    let sign_constrained = oracle.sign_constrained();

    let mut trace = Trace::new();
    let clock = IterationClock::new(record_times);
    let mut eval = match oracle.evaluate(start) {
        Ok(e) => e,
        Err(e) => {
            trace.termination = Termination::Error(e.to_string());
            return Ok(trace);
        }
    };
    trace.oracle_calls = 1;
    let mut point = start.to_vec();
    let mut eta = eta0;
    let mut best = eval.value;
    let mut stall = 0usize;
    trace.push(TraceRow {
        iteration: 0,
        trial_value: eval.value,
        center_value: eval.value,
        raw_lr: eval.raw_lr_value,
        eta,
        step: StepType::NotApplicable,
        wall_time: clock.elapsed(),
    });

    for t in 1..=max_iter {
        let clock = IterationClock::new(record_times);
        let eta_used = eta;
        vecmath::axpy(-eta_used, &eval.subgradient, &mut point);
        project_signs(&mut point, sign_constrained);
        eval = match oracle.evaluate(&point) {
            Ok(e) => e,
            Err(e) => {
                trace.termination = Termination::Error(e.to_string());
                return Ok(trace);
            }
        };
        trace.oracle_calls += 1;

        if eval.value < best {
            best = eval.value;
            stall = 0;
        } else {
            stall += 1;
            if stall > 2 {
                eta *= 0.5;
                stall = 0;
            }
        }

        trace.push(TraceRow {
            iteration: t,
            trial_value: eval.value,
            center_value: best,
            raw_lr: eval.raw_lr_value,
            eta: eta_used,
            step: StepType::NotApplicable,
            wall_time: clock.elapsed(),
        });
    }
    trace.termination = Termination::Budget;
    Ok(trace)
}

/// Adam on the minimization objective with standard bias correction;
/// sign-constrained problems are projected after every step.
#[allow(clippy::too_many_arguments)]
pub fn run_adam(
    oracle: &dyn Oracle,
    start: &[f64],
    eta0: f64,
    max_iter: usize,
    beta1: f64,
    beta2: f64,
    eps: f64,
    record_times: bool,
) -> Result<Trace> {
    if !(eta0 > 0.0) {
        return Err(Error::contract("adam: eta0 must be > 0"));
    }
    check_start(oracle, start)?;
    let sign_constrained = oracle.sign_constrained();
    let dim = oracle.dimension();

    let mut trace = Trace::new();
    let clock = IterationClock::new(record_times);
    let mut eval = match oracle.evaluate(start) {
        Ok(e) => e,
        Err(e) => {
            trace.termination = Termination::Error(e.to_string());
            return Ok(trace);
        }
    };
    trace.oracle_calls = 1;
    let mut point = start.to_vec();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    trace.push(TraceRow {
        iteration: 0,
        trial_value: eval.value,
        center_value: eval.value,
        raw_lr: eval.raw_lr_value,
        eta: eta0,
        step: StepType::NotApplicable,
        wall_time: clock.elapsed(),
    });

    let mut best = eval.value;
    for t in 1..=max_iter {
        let clock = IterationClock::new(record_times);
        let g = &eval.subgradient;
        let bc1 = 1.0 - beta1.powi(t as i32);
        let bc2 = 1.0 - beta2.powi(t as i32);
        for i in 0..dim {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            point[i] -= eta0 * m_hat / (v_hat.sqrt() + eps);
        }
        project_signs(&mut point, sign_constrained);
        eval = match oracle.evaluate(&point) {
            Ok(e) => e,
            Err(e) => {
                trace.termination = Termination::Error(e.to_string());
                return Ok(trace);
            }
        };
        trace.oracle_calls += 1;
        best = best.min(eval.value);
        trace.push(TraceRow {
            iteration: t,
            trial_value: eval.value,
            center_value: best,
            raw_lr: eval.raw_lr_value,
            eta: eta0,
            step: StepType::NotApplicable,
            wall_time: clock.elapsed(),
        });
    }
    trace.termination = Termination::Budget;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::FnOracle;

    fn abs_oracle() -> FnOracle<impl Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync> {
        FnOracle::new(1, |p: &[f64]| {
            let x = p[0];
            (x.abs(), vec![if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 }])
        })
    }

    fn constant_config(eta0: f64, max_iter: usize) -> SolverConfig {
        let mut config = SolverConfig::new(EtaConfig::new(crate::eta::EtaKind::Constant, eta0));
        config.max_iter = max_iter;
        config.record_times = false;
        config
    }

    #[test]
    fn bundle_hand_trace_on_abs() {
        // From pi0 = 1 with constant eta = 1: first trial lands exactly at the
        // minimum, second master solve certifies it.
        let oracle = abs_oracle();
        let trace = run_bundle(&oracle, &[1.0], &constant_config(1.0, 10)).unwrap();
        assert_eq!(trace.termination, Termination::Stopped);
        assert_eq!(trace.best_value, 0.0);
        assert_eq!(trace.oracle_calls, 2);
        assert_eq!(trace.rows.len(), 2);
        assert_eq!(trace.rows[1].step, StepType::Serious);
        assert_eq!(trace.rows[1].trial_value, 0.0);
    }

    #[test]
    fn bundle_stops_immediately_on_constant_oracle() {
        let oracle = FnOracle::new(2, |_: &[f64]| (42.0, vec![0.0, 0.0]));
        let trace = run_bundle(&oracle, &[0.5, -0.5], &constant_config(1.0, 10)).unwrap();
        assert_eq!(trace.termination, Termination::Stopped);
        assert_eq!(trace.best_value, 42.0);
        assert_eq!(trace.oracle_calls, 1);
    }

    #[test]
    fn bundle_center_values_never_increase() {
        let oracle = FnOracle::new(2, |p: &[f64]| {
            // max of affine pieces: phi = max(|x+y-1|, |x-y|)
            let a = p[0] + p[1] - 1.0;
            let b = p[0] - p[1];
            if a.abs() >= b.abs() {
                (a.abs(), vec![a.signum(), a.signum()])
            } else {
                (b.abs(), vec![b.signum(), -b.signum()])
            }
        });
        let trace = run_bundle(&oracle, &[3.0, -2.0], &constant_config(0.5, 60)).unwrap();
        for pair in trace.rows.windows(2) {
            assert!(pair[1].center_value <= pair[0].center_value + 1e-12);
        }
        assert!(trace.best_value < 0.51);
    }

    #[test]
    fn bundle_respects_budget_and_oracle_accounting() {
        let oracle = abs_oracle();
        let config = constant_config(0.3, 7);
        let trace = run_bundle(&oracle, &[10.0], &config).unwrap();
        assert!(trace.oracle_calls <= config.max_iter + 1);
        assert!(trace.rows.len() <= config.max_iter + 1);
    }

    #[test]
    fn single_entry_bundle_is_a_subgradient_step() {
        // With the bundle capped at one entry the master is trivial and the
        // trial point must equal center - eta * g.
        let oracle = FnOracle::new(1, |p: &[f64]| {
            let x = p[0];
            ((x - 3.0).abs(), vec![(x - 3.0).signum()])
        });
        let mut config = constant_config(0.25, 5);
        config.max_bundle_size = Some(1);
        let trace = run_bundle(&oracle, &[10.0], &config).unwrap();
        // Iterates: 10 -> 9.75 -> 9.5 ... every step is serious, every trial
        // moves by exactly eta.
        for pair in trace.rows.windows(2) {
            assert!((pair[0].trial_value - pair[1].trial_value - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn bundle_projects_sign_constrained_trials() {
        let oracle = FnOracle::new(1, |p: &[f64]| (p[0] + 1.0, vec![1.0])).sign_constrained(true);
        let trace = run_bundle(&oracle, &[0.5], &constant_config(10.0, 4)).unwrap();
        // phi decreasing in -x but the domain floor is 0: all trials stay >= 0
        // so trial values stay >= 1.
        for row in &trace.rows {
            assert!(row.trial_value >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn bundle_rejects_bad_start() {
        let oracle = abs_oracle();
        assert!(run_bundle(&oracle, &[1.0, 2.0], &constant_config(1.0, 5)).is_err());
        let constrained = FnOracle::new(1, |p: &[f64]| (p[0], vec![1.0])).sign_constrained(true);
        assert!(run_bundle(&constrained, &[-1.0], &constant_config(1.0, 5)).is_err());
    }

    #[test]
    fn descent_keeps_step_while_improving() {
        let oracle = abs_oracle();
        let trace = run_descent(&oracle, &[10.0], 1.0, 5, false).unwrap();
        // Improves every step; eta stays put.
        for row in &trace.rows {
            assert_eq!(row.eta, 1.0);
        }
        assert_eq!(trace.oracle_calls, 6);
    }

    #[test]
    fn descent_halves_after_three_stalls() {
        // Constant objective: no step ever improves.
        let oracle = FnOracle::new(1, |_: &[f64]| (5.0, vec![0.0]));
        let trace = run_descent(&oracle, &[0.0], 8.0, 7, false).unwrap();
        let etas: Vec<f64> = trace.rows.iter().map(|r| r.eta).collect();
        // Stall counter: the step halves after the 3rd, 6th, ... stalls, so
        // steps 1-3 use 8, steps 4-6 use 4, step 7 uses 2.
        assert_eq!(etas, vec![8.0, 8.0, 8.0, 8.0, 4.0, 4.0, 4.0, 2.0]);
    }

    #[test]
    fn descent_best_value_nonincreasing() {
        let oracle = FnOracle::new(1, |p: &[f64]| {
            let x = p[0];
            (x * x, vec![2.0 * x])
        });
        let trace = run_descent(&oracle, &[2.0], 0.4, 30, false).unwrap();
        let mut best = f64::INFINITY;
        for row in &trace.rows {
            best = best.min(row.trial_value);
            assert_eq!(row.center_value, best);
        }
    }

    #[test]
    fn adam_first_step_is_signed_step() {
        let oracle = FnOracle::new(2, |p: &[f64]| {
            (3.0 * p[0] - 0.5 * p[1], vec![3.0, -0.5])
        });
        let trace = run_adam(&oracle, &[0.0, 0.0], 0.1, 1, 0.9, 0.999, 1e-8, false).unwrap();
        // First update is -lr * g / (|g| + eps) ~ -lr * sign(g).
        let expect0 = -0.1 * 3.0 / (3.0 + 1e-8);
        let expect1 = 0.1 * 0.5 / (0.5 + 1e-8);
        let value = trace.rows[1].trial_value;
        assert!((value - (3.0 * expect0 - 0.5 * expect1)).abs() < 1e-9);
    }

    #[test]
    fn adam_fixed_point_with_zero_gradient() {
        let oracle = FnOracle::new(1, |_: &[f64]| (7.0, vec![0.0]));
        let trace = run_adam(&oracle, &[2.0], 0.5, 5, 0.9, 0.999, 1e-8, false).unwrap();
        for row in &trace.rows {
            assert_eq!(row.trial_value, 7.0);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let oracle = abs_oracle();
        let a = run_adam(&oracle, &[1.0], 0.2, 20, 0.9, 0.999, 1e-8, false).unwrap();
        let b = run_adam(&oracle, &[1.0], 0.2, 20, 0.9, 0.999, 1e-8, false).unwrap();
        assert_eq!(a, b);
    }
}
