//! Unrolled execution of the learned solver and the discounted loss.
//!
//! Each iteration extracts detached features, runs the encoder/sampler/
//! decoders, scores the bundle entries by attention, forms the trial point
//! `proj(center - eta * w)` on the tape, evaluates the oracle through a
//! first-order value node and applies the soft center update. Keys persist as
//! differentiable tape values across iterations; bundle subgradients enter
//! only as constants.

use crate::autodiff::{Tape, Value};
use crate::bundle::{BundleEntry, BundleState};
use crate::error::Result;
use crate::network::features::{extract_features, FeatureInputs};
use crate::network::model::{
    attention_scores, decode, encode_step, lstm_zero_state, normalize, sample_latents,
    soft_center_update, LatentMode, LstmState, Psi,
};
use crate::network::params::BoundParams;
use crate::network::params::NetDims;
use crate::oracles::Oracle;
use crate::trace::{StepType, Termination, Trace, TraceRow};
use crate::vecmath;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct RolloutOptions {
    pub psi: Psi,
    pub mode: LatentMode,
    /// Reference parameter fed to the boolean feature slot.
    pub eta_star: f64,
    pub record_times: bool,
    /// Testing hook: replace the attention weights by a one-hot on the newest
    /// entry (detached), turning the update into a plain subgradient step.
    #[doc(hidden)]
    pub force_theta_newest: bool,
    /// Testing hook: fix the step size instead of the decoded one.
    #[doc(hidden)]
    pub force_eta: Option<f64>,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            psi: Psi::Softmax,
            mode: LatentMode::Mean,
            eta_star: 1e4,
            record_times: false,
            force_theta_newest: false,
            force_eta: None,
        }
    }
}

pub struct RolloutOutput {
    /// Objective values `phi(pi_t)` for `t = 1..=steps`, on the tape.
    pub trajectory: Vec<Value>,
    pub trace: Trace,
}

fn normal_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Runs `steps` unrolled iterations from `start`. The noise stream is only
/// consumed in sample mode.
pub fn rollout(
    tape: &mut Tape,
    params: &BoundParams,
    dims: &NetDims,
    oracle: &dyn Oracle,
    start: &[f64],
    steps: usize,
    options: &RolloutOptions,
    noise: &mut ChaCha8Rng,
) -> Result<RolloutOutput> {
    let dim = oracle.dimension();
    if start.len() != dim {
        return Err(crate::Error::DimensionMismatch {
            expected: dim,
            got: start.len(),
        });
    }
    let sign_constrained = oracle.sign_constrained();

    let mut trace = Trace::new();
    let mut trajectory = Vec::with_capacity(steps);
    let clock = options.record_times.then(Instant::now);
    let first = match oracle.evaluate(start) {
        Ok(e) => e,
        Err(e) => {
            trace.termination = Termination::Error(e.to_string());
            return Ok(RolloutOutput { trajectory, trace });
        }
    };
    trace.oracle_calls = 1;

    // Plain bookkeeping mirrors: the bundle tracks entries and the center for
    // feature extraction and linearization errors; the differentiable center
    // lives on the tape.
    let mut bundle = BundleState::initial(start.to_vec(), first.value, first.subgradient.clone());
    let mut center = tape.constant(start.to_vec());
    let mut center_value = tape.constant_scalar(first.value);
    let mut lstm: LstmState = lstm_zero_state(tape, dims);
    let mut keys: Vec<Value> = Vec::new();

    let mut prev_theta = vec![1.0];
    let mut prev_direction = first.subgradient.clone();
    let mut prev_eta = 1.0;
    let mut center_grad = first.subgradient;
    let mut center_alpha = 0.0;

    trace.push(TraceRow {
        iteration: 0,
        trial_value: first.value,
        center_value: first.value,
        raw_lr: first.raw_lr_value,
        eta: prev_eta,
        step: StepType::NotApplicable,
        wall_time: clock.map_or(0.0, |c| c.elapsed().as_secs_f64()),
    });

    for t in 1..=steps {
        let clock = options.record_times.then(Instant::now);
        bundle.iteration = t;

        let features = extract_features(&FeatureInputs {
            bundle: &bundle,
            prev_theta: &prev_theta,
            prev_direction: &prev_direction,
            prev_eta,
            center_grad: &center_grad,
            center_alpha,
            iteration: t,
            eta_star: options.eta_star,
        });
        let features = tape.constant(features);

        let (chunks, next_lstm) = encode_step(tape, params, dims, features, lstm);
        lstm = next_lstm;
        let drawn;
        let noise_ref = match options.mode {
            LatentMode::Sample => {
                drawn = [
                    normal_noise(noise, dims.latent),
                    normal_noise(noise, dims.latent),
                    normal_noise(noise, dims.latent),
                ];
                Some(&drawn)
            }
            LatentMode::Mean => None,
        };
        let (h_q, h_k, h_eta) = sample_latents(tape, &chunks, options.mode, noise_ref);
        let (query, key, eta) = decode(tape, params, h_q, h_k, h_eta);

        // The key predicted now represents the newest (previously keyless)
        // bundle entry; afterwards every entry has one.
        keys.push(key);
        debug_assert_eq!(keys.len(), bundle.entries.len());

        let theta = if options.force_theta_newest {
            let mut one_hot = vec![0.0; bundle.entries.len()];
            *one_hot.last_mut().expect("bundle never empty") = 1.0;
            tape.constant(one_hot)
        } else {
            let scores = attention_scores(tape, query, &keys);
            normalize(tape, scores, options.psi)
        };

        let eta = match options.force_eta {
            Some(fixed) => tape.constant_scalar(fixed),
            None => eta,
        };

        // w = G theta with the bundle subgradients as constant columns.
        let entries = bundle.entries.len();
        let mut g_matrix = vec![0.0; dim * entries];
        for (j, entry) in bundle.entries.iter().enumerate() {
            for (i, &v) in entry.subgradient.iter().enumerate() {
                g_matrix[i * entries + j] = v;
            }
        }
        let g_matrix = tape.constant_matrix(dim, entries, g_matrix);
        let direction = tape.matvec(g_matrix, theta);

        let step = tape.scale(direction, eta);
        let mut trial = tape.sub(center, step);
        if sign_constrained {
            trial = tape.relu(trial);
        }

        let trial_data = tape.data(trial).to_vec();
        let eval = match oracle.evaluate(&trial_data) {
            Ok(e) => e,
            Err(e) => {
                trace.termination = Termination::Error(e.to_string());
                return Ok(RolloutOutput { trajectory, trace });
            }
        };
        trace.oracle_calls += 1;
        let phi = tape.oracle_value(trial, eval.value, eval.subgradient.clone());
        trajectory.push(phi);

        let lin_error = bundle.center_value
            - eval.value
            - vecmath::dot(
                &eval.subgradient,
                &vecmath::sub(&bundle.center, &trial_data),
            );
        let mut entry = BundleEntry::new(
            eval.subgradient,
            lin_error,
            eval.value,
            trial_data,
        );
        entry.last_active = t;
        bundle.append(entry)?;

        let (new_center, new_center_value, r) =
            soft_center_update(tape, trial, phi, center, center_value);
        let r_new = tape.data(r)[0];
        center = new_center;
        center_value = new_center_value;

        // Mirror the differentiable center into the plain bundle and shift
        // every linearization error accordingly.
        let center_data = tape.data(center).to_vec();
        let center_value_data = tape.scalar(center_value);
        bundle.translate_errors(&center_data, center_value_data)?;

        let newest = bundle.entries.last().expect("just appended");
        center_alpha = r_new * newest.lin_error + (1.0 - r_new) * center_alpha;
        center_grad = center_grad
            .iter()
            .zip(&newest.subgradient)
            .map(|(&old, &new)| r_new * new + (1.0 - r_new) * old)
            .collect();

        prev_theta = tape.data(theta).to_vec();
        prev_direction = tape.data(direction).to_vec();
        prev_eta = tape.scalar(eta);

        trace.push(TraceRow {
            iteration: t,
            trial_value: eval.value,
            center_value: center_value_data,
            raw_lr: eval.raw_lr_value,
            eta: prev_eta,
            step: StepType::NotApplicable,
            wall_time: clock.map_or(0.0, |c| c.elapsed().as_secs_f64()),
        });
    }
    trace.termination = Termination::Budget;
    Ok(RolloutOutput { trajectory, trace })
}

/// Discounted trajectory loss `sum_t gamma^(T-t) phi(pi_t)`.
pub fn discounted_loss(tape: &mut Tape, trajectory: &[Value], gamma: f64) -> Value {
    assert!(!trajectory.is_empty(), "loss of an empty trajectory");
    let horizon = trajectory.len();
    let mut total: Option<Value> = None;
    for (idx, &phi) in trajectory.iter().enumerate() {
        let weight = gamma.powi((horizon - 1 - idx) as i32);
        let w = tape.constant_scalar(weight);
        let term = tape.scale(phi, w);
        total = Some(match total {
            Some(acc) => tape.add(acc, term),
            None => term,
        });
    }
    total.expect("nonempty trajectory")
}
