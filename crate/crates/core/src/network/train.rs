//! Unrolled training: per instance and epoch, one rollout, one discounted
//! loss, one clipped Adam update. Deterministic given the seed — instances
//! are visited in order and the noise stream is the only randomness.

use crate::autodiff::{adam_step, clip_global_norm, AdamState, Tape};
use crate::error::{Error, Result};
use crate::network::model::{LatentMode, Psi};
use crate::network::params::NetParams;
use crate::network::rollout::{discounted_loss, rollout, RolloutOptions};
use crate::oracles::Oracle;
use crate::trace::Termination;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Unrolled horizon T.
    pub unroll: usize,
    /// Discount applied as `gamma^(T-t)`.
    pub gamma: f64,
    pub lr: f64,
    pub clip: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub epochs: usize,
    pub sample_latents: bool,
    pub psi: Psi,
    pub seed: u64,
    /// Latent chunk size of the architecture.
    pub latent: usize,
    pub record_times: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            unroll: 10,
            gamma: 0.999,
            lr: 1e-5,
            clip: 5.0,
            lr_decay: 0.9,
            epochs: 25,
            sample_latents: false,
            psi: Psi::Softmax,
            seed: 1,
            latent: 128,
            record_times: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.unroll == 0 {
            return Err(Error::contract("training horizon must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::contract("gamma must be in (0, 1]"));
        }
        if !(self.lr > 0.0 && self.clip > 0.0 && self.lr_decay > 0.0) {
            return Err(Error::contract("lr, clip and lr_decay must be > 0"));
        }
        Ok(())
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            psi: self.psi,
            mode: if self.sample_latents {
                LatentMode::Sample
            } else {
                LatentMode::Mean
            },
            record_times: false,
            ..RolloutOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_time_s: f64,
}

/// Trains in place over the given oracles (each instance already wrapped in
/// its minimization oracle; rollouts start from the zero vector). Appends one
/// log row per completed epoch, so a divergence error still leaves the log of
/// everything that finished.
pub fn train(
    params: &mut NetParams,
    oracles: &[&dyn Oracle],
    config: &TrainConfig,
    log: &mut Vec<TrainLogRow>,
) -> Result<()> {
    config.validate()?;
    if oracles.is_empty() {
        return Err(Error::contract("training dataset is empty"));
    }
    let mut adam = AdamState::new(&params.tensor_sizes());
    let mut noise = ChaCha8Rng::seed_from_u64(config.seed);
    let options = config.rollout_options();

    for epoch in 0..config.epochs {
        let clock = config.record_times.then(Instant::now);
        let lr = config.lr * config.lr_decay.powi(epoch as i32);
        let mut loss_total = 0.0;

        for (idx, oracle) in oracles.iter().enumerate() {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let start = vec![0.0; oracle.dimension()];
            let out = rollout(
                &mut tape,
                &bound,
                &params.dims,
                *oracle,
                &start,
                config.unroll,
                &options,
                &mut noise,
            )?;
            if let Termination::Error(msg) = &out.trace.termination {
                return Err(Error::contract(format!(
                    "epoch {epoch}, instance {idx}: oracle failed: {msg}"
                )));
            }
            let loss = discounted_loss(&mut tape, &out.trajectory, config.gamma);
            let loss_value = tape.scalar(loss);
            if !loss_value.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            loss_total += loss_value;

            let grads = tape.backward(loss)?;
            let mut grad_vecs: Vec<Vec<f64>> = bound
                .all()
                .iter()
                .zip(params.tensor_sizes())
                .map(|(&value, size)| {
                    grads
                        .get(value)
                        .map(|g| g.to_vec())
                        .unwrap_or_else(|| vec![0.0; size])
                })
                .collect();
            clip_global_norm(&mut grad_vecs, config.clip);
            adam_step(
                params.data_mut(),
                &grad_vecs,
                &mut adam,
                lr,
                0.9,
                0.999,
                1e-8,
            )?;
        }

        log.push(TrainLogRow {
            epoch,
            mean_loss: loss_total / oracles.len() as f64,
            wall_time_s: clock.map_or(0.0, |c| c.elapsed().as_secs_f64()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::params::NetDims;
    use crate::oracles::FnOracle;

    fn quadratic_oracle(dim: usize) -> FnOracle<impl Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync>
    {
        FnOracle::new(dim, move |p: &[f64]| {
            let value = p.iter().map(|x| (x - 1.0) * (x - 1.0)).sum::<f64>();
            let grad = p.iter().map(|x| 2.0 * (x - 1.0)).collect();
            (value, grad)
        })
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            unroll: 3,
            epochs,
            latent: 3,
            lr: 1e-3,
            record_times: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn one_epoch_one_instance_one_update() {
        let oracle = quadratic_oracle(2);
        let mut params = NetParams::init(NetDims::new(3), 1);
        let before = params.clone();
        let mut log = Vec::new();
        train(&mut params, &[&oracle], &small_config(1), &mut log).unwrap();
        assert_eq!(log.len(), 1);
        assert_ne!(before, params);
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let oracle_a = quadratic_oracle(2);
        let oracle_b = quadratic_oracle(2);
        let run = || {
            let mut params = NetParams::init(NetDims::new(3), 1);
            let mut log = Vec::new();
            train(
                &mut params,
                &[&oracle_a, &oracle_b],
                &small_config(2),
                &mut log,
            )
            .unwrap();
            (params, log)
        };
        let (pa, la) = run();
        let (pb, lb) = run();
        assert_eq!(pa, pb);
        assert_eq!(la, lb);
    }

    #[test]
    fn sampling_mode_also_deterministic() {
        let oracle = quadratic_oracle(1);
        let mut config = small_config(2);
        config.sample_latents = true;
        let run = || {
            let mut params = NetParams::init(NetDims::new(3), 2);
            let mut log = Vec::new();
            train(&mut params, &[&oracle], &config, &mut log).unwrap();
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut params = NetParams::init(NetDims::new(3), 1);
        let mut log = Vec::new();
        assert!(train(&mut params, &[], &small_config(1), &mut log).is_err());
    }

    #[test]
    fn divergent_loss_aborts_with_partial_log() {
        // An oracle returning a value that explodes to infinity after a few
        // evaluations: the run must fail while keeping completed epochs.
        use std::sync::atomic::{AtomicUsize, Ordering};
        static CALLS: AtomicUsize = AtomicUsize::new(0);
        let oracle = FnOracle::new(1, |p: &[f64]| {
            let n = CALLS.fetch_add(1, Ordering::Relaxed);
            if n > 6 {
                (f64::INFINITY, vec![0.0])
            } else {
                (p[0].abs(), vec![p[0].signum()])
            }
        });
        let mut params = NetParams::init(NetDims::new(3), 1);
        let mut log = Vec::new();
        let config = small_config(3);
        let err = train(&mut params, &[&oracle], &config, &mut log);
        assert!(err.is_err());
        assert!(log.len() < 3);
    }
}
