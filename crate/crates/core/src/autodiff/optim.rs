//! Gradient clipping and the Adam parameter updater used for training.

use crate::error::{Error, Result};

/// Rescales all gradient buffers so their joint L2 norm does not exceed
/// `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "clip norm must be > 0");
    let total_sq: f64 = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = total_sq.sqrt();
    if norm > max_norm {
        let factor = max_norm / norm;
        for buffer in grads.iter_mut() {
            for v in buffer.iter_mut() {
                *v *= factor;
            }
        }
    }
    norm
}

/// First and second moment estimates for one list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

/// One bias-corrected Adam update over a parallel list of tensors.
pub fn adam_step(
    params: &mut [Vec<f64>],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    state.step += 1;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for ((tensor, grad), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if tensor.len() != grad.len() {
            return Err(Error::DimensionMismatch {
                expected: tensor.len(),
                got: grad.len(),
            });
        }
        for i in 0..tensor.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            tensor[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_leaves_small_gradients_untouched() {
        let mut grads = vec![vec![3.0, 0.0], vec![0.0]];
        let norm = clip_global_norm(&mut grads, 5.0);
        assert_eq!(norm, 3.0);
        assert_eq!(grads[0], vec![3.0, 0.0]);
    }

    #[test]
    fn clip_rescales_to_exactly_max_norm() {
        let mut grads = vec![vec![6.0, 8.0]];
        let norm = clip_global_norm(&mut grads, 5.0);
        assert_eq!(norm, 10.0);
        let new_norm: f64 = grads[0].iter().map(|v| v * v).sum::<f64>();
        assert!((new_norm.sqrt() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn clip_passes_zero_gradients() {
        let mut grads = vec![vec![0.0, 0.0]];
        let norm = clip_global_norm(&mut grads, 5.0);
        assert_eq!(norm, 0.0);
        assert_eq!(grads[0], vec![0.0, 0.0]);
    }

    #[test]
    fn adam_first_step_is_scaled_sign() {
        let mut params = vec![vec![0.0, 0.0]];
        let grads = vec![vec![2.0, -0.5]];
        let mut state = AdamState::new(&[2]);
        adam_step(&mut params, &grads, &mut state, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert!((params[0][0] + 0.1 * 2.0 / (2.0 + 1e-8)).abs() < 1e-12);
        assert!((params[0][1] - 0.1 * 0.5 / (0.5 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_zero_state_is_identity() {
        let mut params = vec![vec![1.5]];
        let grads = vec![vec![0.0]];
        let mut state = AdamState::new(&[1]);
        adam_step(&mut params, &grads, &mut state, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(params[0], vec![1.5]);
    }

    #[test]
    fn adam_is_bitwise_deterministic() {
        let run = || {
            let mut params = vec![vec![0.2, -0.4], vec![1.0]];
            let mut state = AdamState::new(&[2, 1]);
            for step in 0..20 {
                let s = step as f64;
                let grads = vec![vec![(s * 0.1).sin(), 0.3], vec![-0.7]];
                adam_step(&mut params, &grads, &mut state, 0.01, 0.9, 0.999, 1e-8).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
