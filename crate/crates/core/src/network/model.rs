//! Network building blocks recorded on the tape: LSTM encoder, latent
//! sampler, the three decoders, dot-product attention over the stored keys,
//! the simplex normalizer and the soft stabilization-center update.

use crate::autodiff::{Tape, Value};
use crate::network::params::{BoundParams, NetDims, ParamId};
use serde::{Deserialize, Serialize};

/// Simplex normalizer applied to the attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Psi {
    Softmax,
    Sparsemax,
}

/// Whether latents are sampled via the reparameterization trick or taken at
/// the predicted mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    Sample,
    Mean,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub hidden: Value,
    pub cell: Value,
}

/// Zero initial recurrent state (non-differentiable).
pub fn lstm_zero_state(tape: &mut Tape, dims: &NetDims) -> LstmState {
    LstmState {
        hidden: tape.constant(vec![0.0; dims.hidden()]),
        cell: tape.constant(vec![0.0; dims.hidden()]),
    }
}

/// The six latent chunks predicted by the encoder, in their fixed order.
#[derive(Debug, Clone, Copy)]
pub struct LatentChunks {
    pub mu_q: Value,
    pub s_q: Value,
    pub mu_k: Value,
    pub s_k: Value,
    pub mu_eta: Value,
    pub s_eta: Value,
}

/// One LSTM cell step (gate order i, f, g, o); the new hidden state is split
/// into the six latent chunks.
pub fn encode_step(
    tape: &mut Tape,
    params: &BoundParams,
    dims: &NetDims,
    features: Value,
    state: LstmState,
) -> (LatentChunks, LstmState) {
    let h = dims.hidden();
    let from_input = tape.matvec(params.get(ParamId::LstmWIh), features);
    let from_hidden = tape.matvec(params.get(ParamId::LstmWHh), state.hidden);
    let affine = tape.add(from_input, from_hidden);
    let gates = tape.add(affine, params.get(ParamId::LstmBias));

    let input_pre = tape.slice(gates, 0, h);
    let forget_pre = tape.slice(gates, h, h);
    let cell_pre = tape.slice(gates, 2 * h, h);
    let output_pre = tape.slice(gates, 3 * h, h);

    let input_gate = tape.sigmoid(input_pre);
    let forget_gate = tape.sigmoid(forget_pre);
    let cell_candidate = tape.tanh(cell_pre);
    let output_gate = tape.sigmoid(output_pre);

    let kept = tape.mul(forget_gate, state.cell);
    let written = tape.mul(input_gate, cell_candidate);
    let cell = tape.add(kept, written);
    let cell_act = tape.tanh(cell);
    let hidden = tape.mul(output_gate, cell_act);

    let l = dims.latent;
    let chunks = LatentChunks {
        mu_q: tape.slice(hidden, 0, l),
        s_q: tape.slice(hidden, l, l),
        mu_k: tape.slice(hidden, 2 * l, l),
        s_k: tape.slice(hidden, 3 * l, l),
        mu_eta: tape.slice(hidden, 4 * l, l),
        s_eta: tape.slice(hidden, 5 * l, l),
    };
    (chunks, LstmState { hidden, cell })
}

/// Draws the three latent representations. Sampling maps the raw deviation
/// through softplus and applies the reparameterization trick with the given
/// noise; mean mode returns the predicted means untouched.
pub fn sample_latents(
    tape: &mut Tape,
    chunks: &LatentChunks,
    mode: LatentMode,
    noise: Option<&[Vec<f64>; 3]>,
) -> (Value, Value, Value) {
    match mode {
        LatentMode::Mean => (chunks.mu_q, chunks.mu_k, chunks.mu_eta),
        LatentMode::Sample => {
            let eps = noise.expect("sample mode requires noise");
            let mut draw = |mu: Value, s: Value, e: &[f64]| {
                let sigma = tape.softplus(s);
                tape.gaussian_reparam(mu, sigma, e)
            };
            (
                draw(chunks.mu_q, chunks.s_q, &eps[0]),
                draw(chunks.mu_k, chunks.s_k, &eps[1]),
                draw(chunks.mu_eta, chunks.s_eta, &eps[2]),
            )
        }
    }
}

fn mlp(tape: &mut Tape, params: &BoundParams, w1: ParamId, b1: ParamId, w2: ParamId, b2: ParamId, input: Value) -> Value {
    let pre = tape.matvec(params.get(w1), input);
    let pre = tape.add(pre, params.get(b1));
    let hidden = tape.relu(pre);
    let out = tape.matvec(params.get(w2), hidden);
    tape.add(out, params.get(b2))
}

/// Decodes the latents into the query, the key and a positive step size
/// (softplus keeps the predicted scalar positive).
pub fn decode(
    tape: &mut Tape,
    params: &BoundParams,
    h_q: Value,
    h_k: Value,
    h_eta: Value,
) -> (Value, Value, Value) {
    let query = mlp(tape, params, ParamId::QW1, ParamId::QB1, ParamId::QW2, ParamId::QB2, h_q);
    let key = mlp(tape, params, ParamId::KW1, ParamId::KB1, ParamId::KW2, ParamId::KB2, h_k);
    let eta_raw = mlp(
        tape,
        params,
        ParamId::EtaW1,
        ParamId::EtaB1,
        ParamId::EtaW2,
        ParamId::EtaB2,
        h_eta,
    );
    let eta = tape.softplus(eta_raw);
    (query, key, eta)
}

/// Attention scores `delta_i = k_i . q` over all stored keys.
pub fn attention_scores(tape: &mut Tape, query: Value, keys: &[Value]) -> Value {
    assert!(!keys.is_empty(), "attention over an empty key set");
    let dots: Vec<Value> = keys.iter().map(|&k| tape.dot(k, query)).collect();
    tape.concat(&dots)
}

/// Normalizes scores onto the simplex with the configured kernel.
pub fn normalize(tape: &mut Tape, scores: Value, psi: Psi) -> Value {
    match psi {
        Psi::Softmax => tape.softmax(scores),
        Psi::Sparsemax => tape.sparsemax(scores),
    }
}

/// Differentiable center update: `r = softmin(phi_new, v_center)` weighs the
/// new iterate against the incumbent, giving the new center and its surrogate
/// value (an upper bound on the true center value, by convexity).
pub fn soft_center_update(
    tape: &mut Tape,
    pi_new: Value,
    phi_new: Value,
    center: Value,
    center_value: Value,
) -> (Value, Value, Value) {
    let stacked = tape.concat(&[phi_new, center_value]);
    let r = tape.softmin(stacked);
    let r_new = tape.slice(r, 0, 1);
    let r_old = tape.slice(r, 1, 1);
    let from_new = tape.scale(pi_new, r_new);
    let from_old = tape.scale(center, r_old);
    let new_center = tape.add(from_new, from_old);
    let v_new = tape.scale(phi_new, r_new);
    let v_old = tape.scale(center_value, r_old);
    let new_value = tape.add(v_new, v_old);
    (new_center, new_value, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::params::NetParams;

    fn zero_params(latent: usize) -> NetParams {
        let mut params = NetParams::init(NetDims::new(latent), 0);
        for tensor in params.data_mut() {
            tensor.iter_mut().for_each(|v| *v = 0.0);
        }
        params
    }

    #[test]
    fn zero_params_give_zero_chunks() {
        let params = zero_params(4);
        let dims = params.dims;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let state = lstm_zero_state(&mut tape, &dims);
        let features = tape.constant(vec![0.5; dims.feature_dim]);
        let (chunks, _) = encode_step(&mut tape, &bound, &dims, features, state);
        for v in [chunks.mu_q, chunks.s_q, chunks.mu_k, chunks.s_k, chunks.mu_eta, chunks.s_eta] {
            assert_eq!(tape.data(v).len(), 4);
            assert!(tape.data(v).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn state_propagates_across_steps() {
        let params = NetParams::init(NetDims::new(4), 3);
        let dims = params.dims;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let state0 = lstm_zero_state(&mut tape, &dims);
        let features = tape.constant(vec![0.3; dims.feature_dim]);
        let (_, state1) = encode_step(&mut tape, &bound, &dims, features, state0);
        let (_, state2) = encode_step(&mut tape, &bound, &dims, features, state1);
        // Same input, different incoming state: the hidden outputs differ.
        assert_ne!(tape.data(state1.hidden), tape.data(state2.hidden));
    }

    #[test]
    fn mean_mode_returns_means_and_sample_mode_perturbs() {
        let params = NetParams::init(NetDims::new(2), 5);
        let dims = params.dims;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let state = lstm_zero_state(&mut tape, &dims);
        let features = tape.constant(vec![1.0; dims.feature_dim]);
        let (chunks, _) = encode_step(&mut tape, &bound, &dims, features, state);

        let (hq, _, _) = sample_latents(&mut tape, &chunks, LatentMode::Mean, None);
        assert_eq!(tape.data(hq), tape.data(chunks.mu_q));

        let noise = [vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
        let (hq0, _, _) = sample_latents(&mut tape, &chunks, LatentMode::Sample, Some(&noise));
        // Zero noise collapses the sample onto the mean.
        assert_eq!(tape.data(hq0), tape.data(chunks.mu_q));
    }

    #[test]
    fn zero_params_decode_to_softplus_zero_eta() {
        let params = zero_params(3);
        let dims = params.dims;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let h = tape.constant(vec![0.4, -0.2, 0.9]);
        let (q, k, eta) = decode(&mut tape, &bound, h, h, h);
        assert!(tape.data(q).iter().all(|&v| v == 0.0));
        assert!(tape.data(k).iter().all(|&v| v == 0.0));
        assert_eq!(tape.data(q).len(), dims.latent);
        assert!((tape.scalar(eta) - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn attention_is_linear_in_query() {
        let mut tape = Tape::new();
        let k1 = tape.constant(vec![1.0, 0.0]);
        let k2 = tape.constant(vec![0.0, 1.0]);
        let q1 = tape.leaf(vec![1.0, 0.0]);
        let q2 = tape.leaf(vec![0.5, 2.0]);
        let sum = tape.add(q1, q2);
        let d1 = attention_scores(&mut tape, q1, &[k1, k2]);
        let d2 = attention_scores(&mut tape, q2, &[k1, k2]);
        let ds = attention_scores(&mut tape, sum, &[k1, k2]);
        assert_eq!(tape.data(d1), &[1.0, 0.0]);
        let expect: Vec<f64> = tape
            .data(d1)
            .iter()
            .zip(tape.data(d2))
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(tape.data(ds), expect.as_slice());
    }

    #[test]
    fn normalizers_land_on_the_simplex() {
        let mut tape = Tape::new();
        let zero = tape.constant(vec![0.0, 0.0]);
        let soft = normalize(&mut tape, zero, Psi::Softmax);
        assert_eq!(tape.data(soft), &[0.5, 0.5]);
        let spread = tape.constant(vec![2.0, 0.0]);
        let sparse = normalize(&mut tape, spread, Psi::Sparsemax);
        assert_eq!(tape.data(sparse), &[1.0, 0.0]);
        let equal = tape.constant(vec![1.0, 1.0, 1.0]);
        let soft3 = normalize(&mut tape, equal, Psi::Softmax);
        for &v in tape.data(soft3) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_center_update_midpoint_and_saturation() {
        let mut tape = Tape::new();
        let pi_new = tape.constant(vec![2.0, 0.0]);
        let center = tape.constant(vec![0.0, 2.0]);

        // Equal values: exact midpoint.
        let phi = tape.constant_scalar(1.0);
        let v = tape.constant_scalar(1.0);
        let (c, cv, _) = soft_center_update(&mut tape, pi_new, phi, center, v);
        assert_eq!(tape.data(c), &[1.0, 1.0]);
        assert_eq!(tape.scalar(cv), 1.0);

        // Much better new point: the update saturates onto it.
        let phi = tape.constant_scalar(-19.0);
        let (c, cv, r) = soft_center_update(&mut tape, pi_new, phi, center, v);
        let r1 = tape.data(r)[0];
        assert!((r1 - 1.0 / (1.0 + (-20.0f64).exp())).abs() < 1e-12);
        assert!((tape.data(c)[0] - 2.0).abs() < 1e-7);
        // Surrogate stays inside the convex hull of the two values.
        let cv = tape.scalar(cv);
        assert!(cv >= -19.0 && cv <= 1.0);
    }
}
