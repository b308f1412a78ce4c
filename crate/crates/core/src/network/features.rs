//! Hand-designed feature extraction for the learned solver.
//!
//! Twenty-nine scalars summarizing the optimization dynamics: the previous
//! master quantities, the newest trial and the stabilization point, component
//! statistics of the newest subgradient and iterate, and comparisons of the
//! newest entry against the whole bundle. The vector always enters the tape
//! as a constant; nothing back-propagates through feature extraction.

use crate::bundle::BundleState;
use crate::vecmath;

pub const FEATURE_COUNT: usize = 29;

/// Plain-value bookkeeping the feature extractor reads.
pub struct FeatureInputs<'a> {
    pub bundle: &'a BundleState,
    /// Master weights from the previous iteration (`[1]` at the start).
    pub prev_theta: &'a [f64],
    /// Previous aggregated direction (`g_0` at the start).
    pub prev_direction: &'a [f64],
    /// Previous step size (1 at the start).
    pub prev_eta: f64,
    /// Subgradient tracked at the stabilization point.
    pub center_grad: &'a [f64],
    /// Linearization error tracked at the stabilization point.
    pub center_alpha: f64,
    pub iteration: usize,
    /// Large reference parameter used by the boolean comparison slot.
    pub eta_star: f64,
}

/// Extracts the 29 features in their fixed order.
pub fn extract_features(inputs: &FeatureInputs) -> Vec<f64> {
    let bundle = inputs.bundle;
    let newest = bundle.entries.last().expect("bundle never empty");
    let g = &newest.subgradient;
    let point = &newest.point;

    let w_sq = vecmath::norm2_sq(inputs.prev_direction);
    let linear_part: f64 = inputs
        .prev_theta
        .iter()
        .zip(&bundle.entries)
        .map(|(&theta, entry)| theta * entry.lin_error)
        .sum();

    let mut dot_g = (f64::INFINITY, f64::NEG_INFINITY);
    let mut dot_p = (f64::INFINITY, f64::NEG_INFINITY);
    for entry in &bundle.entries {
        let dg = vecmath::dot(g, &entry.subgradient);
        let dp = vecmath::dot(point, &entry.point);
        dot_g = (dot_g.0.min(dg), dot_g.1.max(dg));
        dot_p = (dot_p.0.min(dp), dot_p.1.max(dp));
    }

    vec![
        inputs.prev_eta,
        w_sq,
        inputs.prev_eta * w_sq,
        linear_part,
        (w_sq > linear_part) as usize as f64,
        (inputs.eta_star * w_sq > linear_part) as usize as f64,
        inputs.iteration as f64,
        newest.value,
        bundle.center_value,
        inputs.center_alpha,
        newest.lin_error,
        vecmath::norm2(point),
        vecmath::norm2(&bundle.center),
        vecmath::norm2(inputs.center_grad),
        vecmath::norm2_sq(g),
        vecmath::mean(g),
        vecmath::variance(g),
        vecmath::min(g),
        vecmath::max(g),
        vecmath::norm2_sq(point),
        vecmath::mean(point),
        vecmath::variance(point),
        vecmath::min(point),
        vecmath::max(point),
        dot_g.0,
        dot_g.1,
        dot_p.0,
        dot_p.1,
        vecmath::dot(g, inputs.prev_direction),
    ]
}
