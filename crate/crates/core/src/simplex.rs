//! Exact Euclidean projection onto the probability simplex.
//!
//! Sort-based threshold method: find the largest k with
//! `1 + k*z_(k) > sum_{j<=k} z_(j)` over the descending sort, set
//! `tau = (sum_{j<=k} z_(j) - 1)/k` and clip `p_i = max(z_i - tau, 0)`.
//! The same kernel backs both the master-problem solver and the sparsemax
//! activation.

/// Projects `z` onto `{ p : p >= 0, sum p = 1 }` and returns `(p, tau)`.
pub fn project_with_threshold(z: &[f64]) -> (Vec<f64>, f64) {
    assert!(!z.is_empty(), "cannot project an empty vector");
    let mut sorted: Vec<f64> = z.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("non-finite projection input"));

    let mut cumsum = 0.0;
    let mut tau = 0.0;
    let mut support = 0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            tau = candidate;
            support = k + 1;
        } else {
            break;
        }
    }
    debug_assert!(support >= 1);

    let p = z.iter().map(|&v| (v - tau).max(0.0)).collect();
    (p, tau)
}

/// Euclidean projection onto the probability simplex.
pub fn project(z: &[f64]) -> Vec<f64> {
    project_with_threshold(z).0
}
