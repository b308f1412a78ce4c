//! Generalized assignment: instance data, the per-bin 0/1 knapsack oracle,
//! dual evaluation and a random generator.
//!
//! Dualizing the semi-assignment constraints splits the relaxed problem into
//! one integer knapsack per bin over the profits adjusted by the item
//! multipliers. Weights and capacities are integers so the knapsack is solved
//! exactly by dynamic programming over capacity.

use crate::error::{Error, Result};
use crate::oracles::DualProblem;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Profit and weight matrices are item-major: `profits[item][bin]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapInstance {
    pub profits: Vec<Vec<u64>>,
    pub weights: Vec<Vec<u64>>,
    pub capacities: Vec<u64>,
}

impl GapInstance {
    pub fn items(&self) -> usize {
        self.profits.len()
    }

    pub fn bins(&self) -> usize {
        self.capacities.len()
    }

    pub fn dual_dimension(&self) -> usize {
        self.items()
    }

    pub fn validate(&self) -> Result<()> {
        let items = self.items();
        let bins = self.bins();
        if bins == 0 {
            return Err(Error::instance("capacities: need at least one bin"));
        }
        if self.weights.len() != items {
            return Err(Error::instance(format!(
                "weights: {} rows, expected {} (one per item)",
                self.weights.len(),
                items
            )));
        }
        for (i, row) in self.profits.iter().enumerate() {
            if row.len() != bins {
                return Err(Error::instance(format!(
                    "profits: item {i} has {} entries, expected {bins}",
                    row.len()
                )));
            }
        }
        for (i, row) in self.weights.iter().enumerate() {
            if row.len() != bins {
                return Err(Error::instance(format!(
                    "weights: item {i} has {} entries, expected {bins}",
                    row.len()
                )));
            }
            if row.iter().any(|&w| w == 0) {
                return Err(Error::instance(format!(
                    "weights: item {i} has a zero weight; weights must be >= 1"
                )));
            }
        }
        Ok(())
    }
}

/// Exact 0/1 knapsack by dynamic programming over integer capacity.
///
/// Maximizes the summed adjusted profit subject to the weight budget; items
/// with adjusted profit `<= 0` are never selected. Among equal-value optima
/// the lexicographically smallest selection vector is returned.
pub fn bin_knapsack(
    adjusted_profits: &[f64],
    weights: &[u64],
    capacity: u64,
) -> Result<(f64, Vec<bool>)> {
    if adjusted_profits.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: adjusted_profits.len(),
            got: weights.len(),
        });
    }
    let n = adjusted_profits.len();
    let cap = capacity as usize;

    // Suffix table: best[i][c] = optimal value using items i.. with budget c.
    // Reconstruction walks forward preferring "skip", which yields the
    // lexicographically smallest optimal selection.
    let mut best = vec![vec![0.0f64; cap + 1]; n + 1];
    for i in (0..n).rev() {
        let w = weights[i] as usize;
        let p = adjusted_profits[i];
        for c in 0..=cap {
            let skip = best[i + 1][c];
            best[i][c] = if p > 0.0 && w <= c {
                skip.max(p + best[i + 1][c - w])
            } else {
                skip
            };
        }
    }

    let mut selection = vec![false; n];
    let mut c = cap;
    for i in 0..n {
        let w = weights[i] as usize;
        let p = adjusted_profits[i];
        if p > 0.0 && w <= c && best[i][c] > best[i + 1][c] {
            selection[i] = true;
            c -= w;
        }
    }
    Ok((best[0][cap], selection))
}

impl DualProblem for GapInstance {
    fn dual_dimension(&self) -> usize {
        self.dual_dimension()
    }

    fn sign_constrained(&self) -> bool {
        true
    }

    /// `LR(pi) = sum_bins LR_j(pi) + sum_items pi_i` with the supergradient
    /// of `LR` at `pi_i` equal to `1 - sum_j x_ij` over the bin optimizers.
    fn evaluate_lr(&self, pi: &[f64]) -> Result<(f64, Vec<f64>)> {
        let items = self.items();
        if pi.len() != items {
            return Err(Error::DimensionMismatch {
                expected: items,
                got: pi.len(),
            });
        }
        if pi.iter().any(|&v| v < 0.0) {
            return Err(Error::contract(
                "gap evaluation: multipliers must be nonnegative",
            ));
        }

        let mut lr: f64 = pi.iter().sum();
        let mut grad = vec![1.0; items];
        let mut adjusted = vec![0.0; items];
        for (j, &cap) in self.capacities.iter().enumerate() {
            for i in 0..items {
                adjusted[i] = self.profits[i][j] as f64 - pi[i];
            }
            let weights: Vec<u64> = (0..items).map(|i| self.weights[i][j]).collect();
            let (value, selection) = bin_knapsack(&adjusted, &weights, cap)?;
            lr += value;
            for (i, taken) in selection.iter().enumerate() {
                if *taken {
                    grad[i] -= 1.0;
                }
            }
        }
        Ok((lr, grad))
    }
}

/// Random-instance parameters. Ranges are inclusive at both ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapGenParams {
    pub items: usize,
    pub bins: usize,
    pub profit_range: (u64, u64),
    pub weight_range: (u64, u64),
    /// Capacity tightness in `(0, 1]`.
    pub tightness: f64,
}

impl Default for GapGenParams {
    fn default() -> Self {
        // Desk-scale default family: 10 bins, 100 items.
        GapGenParams {
            items: 100,
            bins: 10,
            profit_range: (5, 25),
            weight_range: (5, 25),
            tightness: 0.8,
        }
    }
}

/// Generates an instance with `c_j = round(rho * sum_i mean_j(w_ij) / bins)`,
/// deterministic in `(params, seed)`.
pub fn generate_gap(params: &GapGenParams, seed: u64) -> Result<GapInstance> {
    if !(params.tightness > 0.0 && params.tightness <= 1.0) {
        return Err(Error::contract("generator: tightness must be in (0, 1]"));
    }
    if params.items == 0 || params.bins == 0 {
        return Err(Error::contract("generator: need items and bins"));
    }
    if params.weight_range.0 == 0 {
        return Err(Error::contract("generator: weights must be >= 1"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_matrix = |rng: &mut ChaCha8Rng, range: (u64, u64)| -> Vec<Vec<u64>> {
        (0..params.items)
            .map(|_| {
                (0..params.bins)
                    .map(|_| rng.random_range(range.0..=range.1))
                    .collect()
            })
            .collect()
    };
    let profits = sample_matrix(&mut rng, params.profit_range);
    let weights = sample_matrix(&mut rng, params.weight_range);

    let total_mean_weight: f64 = weights
        .iter()
        .map(|row| row.iter().sum::<u64>() as f64 / params.bins as f64)
        .sum();
    let capacity = (params.tightness * total_mean_weight / params.bins as f64).round() as u64;
    let instance = GapInstance {
        profits,
        weights,
        capacities: vec![capacity; params.bins],
    };
    instance.validate()?;
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force oracle: enumerate all item subsets of one bin.
    fn knapsack_oracle(profits: &[f64], weights: &[u64], capacity: u64) -> f64 {
        let n = profits.len();
        let mut best = 0.0f64;
        for mask in 0..(1u32 << n) {
            let mut value = 0.0;
            let mut weight = 0u64;
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    value += profits[i];
                    weight += weights[i];
                }
            }
            if weight <= capacity {
                best = best.max(value);
            }
        }
        best
    }

    #[test]
    fn knapsack_matches_subset_enumeration() {
        let (value, selection) = bin_knapsack(&[5.0, 3.0], &[2, 3], 4).unwrap();
        assert_eq!(knapsack_oracle(&[5.0, 3.0], &[2, 3], 4), 5.0);
        assert_eq!(value, 5.0);
        assert_eq!(selection, vec![true, false]);
    }

    #[test]
    fn knapsack_empty_and_zero_capacity() {
        let (value, selection) = bin_knapsack(&[], &[], 10).unwrap();
        assert_eq!(value, 0.0);
        assert!(selection.is_empty());

        let (value, selection) = bin_knapsack(&[4.0, 1.0], &[1, 1], 0).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(selection, vec![false, false]);
    }

    #[test]
    fn knapsack_never_selects_nonpositive_profit() {
        let (value, selection) = bin_knapsack(&[-1.0, 0.0, 2.0], &[1, 1, 1], 3).unwrap();
        assert_eq!(value, 2.0);
        assert_eq!(selection, vec![false, false, true]);
    }

    #[test]
    fn knapsack_prefers_lexicographically_smallest_tie() {
        // Two optimal singletons; the reconstruction must not take item 0.
        let (value, selection) = bin_knapsack(&[2.0, 2.0], &[2, 2], 2).unwrap();
        assert_eq!(value, 2.0);
        assert_eq!(selection, vec![false, true]);
    }

    #[test]
    fn knapsack_random_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.random_range(1..=6);
            let profits: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..6.0)).collect();
            let weights: Vec<u64> = (0..n).map(|_| rng.random_range(1..=5)).collect();
            let capacity = rng.random_range(0..=12);
            let (value, selection) = bin_knapsack(&profits, &weights, capacity).unwrap();
            let expect = knapsack_oracle(&profits, &weights, capacity);
            assert!((value - expect).abs() < 1e-9);
            // Returned selection must be feasible and achieve the value.
            let w: u64 = selection
                .iter()
                .zip(&weights)
                .filter(|(s, _)| **s)
                .map(|(_, w)| w)
                .sum();
            let v: f64 = selection
                .iter()
                .zip(&profits)
                .filter(|(s, _)| **s)
                .map(|(_, p)| p)
                .sum();
            assert!(w <= capacity);
            assert!((v - value).abs() < 1e-9);
        }
    }

    fn tiny_instance() -> GapInstance {
        GapInstance {
            profits: vec![vec![4], vec![3]],
            weights: vec![vec![3], vec![3]],
            capacities: vec![5],
        }
    }

    #[test]
    fn evaluate_at_zero_matches_hand_enumeration() {
        let inst = tiny_instance();
        let (lr, grad) = inst.evaluate_lr(&[0.0, 0.0]).unwrap();
        assert_eq!(lr, 4.0);
        assert_eq!(grad, vec![0.0, 1.0]);
    }

    #[test]
    fn evaluate_with_huge_multipliers_empties_all_bins() {
        let inst = tiny_instance();
        let pi = vec![100.0, 100.0];
        let (lr, grad) = inst.evaluate_lr(&pi).unwrap();
        assert_eq!(lr, 200.0);
        assert_eq!(grad, vec![1.0, 1.0]);
    }

    #[test]
    fn evaluate_rejects_negative_multipliers() {
        let inst = tiny_instance();
        assert!(inst.evaluate_lr(&[-0.1, 0.0]).is_err());
    }

    #[test]
    fn evaluate_is_deterministic() {
        let inst = generate_gap(&GapGenParams::default(), 2).unwrap();
        let pi: Vec<f64> = (0..inst.dual_dimension())
            .map(|i| (i as f64 * 0.13).cos().abs())
            .collect();
        assert_eq!(inst.evaluate_lr(&pi).unwrap(), inst.evaluate_lr(&pi).unwrap());
    }

    #[test]
    fn generator_capacity_formula() {
        let params = GapGenParams {
            items: 10,
            bins: 2,
            profit_range: (1, 1),
            weight_range: (10, 10),
            tightness: 1.0,
        };
        let inst = generate_gap(&params, 0).unwrap();
        assert_eq!(inst.capacities, vec![50, 50]);
    }

    #[test]
    fn generator_deterministic_and_valid() {
        let params = GapGenParams::default();
        let a = generate_gap(&params, 9).unwrap();
        let b = generate_gap(&params, 9).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        a.validate().unwrap();
    }

    #[test]
    fn generator_rejects_bad_tightness() {
        let mut params = GapGenParams::default();
        params.tightness = 0.0;
        assert!(generate_gap(&params, 0).is_err());
        params.tightness = 1.5;
        assert!(generate_gap(&params, 0).is_err());
    }
}
