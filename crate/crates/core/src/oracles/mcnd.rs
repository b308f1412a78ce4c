//! Multi-commodity capacitated network design: instance data, the per-arc
//! continuous-knapsack relaxation, dual evaluation and a random generator.
//!
//! Dualizing the flow conservation constraints decomposes the relaxed problem
//! by arc. Each arc subproblem has a single binary design variable; opening
//! the arc reduces to a continuous knapsack over the commodities priced at
//! their reduced cost `r - pi_tail + pi_head`. Multipliers are indexed
//! `(node, commodity)` flattened node-major: `index = node * K + k`.

use crate::error::{Error, Result};
use crate::oracles::DualProblem;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Arc {
    pub tail: usize,
    pub head: usize,
    pub capacity: f64,
    pub fixed: f64,
    /// Unit routing cost per commodity; length equals the commodity count.
    pub routing: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Commodity {
    pub origin: usize,
    pub dest: usize,
    pub volume: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McndInstance {
    pub nodes: usize,
    pub arcs: Vec<Arc>,
    pub commodities: Vec<Commodity>,
}

impl McndInstance {
    pub fn dual_dimension(&self) -> usize {
        self.nodes * self.commodities.len()
    }

    fn index(&self, node: usize, commodity: usize) -> usize {
        node * self.commodities.len() + commodity
    }

    /// Commodity `k` may be routed on arc `(i, j)` only if the arc neither
    /// enters the commodity's origin nor leaves its destination.
    fn priced(&self, arc: &Arc, k: usize) -> bool {
        let c = &self.commodities[k];
        arc.head != c.origin && arc.tail != c.dest
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::instance("nodes: need at least 2"));
        }
        let mut seen = std::collections::HashSet::new();
        for (idx, arc) in self.arcs.iter().enumerate() {
            if arc.tail >= self.nodes || arc.head >= self.nodes {
                return Err(Error::instance(format!(
                    "arc {idx}: endpoint out of range (nodes = {})",
                    self.nodes
                )));
            }
            if arc.tail == arc.head {
                return Err(Error::instance(format!("arc {idx}: self-loop")));
            }
            if !seen.insert((arc.tail, arc.head)) {
                return Err(Error::instance(format!(
                    "arc {idx}: duplicate arc ({}, {})",
                    arc.tail, arc.head
                )));
            }
            if !(arc.capacity > 0.0) {
                return Err(Error::instance(format!(
                    "arc {idx}: capacity must be > 0"
                )));
            }
            if !(arc.fixed > 0.0) {
                return Err(Error::instance(format!(
                    "arc {idx}: fixed cost must be > 0"
                )));
            }
            if arc.routing.len() != self.commodities.len() {
                return Err(Error::instance(format!(
                    "arc {idx}: routing has {} entries, expected {}",
                    arc.routing.len(),
                    self.commodities.len()
                )));
            }
            if arc.routing.iter().any(|&r| !(r > 0.0)) {
                return Err(Error::instance(format!(
                    "arc {idx}: routing costs must be > 0"
                )));
            }
        }
        for (k, c) in self.commodities.iter().enumerate() {
            if c.origin >= self.nodes || c.dest >= self.nodes {
                return Err(Error::instance(format!(
                    "commodity {k}: endpoint out of range"
                )));
            }
            if c.origin == c.dest {
                return Err(Error::instance(format!(
                    "commodity {k}: origin equals destination"
                )));
            }
            if c.volume == 0 {
                return Err(Error::instance(format!(
                    "commodity {k}: volume must be >= 1"
                )));
            }
            if !self.has_path(c.origin, c.dest) {
                return Err(Error::instance(format!(
                    "commodity {k}: no path from {} to {}",
                    c.origin, c.dest
                )));
            }
        }
        Ok(())
    }

    fn has_path(&self, from: usize, to: usize) -> bool {
        let mut adj = vec![Vec::new(); self.nodes];
        for arc in &self.arcs {
            adj[arc.tail].push(arc.head);
        }
        let mut reached = vec![false; self.nodes];
        let mut queue = std::collections::VecDeque::from([from]);
        reached[from] = true;
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for &w in &adj[v] {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        false
    }
}

/// Solves one arc subproblem: `min(0, fixed + continuous knapsack)`.
///
/// Opening the arc, commodities with strictly negative reduced cost are
/// filled in ascending reduced-cost order (most negative first), each flow
/// `min(volume, remaining capacity)`. Returns the subproblem value and the
/// optimizing flows; flows are all zero whenever the open-arc cost is `>= 0`.
pub fn arc_relaxation(
    fixed_cost: f64,
    capacity: f64,
    reduced_costs: &[f64],
    volumes: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if reduced_costs.len() != volumes.len() {
        return Err(Error::DimensionMismatch {
            expected: reduced_costs.len(),
            got: volumes.len(),
        });
    }
    if !(capacity > 0.0) {
        return Err(Error::contract("arc relaxation: capacity must be > 0"));
    }
    if volumes.iter().any(|&q| !(q > 0.0)) {
        return Err(Error::contract("arc relaxation: volumes must be > 0"));
    }

    let mut order: Vec<usize> = (0..reduced_costs.len())
        .filter(|&k| reduced_costs[k] < 0.0)
        .collect();
    order.sort_by(|&a, &b| {
        reduced_costs[a]
            .partial_cmp(&reduced_costs[b])
            .expect("non-finite reduced cost")
            .then(a.cmp(&b))
    });

    let mut flows = vec![0.0; reduced_costs.len()];
    let mut remaining = capacity;
    let mut knapsack_cost = 0.0;
    for k in order {
        if remaining <= 0.0 {
            break;
        }
        let flow = volumes[k].min(remaining);
        flows[k] = flow;
        knapsack_cost += reduced_costs[k] * flow;
        remaining -= flow;
    }

    let open_cost = fixed_cost + knapsack_cost;
    if open_cost >= 0.0 {
        Ok((0.0, vec![0.0; reduced_costs.len()]))
    } else {
        Ok((open_cost, flows))
    }
}

impl DualProblem for McndInstance {
    fn dual_dimension(&self) -> usize {
        self.dual_dimension()
    }

    fn sign_constrained(&self) -> bool {
        false
    }

    /// `LR(pi) = sum_arcs LR_ij(pi) + sum_{i,k} pi_i^k b_i^k`, with the
    /// supergradient of `LR` at `pi_i^k` equal to the flow-conservation
    /// violation `b_i^k - outflow + inflow` of the optimizing relaxed flows.
    fn evaluate_lr(&self, pi: &[f64]) -> Result<(f64, Vec<f64>)> {
        let dim = self.dual_dimension();
        if pi.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: pi.len(),
            });
        }
        let n_k = self.commodities.len();
        let mut lr = 0.0;
        let mut grad = vec![0.0; dim];

        for (k, c) in self.commodities.iter().enumerate() {
            let q = c.volume as f64;
            lr += q * (pi[self.index(c.origin, k)] - pi[self.index(c.dest, k)]);
            grad[self.index(c.origin, k)] += q;
            grad[self.index(c.dest, k)] -= q;
        }

        let mut priced_ks = Vec::with_capacity(n_k);
        let mut costs = Vec::with_capacity(n_k);
        let mut vols = Vec::with_capacity(n_k);
        for arc in &self.arcs {
            priced_ks.clear();
            costs.clear();
            vols.clear();
            for k in 0..n_k {
                if self.priced(arc, k) {
                    priced_ks.push(k);
                    costs.push(
                        arc.routing[k] - pi[self.index(arc.tail, k)]
                            + pi[self.index(arc.head, k)],
                    );
                    vols.push(self.commodities[k].volume as f64);
                }
            }
            let (value, flows) = arc_relaxation(arc.fixed, arc.capacity, &costs, &vols)?;
            lr += value;
            for (pos, &k) in priced_ks.iter().enumerate() {
                let x = flows[pos];
                if x != 0.0 {
                    grad[self.index(arc.tail, k)] -= x;
                    grad[self.index(arc.head, k)] += x;
                }
            }
        }
        Ok((lr, grad))
    }
}

/// Random-instance parameters. Ranges are inclusive at both ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McndGenParams {
    pub nodes: usize,
    pub arcs: usize,
    pub commodities: usize,
    pub capacity_range: (f64, f64),
    pub fixed_cost_range: (f64, f64),
    pub routing_cost_range: (f64, f64),
    pub volume_range: (u64, u64),
}

impl Default for McndGenParams {
    fn default() -> Self {
        // Desk-scale default family: 12 nodes, 40 arcs, 10 commodities.
        McndGenParams {
            nodes: 12,
            arcs: 40,
            commodities: 10,
            capacity_range: (8.0, 20.0),
            fixed_cost_range: (1.0, 4.0),
            routing_cost_range: (0.2, 1.5),
            volume_range: (1, 5),
        }
    }
}

/// Generates a connected instance, deterministic in `(params, seed)`.
///
/// A Hamiltonian path over a random node permutation seeds the arc set (plus
/// the closing arc when the budget allows, which makes the digraph strongly
/// connected); remaining arcs are sampled without duplicates. Commodity
/// endpoints are drawn so that an origin-to-destination path always exists.
pub fn generate_mcnd(params: &McndGenParams, seed: u64) -> Result<McndInstance> {
    let n = params.nodes;
    if n < 2 {
        return Err(Error::contract("generator: need at least 2 nodes"));
    }
    if params.arcs + 1 < n {
        return Err(Error::contract(format!(
            "generator: {} arcs cannot connect {} nodes",
            params.arcs, n
        )));
    }
    if params.arcs > n * (n - 1) {
        return Err(Error::contract(format!(
            "generator: {} arcs exceed the simple-digraph maximum {}",
            params.arcs,
            n * (n - 1)
        )));
    }
    if params.commodities == 0 {
        return Err(Error::contract("generator: need at least one commodity"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let mut pairs = Vec::with_capacity(params.arcs);
    let mut used = std::collections::HashSet::new();
    for w in perm.windows(2) {
        pairs.push((w[0], w[1]));
        used.insert((w[0], w[1]));
    }
    let cyclic = params.arcs >= n;
    if cyclic {
        let closing = (perm[n - 1], perm[0]);
        pairs.push(closing);
        used.insert(closing);
    }
    while pairs.len() < params.arcs {
        let tail = rng.random_range(0..n);
        let head = rng.random_range(0..n);
        if tail != head && used.insert((tail, head)) {
            pairs.push((tail, head));
        }
    }

    let mut position = vec![0usize; n];
    for (rank, &v) in perm.iter().enumerate() {
        position[v] = rank;
    }
    let mut commodities = Vec::with_capacity(params.commodities);
    for _ in 0..params.commodities {
        let (origin, dest) = loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            // Without the closing arc only the permutation order is reachable.
            if cyclic || position[a] < position[b] {
                break (a, b);
            }
        };
        let volume = rng.random_range(params.volume_range.0..=params.volume_range.1);
        commodities.push(Commodity {
            origin,
            dest,
            volume,
        });
    }

    let arcs = pairs
        .into_iter()
        .map(|(tail, head)| Arc {
            tail,
            head,
            capacity: rng.random_range(params.capacity_range.0..=params.capacity_range.1),
            fixed: rng.random_range(params.fixed_cost_range.0..=params.fixed_cost_range.1),
            routing: (0..params.commodities)
                .map(|_| {
                    rng.random_range(params.routing_cost_range.0..=params.routing_cost_range.1)
                })
                .collect(),
        })
        .collect();

    let instance = McndInstance {
        nodes: n,
        arcs,
        commodities,
    };
    instance.validate()?;
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle for the arc subproblem: try y = 0 and, for y = 1,
    /// every fill order of the commodities (each filled to volume or to the
    /// remaining capacity). Vertex solutions of the knapsack polytope are
    /// reachable this way, so the true minimum is among them.
    fn arc_oracle(fixed: f64, capacity: f64, costs: &[f64], volumes: &[f64]) -> f64 {
        fn permutations(k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for rest in permutations(k - 1) {
                for pos in 0..=rest.len() {
                    let mut p = rest.clone();
                    p.insert(pos, k - 1);
                    out.push(p);
                }
            }
            out
        }
        let mut best = 0.0f64;
        for order in permutations(costs.len()) {
            // Also consider skipping items: mask subsets of the order.
            for mask in 0..(1u32 << order.len()) {
                let mut remaining = capacity;
                let mut cost = fixed;
                for (pos, &k) in order.iter().enumerate() {
                    if mask & (1 << pos) == 0 {
                        continue;
                    }
                    let x = volumes[k].min(remaining);
                    cost += costs[k] * x;
                    remaining -= x;
                    if remaining <= 0.0 {
                        break;
                    }
                }
                best = best.min(cost);
            }
        }
        best
    }

    #[test]
    fn knapsack_fill_matches_exhaustive_oracle() {
        let (value, flows) =
            arc_relaxation(2.0, 5.0, &[-3.0, -1.0, 2.0], &[4.0, 3.0, 5.0]).unwrap();
        let expect = arc_oracle(2.0, 5.0, &[-3.0, -1.0, 2.0], &[4.0, 3.0, 5.0]);
        assert_eq!(expect, -11.0);
        assert_eq!(value, -11.0);
        assert_eq!(flows, vec![4.0, 1.0, 0.0]);
    }

    #[test]
    fn closed_arc_when_all_costs_nonnegative() {
        let (value, flows) = arc_relaxation(3.0, 5.0, &[1.0, 2.0], &[4.0, 3.0]).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(flows, vec![0.0, 0.0]);
    }

    #[test]
    fn single_item_fits_fully() {
        let (value, flows) = arc_relaxation(0.0, 5.0, &[-1.0], &[2.0]).unwrap();
        assert_eq!(value, -2.0);
        assert_eq!(flows, vec![2.0]);
    }

    #[test]
    fn random_fills_match_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let k = rng.random_range(1..=4);
            let costs: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let volumes: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..4.0)).collect();
            let fixed = rng.random_range(0.1..2.0);
            let capacity = rng.random_range(0.5..8.0);
            let (value, _) = arc_relaxation(fixed, capacity, &costs, &volumes).unwrap();
            let expect = arc_oracle(fixed, capacity, &costs, &volumes);
            assert!(
                (value - expect).abs() <= 1e-9,
                "value {value} vs oracle {expect}"
            );
        }
    }

    #[test]
    fn rejects_bad_contracts() {
        assert!(arc_relaxation(1.0, 5.0, &[-1.0], &[1.0, 2.0]).is_err());
        assert!(arc_relaxation(1.0, 0.0, &[-1.0], &[1.0]).is_err());
        assert!(arc_relaxation(1.0, 1.0, &[-1.0], &[0.0]).is_err());
    }

    fn tiny_instance() -> McndInstance {
        McndInstance {
            nodes: 2,
            arcs: vec![Arc {
                tail: 0,
                head: 1,
                capacity: 5.0,
                fixed: 2.0,
                routing: vec![1.0],
            }],
            commodities: vec![Commodity {
                origin: 0,
                dest: 1,
                volume: 3,
            }],
        }
    }

    #[test]
    fn evaluate_at_zero_matches_hand_enumeration() {
        // With zero multipliers the reduced cost is +1, the arc stays closed,
        // LR = 0 and the supergradient is the raw imbalance b.
        let inst = tiny_instance();
        let (lr, grad) = inst.evaluate_lr(&[0.0, 0.0]).unwrap();
        assert_eq!(lr, 0.0);
        assert_eq!(grad, vec![3.0, -3.0]);
    }

    #[test]
    fn evaluate_no_commodities() {
        let inst = McndInstance {
            nodes: 2,
            arcs: vec![Arc {
                tail: 0,
                head: 1,
                capacity: 5.0,
                fixed: 2.0,
                routing: vec![],
            }],
            commodities: vec![],
        };
        let (lr, grad) = inst.evaluate_lr(&[]).unwrap();
        assert_eq!(lr, 0.0);
        assert!(grad.is_empty());
    }

    #[test]
    fn evaluate_is_deterministic() {
        let inst = generate_mcnd(&McndGenParams::default(), 11).unwrap();
        let pi: Vec<f64> = (0..inst.dual_dimension())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let a = inst.evaluate_lr(&pi).unwrap();
        let b = inst.evaluate_lr(&pi).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let params = McndGenParams::default();
        let a = generate_mcnd(&params, 3).unwrap();
        let b = generate_mcnd(&params, 3).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        a.validate().unwrap();
    }

    #[test]
    fn generator_minimal_path_instance() {
        let params = McndGenParams {
            nodes: 2,
            arcs: 1,
            commodities: 1,
            ..McndGenParams::default()
        };
        let inst = generate_mcnd(&params, 0).unwrap();
        assert_eq!(inst.dual_dimension(), 2);
        inst.validate().unwrap();
    }

    #[test]
    fn generator_rejects_infeasible_combinations() {
        let mut params = McndGenParams::default();
        params.nodes = 3;
        params.arcs = 7; // > n(n-1) = 6
        assert!(generate_mcnd(&params, 0).is_err());
        params.arcs = 1; // < n-1 = 2
        assert!(generate_mcnd(&params, 0).is_err());
    }
}
