//! Dual master problem over the probability simplex.
//!
//! Minimizes `(eta/2) ||sum_i theta_i g_i||^2 + sum_i theta_i alpha_i` over
//! the simplex by accelerated projected gradient with the exact sort-based
//! Euclidean projection, step `1/L` with `L = eta ||G||_F^2`, and a restart
//! whenever a step fails to decrease the objective. Once the projection has
//! identified a support, the equality-constrained KKT system on that support
//! is solved exactly and accepted whenever it satisfies the full optimality
//! conditions; ill-conditioned bundles otherwise stall just above tight
//! tolerances. Dependency-free and robust at the bundle sizes this crate
//! produces (a few hundred entries).

use crate::bundle::BundleEntry;
use crate::error::{Error, Result};
use crate::simplex;
use crate::vecmath;

const MAX_ITERATIONS: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Solution of the dual master problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpSolution {
    /// Simplex weights over bundle entries.
    pub weights: Vec<f64>,
    /// Aggregated subgradient `sum_i theta_i g_i`.
    pub direction: Vec<f64>,
    /// Aggregated linearization error `sum_i theta_i alpha_i`.
    pub sigma: f64,
    /// Objective value at `weights`.
    pub objective: f64,
    /// Predicted improvement `eta ||w||^2 + sigma` at the solve's `eta`.
    pub v_star: f64,
    /// Max KKT stationarity violation at `weights`.
    pub kkt_residual: f64,
}

struct Quadratic {
    /// Gram matrix `eta * g_i^T g_j`, row-major.
    q: Vec<f64>,
    alphas: Vec<f64>,
    n: usize,
}

impl Quadratic {
    fn build(entries: &[BundleEntry], eta: f64) -> Self {
        let n = entries.len();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = eta * vecmath::dot(&entries[i].subgradient, &entries[j].subgradient);
                q[i * n + j] = v;
                q[j * n + i] = v;
            }
        }
        Quadratic {
            q,
            alphas: entries.iter().map(|e| e.lin_error).collect(),
            n,
        }
    }

    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.q[i * self.n..(i + 1) * self.n];
            out[i] = vecmath::dot(row, theta) + self.alphas[i];
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.n {
            let row = &self.q[i * self.n..(i + 1) * self.n];
            quad += theta[i] * vecmath::dot(row, theta);
        }
        0.5 * quad + vecmath::dot(&self.alphas, theta)
    }

    /// KKT stationarity residual: on the support the partial derivatives must
    /// agree with the common multiplier; off it they must not undercut it.
    fn kkt_residual(&self, theta: &[f64]) -> f64 {
        let mut grad = vec![0.0; self.n];
        self.gradient(theta, &mut grad);
        let lambda: f64 = theta
            .iter()
            .zip(&grad)
            .map(|(&t, &g)| t * g)
            .sum();
        let mut residual = 0.0f64;
        for i in 0..self.n {
            if theta[i] > 0.0 {
                residual = residual.max((grad[i] - lambda).abs());
            } else {
                residual = residual.max(lambda - grad[i]);
            }
        }
        residual.max(0.0)
    }

    /// Solves the equality-constrained problem restricted to `support`
    /// (`Q_SS theta_S + alpha_S = lambda 1`, `1^T theta_S = 1`), returning the
    /// full-length weights and the multiplier.
    fn solve_on_support(&self, support: &[usize]) -> Option<(Vec<f64>, f64)> {
        let s = support.len();
        if s == 0 {
            return None;
        }
        // Augmented system [Q_SS 1; 1^T 0] [theta; -lambda] = [-alpha_S; 1].
        let dim = s + 1;
        let mut system = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for (row, &i) in support.iter().enumerate() {
            for (col, &j) in support.iter().enumerate() {
                system[row * dim + col] = self.q[i * self.n + j];
            }
            system[row * dim + s] = 1.0;
            system[s * dim + row] = 1.0;
            rhs[row] = -self.alphas[i];
        }
        rhs[s] = 1.0;
        let solution = solve_dense(&mut system, &mut rhs, dim)?;
        let mut theta = vec![0.0; self.n];
        for (row, &i) in support.iter().enumerate() {
            theta[i] = solution[row];
        }
        Some((theta, -solution[s]))
    }

    /// Active-set refinement starting from a guessed support: repeatedly
    /// solve the support-restricted KKT system, drop the most negative
    /// weight, add the most violated off-support index, until the full
    /// conditions hold. Bounded and best-effort; `None` when no feasible
    /// candidate emerges.
    fn polish(&self, initial_support: &[usize]) -> Option<Vec<f64>> {
        let mut support = initial_support.to_vec();
        if support.is_empty() {
            return None;
        }
        for _ in 0..(2 * self.n + 4) {
            let (mut theta, lambda) = self.solve_on_support(&support)?;

            // Infeasible weight: drop the most negative index and retry.
            if let Some(&worst) = support
                .iter()
                .filter(|&&i| theta[i] < -1e-12)
                .min_by(|&&a, &&b| theta[a].partial_cmp(&theta[b]).expect("finite weights"))
            {
                if support.len() == 1 {
                    return None;
                }
                support.retain(|&i| i != worst);
                continue;
            }

            // Off-support optimality: pull in the most violated index.
            let mut grad = vec![0.0; self.n];
            for v in theta.iter_mut() {
                *v = v.max(0.0);
            }
            self.gradient(&theta, &mut grad);
            let violator = (0..self.n)
                .filter(|i| !support.contains(i))
                .filter(|&j| lambda - grad[j] > 1e-14)
                .max_by(|&a, &b| {
                    (lambda - grad[a])
                        .partial_cmp(&(lambda - grad[b]))
                        .expect("finite gradient")
                });
            match violator {
                Some(j) => {
                    support.push(j);
                    support.sort_unstable();
                }
                None => {
                    // Restore the exact simplex sum after clamping.
                    let total: f64 = theta.iter().sum();
                    if !(total > 0.0) {
                        return None;
                    }
                    for v in theta.iter_mut() {
                        *v /= total;
                    }
                    return Some(theta);
                }
            }
        }
        None
    }
}

/// Gaussian elimination with partial pivoting; `None` on (near-)singularity.
fn solve_dense(matrix: &mut [f64], rhs: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| {
                matrix[a * n + col]
                    .abs()
                    .partial_cmp(&matrix[b * n + col].abs())
                    .expect("finite pivots")
            })
            .expect("nonempty range");
        if matrix[pivot_row * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                matrix.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let pivot = matrix[col * n + col];
        for row in (col + 1)..n {
            let factor = matrix[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                matrix[row * n + k] -= factor * matrix[col * n + k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut solution = vec![0.0; n];
    for row in (0..n).rev() {
        let mut value = rhs[row];
        for col in (row + 1)..n {
            value -= matrix[row * n + col] * solution[col];
        }
        solution[row] = value / matrix[row * n + row];
        if !solution[row].is_finite() {
            return None;
        }
    }
    Some(solution)
}

/// Solves the master problem to KKT residual `tol`.
///
/// On iteration-cap exhaustion the best iterate found is returned inside the
/// error so callers may still proceed at their own risk.
pub fn solve_dmp(entries: &[BundleEntry], eta: f64, tol: f64) -> Result<DmpSolution> {
    if entries.is_empty() {
        return Err(Error::contract("master problem needs at least one entry"));
    }
    if !(eta > 0.0) {
        return Err(Error::contract("master problem: eta must be > 0"));
    }
    if !(tol > 0.0) {
        return Err(Error::contract("master problem: tol must be > 0"));
    }
    let n = entries.len();
    if n == 1 {
        return Ok(assemble(entries, eta, vec![1.0], 0.0));
    }

    let problem = Quadratic::build(entries, eta);
    let lipschitz: f64 = (0..n).map(|i| problem.q[i * n + i]).sum();

    // Degenerate quadratic part: the objective is linear, the optimum is the
    // first vertex attaining the smallest alpha.
    if lipschitz <= f64::MIN_POSITIVE {
        let best = (0..n)
            .min_by(|&a, &b| problem.alphas[a].partial_cmp(&problem.alphas[b]).unwrap())
            .unwrap();
        let mut theta = vec![0.0; n];
        theta[best] = 1.0;
        let residual = problem.kkt_residual(&theta);
        return Ok(assemble(entries, eta, theta, residual));
    }

    let step = 1.0 / lipschitz;
    let mut theta = vec![1.0 / n as f64; n];
    let mut prev = theta.clone();
    let mut momentum = 1.0f64;
    let mut obj = problem.objective(&theta);
    let mut grad = vec![0.0; n];
    let mut best_theta = theta.clone();
    let mut best_residual = f64::INFINITY;

    for iteration in 0..MAX_ITERATIONS {
        // Extrapolate, take a projected gradient step from the extrapolation.
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let extrapolated: Vec<f64> = theta
            .iter()
            .zip(&prev)
            .map(|(&t, &p)| t + beta * (t - p))
            .collect();
        problem.gradient(&extrapolated, &mut grad);
        let candidate: Vec<f64> = extrapolated
            .iter()
            .zip(&grad)
            .map(|(&y, &g)| y - step * g)
            .collect();
        let mut next = simplex::project(&candidate);
        let mut next_obj = problem.objective(&next);

        if next_obj > obj {
            // Restart: plain projected gradient step from the current iterate.
            problem.gradient(&theta, &mut grad);
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(&t, &g)| t - step * g)
                .collect();
            next = simplex::project(&candidate);
            next_obj = problem.objective(&next);
            momentum = 1.0;
        } else {
            momentum = next_momentum;
        }

        prev = std::mem::replace(&mut theta, next);
        obj = next_obj;

        let residual = problem.kkt_residual(&theta);
        if residual < best_residual {
            best_residual = residual;
            best_theta.copy_from_slice(&theta);
        }
        if residual <= tol {
            return Ok(assemble(entries, eta, theta, residual));
        }

        // Periodically try the exact solve on the projected support: once the
        // support is identified this lands on the optimum directly.
        if (iteration + 1) % 25 == 0 || iteration == MAX_ITERATIONS - 1 {
            let support: Vec<usize> = (0..n).filter(|&i| theta[i] > 0.0).collect();
            if let Some(candidate) = problem.polish(&support) {
                let residual = problem.kkt_residual(&candidate);
                if residual <= tol {
                    return Ok(assemble(entries, eta, candidate, residual));
                }
                if residual < best_residual {
                    best_residual = residual;
                    best_theta.copy_from_slice(&candidate);
                }
            }
        }

        if iteration == MAX_ITERATIONS - 1 {
            return Err(Error::DmpNoConvergence {
                residual: best_residual,
                iterations: MAX_ITERATIONS,
                best: Box::new(assemble(entries, eta, best_theta, best_residual)),
            });
        }
    }
    unreachable!("loop either converges or errors at the cap");
}

fn assemble(entries: &[BundleEntry], eta: f64, weights: Vec<f64>, kkt_residual: f64) -> DmpSolution {
    let (direction, sigma) = aggregate(&weights, entries).expect("lengths checked by caller");
    let w_sq = vecmath::norm2_sq(&direction);
    DmpSolution {
        objective: 0.5 * eta * w_sq + sigma,
        v_star: eta * w_sq + sigma,
        weights,
        direction,
        sigma,
        kkt_residual,
    }
}

/// Aggregates `w = sum_i theta_i g_i` and `sigma = sum_i theta_i alpha_i`.
pub fn aggregate(weights: &[f64], entries: &[BundleEntry]) -> Result<(Vec<f64>, f64)> {
    if weights.len() != entries.len() {
        return Err(Error::DimensionMismatch {
            expected: entries.len(),
            got: weights.len(),
        });
    }
    let dim = entries.first().map_or(0, |e| e.subgradient.len());
    let mut direction = vec![0.0; dim];
    let mut sigma = 0.0;
    for (entry, &weight) in entries.iter().zip(weights) {
        if weight != 0.0 {
            vecmath::axpy(weight, &entry.subgradient, &mut direction);
            sigma += weight * entry.lin_error;
        }
    }
    Ok((direction, sigma))
}

/// Approximate-optimality certificate:
/// `eta_star ||w||^2 + sigma <= epsilon * max(1, |center_value|)`.
///
/// The relative floor keeps the test meaningful when the center value is near
/// zero (always the case for well-scaled duals near the optimum).
pub fn stopping_test(
    direction: &[f64],
    sigma: f64,
    eta_star: f64,
    epsilon: f64,
    center_value: f64,
) -> Result<bool> {
    if !(eta_star > 0.0) || !(epsilon > 0.0) {
        return Err(Error::contract("stopping test: eta_star and epsilon must be > 0"));
    }
    if sigma < -1e-9 {
        return Err(Error::contract(format!(
            "stopping test: aggregated error must be nonnegative, got {sigma}"
        )));
    }
    let sigma = sigma.max(0.0);
    Ok(eta_star * vecmath::norm2_sq(direction) + sigma <= epsilon * center_value.abs().max(1.0))
}

/// Quantities consumed by the long-term step-size strategies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedQuantities {
    /// Maximum improvement predicted by the master at the current `eta`.
    pub v_star: f64,
    /// Improvement predicted with the large reference parameter `eta_star`.
    pub eps_star: f64,
    /// Quadratic term `(eta_star / 2) ||w||^2`.
    pub quad: f64,
    /// Linear term `sigma`.
    pub lin: f64,
}

pub fn predicted_quantities(
    solution: &DmpSolution,
    eta: f64,
    eta_star: f64,
) -> PredictedQuantities {
    let w_sq = vecmath::norm2_sq(&solution.direction);
    PredictedQuantities {
        v_star: eta * w_sq + solution.sigma,
        eps_star: solution.sigma + eta_star * w_sq,
        quad: 0.5 * eta_star * w_sq,
        lin: solution.sigma,
    }
}
