//! Solvers for finite-valued convex nonsmooth minimization built around the
//! proximal bundle method, together with a learned variant that replaces the
//! master problem and the step-size heuristics with a recurrent attention
//! network trained by unrolling.
//!
//! The toolkit is instantiated on Lagrangian duals of two combinatorial
//! problems: multi-commodity capacitated network design (per-arc continuous
//! knapsack subproblems) and generalized assignment (per-bin 0/1 knapsack
//! subproblems). An experiment harness handles dataset generation, reference
//! bounds, step-size grid search, training, budgeted evaluation and CSV
//! reporting.
//!
//! Crate layout:
//! - [`oracles`]: problem instances, dual evaluation oracles, generators, JSON I/O
//! - [`bundle`]: bundle entries, linearization errors, cutting-plane model
//! - [`master`]: simplex-constrained dual master problem and stopping test
//! - [`eta`]: three-level heuristic strategies for the proximal parameter
//! - [`solver`]: classical bundle loop plus subgradient and Adam baselines
//! - [`autodiff`]: reverse-mode tape with exactly the operators the network needs
//! - [`network`]: features, LSTM encoder, decoders, attention, rollout, training
//! - [`harness`]: dataset manifests, grid search, gap metric, reports

pub mod autodiff;
pub mod bundle;
pub mod error;
pub mod eta;
pub mod harness;
pub mod master;
pub mod network;
pub mod oracles;
pub mod simplex;
pub mod solver;
pub mod trace;
pub(crate) mod vecmath;

pub use error::{Error, Result};
pub use oracles::{Evaluation, Multipliers, Oracle};
pub use trace::{StepType, Termination, Trace, TraceRow};
