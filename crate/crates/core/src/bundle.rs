//! Bundle bookkeeping: entries, linearization errors, center translation,
//! cutting-plane model evaluation and pruning.
//!
//! Entries keep the iterate and the exact oracle value that produced them so
//! linearization errors can be recomputed from scratch, which keeps the
//! incremental translation honest and provides the dot products some solver
//! features need.

use crate::error::{Error, Result};
use crate::vecmath;

#[derive(Debug, Clone)]
pub struct BundleEntry {
    /// Subgradient at `point`.
    pub subgradient: Vec<f64>,
    /// Linearization error relative to the current center; `>= -1e-9` when the
    /// center value is exact.
    pub lin_error: f64,
    /// Oracle value `phi(point)`.
    pub value: f64,
    /// Iterate that produced the subgradient.
    pub point: Vec<f64>,
    /// Iteration at which this entry last carried positive master weight.
    pub last_active: usize,
}

impl BundleEntry {
    pub fn new(subgradient: Vec<f64>, lin_error: f64, value: f64, point: Vec<f64>) -> Self {
        BundleEntry {
            subgradient,
            lin_error,
            value,
            point,
            last_active: 0,
        }
    }

    /// Linearization error recomputed from the stored iterate:
    /// `alpha = v_center - value - g^T (center - point)`.
    pub fn lin_error_from_scratch(&self, center: &[f64], center_value: f64) -> f64 {
        center_value - self.value - vecmath::dot(&self.subgradient, &vecmath::sub(center, &self.point))
    }
}

#[derive(Debug, Clone)]
pub struct BundleState {
    pub entries: Vec<BundleEntry>,
    /// Stabilization center.
    pub center: Vec<f64>,
    /// Value at the center: exact `phi(center)` in classic mode, a convex
    /// combination surrogate (an upper bound, by convexity) in network mode.
    pub center_value: f64,
    pub iteration: usize,
}

impl BundleState {
    /// Starts a bundle from the initial evaluation: one entry with zero
    /// linearization error at the initial center.
    pub fn initial(point: Vec<f64>, value: f64, subgradient: Vec<f64>) -> Self {
        BundleState {
            entries: vec![BundleEntry::new(subgradient, 0.0, value, point.clone())],
            center: point,
            center_value: value,
            iteration: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    /// Appends an entry, preserving insertion order.
    pub fn append(&mut self, entry: BundleEntry) -> Result<()> {
        if entry.subgradient.len() != self.dimension() || entry.point.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: entry.subgradient.len(),
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Moves the center and updates every linearization error incrementally:
    /// `alpha += (v_new - v_old) - g^T (center_new - center_old)`.
    pub fn translate_errors(&mut self, new_center: &[f64], new_center_value: f64) -> Result<()> {
        if new_center.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: new_center.len(),
            });
        }
        let shift = vecmath::sub(new_center, &self.center);
        let dv = new_center_value - self.center_value;
        for entry in &mut self.entries {
            entry.lin_error += dv - vecmath::dot(&entry.subgradient, &shift);
        }
        self.center.copy_from_slice(new_center);
        self.center_value = new_center_value;
        Ok(())
    }

    /// Cutting-plane model of `phi(center + d) - phi(center)`:
    /// `max_i (g_i^T d - alpha_i)`, a lower approximation by convexity.
    pub fn model_value(&self, d: &[f64]) -> Result<f64> {
        if self.entries.is_empty() {
            return Err(Error::contract("model_value on an empty bundle"));
        }
        if d.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: d.len(),
            });
        }
        Ok(self
            .entries
            .iter()
            .map(|e| vecmath::dot(&e.subgradient, d) - e.lin_error)
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Refreshes `last_active` for entries carrying master weight above
    /// `threshold` at the current iteration.
    pub fn mark_active(&mut self, weights: &[f64], threshold: f64) {
        let t = self.iteration;
        for (entry, &w) in self.entries.iter_mut().zip(weights) {
            if w > threshold {
                entry.last_active = t;
            }
        }
    }

    /// Removes entries whose weight has been zero for more than `window`
    /// iterations. The most recent entry always survives, and the bundle is
    /// never left empty.
    pub fn prune_unused(&mut self, window: usize) -> Result<()> {
        if window == 0 {
            return Err(Error::contract("prune window must be >= 1"));
        }
        let t = self.iteration;
        let cutoff = t.saturating_sub(window);
        let last = self.entries.len() - 1;
        let mut idx = 0;
        self.entries.retain(|entry| {
            let keep = idx == last || entry.last_active >= cutoff;
            idx += 1;
            keep
        });
        debug_assert!(!self.entries.is_empty());
        Ok(())
    }
}
