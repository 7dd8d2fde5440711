//! Slot accounting for full-rank and low-rank training.
//!
//! A slot is one scalar of storage. Full-rank training keeps the weights, the
//! optimizer accumulators over the weights, and one transient gradient
//! buffer. Low-rank training keeps the weights, the factors `U`, `V`, the
//! optimizer accumulators over the factors, and the same gradient buffer.
//! Activations and workspace are not modelled.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::lowrank::check_rank;
use crate::optim::{state_slot_count, OptimizerKind};

/// Shapes `(m, n)` of the weight matrices of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDims(Vec<(usize, usize)>);

impl LayerDims {
    pub fn new(shapes: Vec<(usize, usize)>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(invalid("at least one layer is required"));
        }
        if let Some(&(m, n)) = shapes.iter().find(|&&(m, n)| m == 0 || n == 0) {
            return Err(invalid(format!(
                "layer dimensions must be positive, got {m}x{n}"
            )));
        }
        Ok(Self(shapes))
    }

    pub fn square(d: usize) -> Result<Self> {
        Self::new(vec![(d, d)])
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.0
    }

    /// `Σ m·n`.
    pub fn parameter_count(&self) -> usize {
        self.0.iter().map(|&(m, n)| m * n).sum()
    }

    /// `Σ (m + n)`, the factor slots per unit of rank.
    pub fn factor_count_per_rank(&self) -> usize {
        self.0.iter().map(|&(m, n)| m + n).sum()
    }

    /// Largest rank every layer admits.
    pub fn max_rank(&self) -> usize {
        self.0
            .iter()
            .map(|&(m, n)| m.min(n))
            .min()
            .expect("non-empty")
    }
}

/// Accounting options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryOptions {
    /// Count the transient full-size gradient buffer.
    pub include_gradient: bool,
    /// 8 for `f64`, 4 for `f32`.
    pub bytes_per_slot: usize,
}

impl Default for MemoryOptions {
    fn default() -> Self {
        Self {
            include_gradient: true,
            bytes_per_slot: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryReport {
    pub weight_slots: usize,
    pub optimizer_state_slots: usize,
    pub factor_slots: usize,
    pub factor_state_slots: usize,
    pub transient_gradient_slots: usize,
    pub total_slots: usize,
    pub total_bytes: usize,
}

impl MemoryReport {
    fn assemble(
        weight: usize,
        optimizer_state: usize,
        factor: usize,
        factor_state: usize,
        gradient: usize,
        opts: MemoryOptions,
    ) -> Self {
        let total = weight + optimizer_state + factor + factor_state + gradient;
        Self {
            weight_slots: weight,
            optimizer_state_slots: optimizer_state,
            factor_slots: factor,
            factor_state_slots: factor_state,
            transient_gradient_slots: gradient,
            total_slots: total,
            total_bytes: total * opts.bytes_per_slot,
        }
    }
}

pub fn full_rank_memory(dims: &LayerDims, kind: OptimizerKind) -> MemoryReport {
    full_rank_memory_with(dims, kind, MemoryOptions::default())
}

pub fn full_rank_memory_with(
    dims: &LayerDims,
    kind: OptimizerKind,
    opts: MemoryOptions,
) -> MemoryReport {
    let params = dims.parameter_count();
    let state = dims
        .shapes()
        .iter()
        .map(|&(m, n)| state_slot_count(kind, m, n))
        .sum();
    let gradient = if opts.include_gradient { params } else { 0 };
    MemoryReport::assemble(params, state, 0, 0, gradient, opts)
}

pub fn low_rank_memory(dims: &LayerDims, kind: OptimizerKind, rank: usize) -> Result<MemoryReport> {
    low_rank_memory_with(dims, kind, rank, MemoryOptions::default())
}

pub fn low_rank_memory_with(
    dims: &LayerDims,
    kind: OptimizerKind,
    rank: usize,
    opts: MemoryOptions,
) -> Result<MemoryReport> {
    for &(m, n) in dims.shapes() {
        check_rank(m, n, rank)?;
    }
    let params = dims.parameter_count();
    let factors = rank * dims.factor_count_per_rank();
    let factor_state = kind.state_multiplier() * factors;
    let gradient = if opts.include_gradient { params } else { 0 };
    Ok(MemoryReport::assemble(
        params,
        0,
        factors,
        factor_state,
        gradient,
        opts,
    ))
}

/// Growth of the low-rank total per unit of rank: `(1 + k)·Σ(m + n)`.
pub fn low_rank_slope(dims: &LayerDims, kind: OptimizerKind) -> usize {
    (1 + kind.state_multiplier()) * dims.factor_count_per_rank()
}

/// Largest rank whose low-rank total does not exceed the full-rank total,
/// `⌊k·Σmn / ((1 + k)·Σ(m + n))⌋` with `k` the optimizer's state multiplier.
///
/// The result can be zero (no rank saves memory) and may exceed the largest
/// rank the layers admit.
pub fn crossover_rank(dims: &LayerDims, kind: OptimizerKind) -> Result<usize> {
    let k = kind.state_multiplier();
    if k == 0 {
        return Err(invalid(
            "gradient descent keeps no optimizer state; low rank never saves memory",
        ));
    }
    Ok(k * dims.parameter_count() / ((1 + k) * dims.factor_count_per_rank()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_multipliers() {
        let d = LayerDims::square(10).unwrap();
        let adam = full_rank_memory(&d, OptimizerKind::Adam);
        assert_eq!(adam.weight_slots, 100);
        assert_eq!(adam.optimizer_state_slots, 200);
        assert_eq!(adam.total_slots, 400);
        assert_eq!(adam.total_bytes, 3200);
        assert_eq!(
            full_rank_memory(&d, OptimizerKind::GradientDescent).optimizer_state_slots,
            0
        );
        let dims = LayerDims::new(vec![(3, 7), (5, 2)]).unwrap();
        let mom = full_rank_memory(&dims, OptimizerKind::Momentum);
        assert_eq!(mom.optimizer_state_slots, mom.weight_slots);
    }

    #[test]
    fn low_rank_fields() {
        let dims = LayerDims::new(vec![(10, 6), (4, 8)]).unwrap();
        let rep = low_rank_memory(&dims, OptimizerKind::Adam, 3).unwrap();
        assert_eq!(rep.weight_slots, 92);
        assert_eq!(rep.factor_slots, 3 * 28);
        assert_eq!(rep.factor_state_slots, 2 * 3 * 28);
        assert_eq!(rep.optimizer_state_slots, 0);
        assert_eq!(rep.transient_gradient_slots, 92);
        assert_eq!(
            rep.total_slots,
            rep.weight_slots
                + rep.factor_slots
                + rep.factor_state_slots
                + rep.transient_gradient_slots
        );
        assert!(low_rank_memory(&dims, OptimizerKind::Adam, 5).is_err());
        assert!(low_rank_memory(&dims, OptimizerKind::Adam, 0).is_err());
    }

    #[test]
    fn options_change_bytes_and_gradient() {
        let d = LayerDims::square(10).unwrap();
        let opts = MemoryOptions {
            include_gradient: false,
            bytes_per_slot: 4,
        };
        let rep = full_rank_memory_with(&d, OptimizerKind::Adam, opts);
        assert_eq!(rep.total_slots, 300);
        assert_eq!(rep.total_bytes, 1200);
        let lr = low_rank_memory_with(&d, OptimizerKind::Adam, 2, opts).unwrap();
        assert_eq!(lr.transient_gradient_slots, 0);
    }

    #[test]
    fn square_1000_crossovers() {
        let d = LayerDims::square(1000).unwrap();
        assert_eq!(crossover_rank(&d, OptimizerKind::Adam).unwrap(), 333);
        assert_eq!(crossover_rank(&d, OptimizerKind::Momentum).unwrap(), 250);
        assert!(crossover_rank(&d, OptimizerKind::GradientDescent).is_err());
        let full = full_rank_memory(&d, OptimizerKind::Adam).total_slots;
        assert!(
            low_rank_memory(&d, OptimizerKind::Adam, 332)
                .unwrap()
                .total_slots
                < full
        );
        assert!(
            low_rank_memory(&d, OptimizerKind::Adam, 334)
                .unwrap()
                .total_slots
                > full
        );
    }

    #[test]
    fn dims_validation() {
        assert!(LayerDims::new(vec![]).is_err());
        assert!(LayerDims::new(vec![(0, 3)]).is_err());
        assert_eq!(LayerDims::new(vec![(5, 9), (7, 3)]).unwrap().max_rank(), 3);
    }
}
