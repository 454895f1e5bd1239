//! Global precision budget for exact sign determination.
//!
//! Radical-scalar comparisons refine rational interval enclosures with
//! doubling precision until the sign is decided. A nonzero canonical
//! [`crate::RadScalar`] is never numerically zero, so refinement terminates
//! for honest inputs; the budget bounds the work and turns pathological
//! cases into a reported error instead of a silent rounding.

use std::sync::atomic::{AtomicU32, Ordering};

pub const DEFAULT_BITS: u32 = 256;

static BUDGET_BITS: AtomicU32 = AtomicU32::new(DEFAULT_BITS);

/// Set the global precision budget in bits (clamped to at least 64).
pub fn set_budget_bits(bits: u32) {
    BUDGET_BITS.store(bits.max(64), Ordering::Relaxed);
}

pub fn budget_bits() -> u32 {
    BUDGET_BITS.load(Ordering::Relaxed)
}
