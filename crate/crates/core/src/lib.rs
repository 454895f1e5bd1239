//! Exact desk-scale laboratory for dyadic martingale analysis.
//!
//! Everything geometric (interval endpoints, measures, level sets) is kept in
//! arbitrary-precision rational arithmetic; function values live in the field
//! of rational linear combinations of square roots ([`RadScalar`]), so
//! integrals, norms and comparisons of the functions built here are exact.
//! Floating point enters only in optimizer inner loops and in final
//! renderings, and is always derived from an exact quantity.
//!
//! The main layers, bottom up:
//!
//! * [`rational`], [`radical`] — scalar arithmetic (exact sign determination
//!   with an adaptive precision budget).
//! * [`geometry`] — half-open intervals, simple sets, piecewise-constant
//!   functions with exact integration and level-set measures.
//! * [`transform`] — piecewise-affine measure-preserving self-maps of `[0,1)`:
//!   stretch maps, `x ↦ {nx}`, block-periodization maps, composition,
//!   pullback, and measure-preservation checks.
//! * [`system`] — filtrations, split trees, classical/generalized Haar and
//!   Rademacher systems, martingale-difference verification, expansions.
//! * [`operators`] — maximal and square functions, monotone polynomial
//!   families, the maximal-partial-sum ratio, good-lambda scans.
//! * [`kappa`] — exact and heuristic maximization of the partial-sum ratio,
//!   permutation search for lower-bound certificates, growth-model fits.
//! * [`approx`] — the inductive construction of non-overlapping
//!   polynomial approximants to a transformed martingale difference.
//! * [`convergence`] — Weyl-multiplier diagnostics and dyadic-block
//!   partial-sum simulations.

pub mod approx;
pub mod convergence;
pub mod eigen;
pub mod error;
pub mod geometry;
pub mod kappa;
pub mod operators;
pub mod precision;
pub mod radical;
pub mod rational;
pub mod refine;
pub mod system;
pub mod transform;

pub use error::{Error, Result};
pub use geometry::{Interval, Pcf, SimpleSet};
pub use radical::RadScalar;
pub use rational::Rational;
pub use system::{Filtration, NonOverlapFamily, OrthoSystem, SplitTree, SystemKind};
pub use transform::{Partition, PwAffineMap};
