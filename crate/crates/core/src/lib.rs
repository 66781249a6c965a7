//! Counting integer solutions of congruence-constrained Diophantine systems
//!
//! ```text
//! ν₁(ϑq + p)^m < ψ(ν₂(q)^n),   (p, q) ≡ v (mod N),   1 ≤ ν₂(q)^n < T,
//! ```
//!
//! and checking, numerically, the asymptotic count
//! `N^{-d}·c_{ν₁}·c_{ν₂}·Σ_{1≤t<T} ψ(t)` together with the lattice-space
//! facts behind it: the Siegel mean-value formula, the variance bound and the
//! perturbation sandwich for the counting regions.

pub mod approx_fn;
pub mod counting;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod lattice_space;
pub mod norms;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
