//! Numerical toolkit for relaxed energies of pairs `(u, v) ∈ BV × L^p`.
//!
//! The relaxed energy of `∫ f(x, u, v, ∇u)` is assembled from a bulk term, a
//! jump term given by a cell problem on the rotated unit cube, and a Cantor
//! term driven by the recession function of `f`. The crate provides:
//!
//! * [`density`]: integrands, recession functions, hypothesis probes, Yosida transform;
//! * [`envelope`]: convex-quasiconvex envelopes by discrete cell minimisation;
//! * [`surface`]: the jump densities `K_p`, `K_∞`, `K_r`;
//! * [`bv`]: structured BV fields with exact derivative decomposition;
//! * [`energy`]: relaxed energy assembly, recovery sequences and sandwich reports;
//! * [`cli`]: the configuration-driven batch runner behind the `relaxbv` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bv;
pub mod cell;
pub mod cli;
pub mod config;
pub mod density;
pub mod energy;
pub mod envelope;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod optim;
pub mod seed;
pub mod surface;

pub use error::{Error, Result};
