//! Monte Carlo laboratory for a randomly charged polymer: a lazy random walk
//! on `Z^d` carrying i.i.d. centred charges, with energy
//! `H_n = Σ_{i≠j} η(i)η(j) 1{S(i) = S(j)}`.
//!
//! The crate samples walks and charges, computes energies exactly, estimates
//! lower-tail probabilities `P(H_n <= -x_n)` with naive, strategy-based and
//! tilting-based estimators, and samples the annealed Gibbs measure
//! `∝ e^{-βH_n}` for `±1` charges.

pub mod charge;
pub mod energy;
pub mod error;
pub mod gibbs;
pub mod green;
pub mod lattice;
pub mod rng;
pub mod stats;
pub mod tails;

pub use error::{Error, Result};
