//! Exponential-tilting upper bound
//! `P(X̌_n <= -x) <= e^{-λx/y} E₀[exp Σ_z Γ̂(λ l_n(z)/y)]`
//! with the envelope `Γ̂(u) = u` for `u >= 1` and `χ₁u²` for `u < 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::charge::ChargeDistribution;
use crate::error::{Error, Result};
use crate::lattice::{local_times, sample_walk};
use crate::stats::LogMean;

/// `Γ̂(u)`.
pub fn envelope(u: f64, chi1: f64) -> f64 {
    if u >= 1.0 {
        u
    } else {
        chi1 * u * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedBound {
    pub lambda: f64,
    pub y: f64,
    /// Natural log of the bound before clamping at 1.
    pub log_bound: f64,
    /// `min(1, exp(log_bound))`.
    pub bound: f64,
    /// Relative standard error of the Monte Carlo expectation.
    pub rel_stderr: f64,
    pub samples: u64,
}

/// Level histograms `h[k] = |{z : l_n(z) = k}|` of independent free walks.
pub fn walk_histograms<R: Rng + ?Sized>(n: usize, d: usize, walks: usize, rng: &mut R) -> Result<Vec<Vec<u64>>> {
    (0..walks).map(|_| Ok(local_times(&sample_walk(n, d, rng)?).level_histogram())).collect()
}

/// Evaluate the bound at one `λ` on precomputed walk histograms.
pub fn tilted_bound_from_histograms(
    histograms: &[Vec<u64>],
    x: f64,
    lambda: f64,
    y: f64,
    chi1: f64,
) -> Result<TiltedBound> {
    if !(lambda > 0.0 && y > 0.0) {
        return Err(Error::invalid("lambda", format!("need λ > 0 and y > 0, got ({lambda}, {y})")));
    }
    if histograms.is_empty() {
        return Err(Error::invalid("walk_samples", "must be positive"));
    }
    let mut mean = LogMean::new();
    for (i, h) in histograms.iter().enumerate() {
        let e: f64 = h
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c as f64 * envelope(lambda * k as f64 / y, chi1))
            .sum();
        if !e.is_finite() {
            return Err(Error::Overflow { sample: i, exponent: e });
        }
        mean.push(e);
    }
    let log_bound = -lambda * x / y + mean.log_mean();
    Ok(TiltedBound {
        lambda,
        y,
        log_bound,
        bound: log_bound.min(0.0).exp(),
        rel_stderr: mean.rel_stderr(),
        samples: histograms.len() as u64,
    })
}

/// Tilting upper bound on `P(X̌_n <= -x)` for `±1` charges.
pub fn tilted_upper_bound<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    x: f64,
    lambda: f64,
    y: f64,
    walk_samples: usize,
    rng: &mut R,
) -> Result<TiltedBound> {
    if !(lambda > 0.0 && y > 0.0) {
        return Err(Error::invalid("lambda", format!("need λ > 0 and y > 0, got ({lambda}, {y})")));
    }
    let hist = walk_histograms(n, d, walk_samples, rng)?;
    tilted_bound_from_histograms(&hist, x, lambda, y, ChargeDistribution::Rademacher.moments().chi1)
}

/// Smallest bound over a grid of `λ`, all evaluated on the same walks.
pub fn tilted_upper_bound_best<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    x: f64,
    lambdas: &[f64],
    y: f64,
    walk_samples: usize,
    rng: &mut R,
) -> Result<TiltedBound> {
    let hist = walk_histograms(n, d, walk_samples, rng)?;
    let chi1 = ChargeDistribution::Rademacher.moments().chi1;
    let mut best: Option<TiltedBound> = None;
    for &l in lambdas {
        let b = tilted_bound_from_histograms(&hist, x, l, y, chi1)?;
        if best.map_or(true, |o| b.log_bound < o.log_bound) {
            best = Some(b);
        }
    }
    best.ok_or_else(|| Error::invalid("lambdas", "grid is empty"))
}
