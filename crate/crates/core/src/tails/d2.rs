//! Moderate deviations in `d >= 4`: let the walk roam freely and use only the
//! sites visited exactly twice. With `±1` charges each such site contributes
//! `(η₁+η₂)² - 2 ∈ {-2, +2}` with equal probability, so given `m = |D_n(2)|`
//! the charge factor is an exact binomial tail.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{local_times, sample_walk};
use crate::stats::{ln_binomial_row, log_sum_exp, LogMean, Method, RunningStats, TailEstimate};

/// `γ₁ = γ₀²(1-γ₀)/4`.
pub fn gamma1(gamma0: f64) -> f64 {
    gamma0 * gamma0 * (1.0 - gamma0) / 4.0
}

/// `log P(Σ_{i<=m} Y_i >= t)` for i.i.d. `Y_i = ±2`.
pub fn log_pair_tail(m: usize, t: f64) -> f64 {
    // Σ Y = 4K - 2m with K ~ Bin(m, 1/2).
    let k_min = ((t + 2.0 * m as f64) / 4.0).ceil().max(0.0) as usize;
    if k_min > m {
        return f64::NEG_INFINITY;
    }
    let row = ln_binomial_row(m);
    let ln2m = m as f64 * std::f64::consts::LN_2;
    log_sum_exp(&row[k_min..]) - ln2m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct D2Estimate {
    pub estimate: TailEstimate,
    pub gamma1: f64,
    /// Mean of `|D_n(2)|/n` over the sampled walks.
    pub d2_fraction: f64,
    /// Fraction of walks with `|D_n(2)| > γ₁n`.
    pub qualifying_fraction: f64,
    /// `1/(2γ̂₁(E[η⁴]+1))` with `γ̂₁` the measured `|D_n(2)|/n`.
    pub envelope_constant: f64,
}

/// Estimate `P(|D_n(2)| > γ₁n, Σ_{D_n(2)} Y_z >= (1+δ)ξ√n)` for `±1` charges.
pub fn d2_moderate_strategy<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    xi: f64,
    gamma1: f64,
    delta: f64,
    walks: usize,
    rng: &mut R,
) -> Result<D2Estimate> {
    if d < 3 {
        return Err(Error::invalid("d", "the moderate strategy needs d >= 3"));
    }
    if walks == 0 || !(gamma1 > 0.0 && gamma1 < 1.0) || !(xi > 0.0) || !(delta >= 0.0) {
        return Err(Error::invalid("budget", "need walks > 0, γ₁ ∈ (0,1), ξ > 0, δ >= 0"));
    }
    let t = (1.0 + delta) * xi * (n as f64).sqrt();
    let mut mean = LogMean::new();
    let mut frac = RunningStats::new();
    let mut qualifying = 0;
    for _ in 0..walks {
        let walk = sample_walk(n, d, rng)?;
        let m = local_times(&walk).counts().filter(|&c| c == 2).count();
        frac.push(m as f64 / n as f64);
        if (m as f64) > gamma1 * n as f64 {
            qualifying += 1;
            mean.push(log_pair_tail(m, t));
        } else {
            mean.push(f64::NEG_INFINITY);
        }
    }
    if qualifying == 0 {
        return Err(Error::NoQualifyingWalks { walks });
    }
    let measured = frac.mean();
    Ok(D2Estimate {
        estimate: TailEstimate::from_log(mean.log_mean(), mean.rel_stderr(), walks as u64, Method::D2Moderate),
        gamma1,
        d2_fraction: measured,
        qualifying_fraction: qualifying as f64 / walks as f64,
        envelope_constant: 1.0 / (2.0 * measured * 2.0),
    })
}
