//! The polymer energy `H_n = Σ_{i≠j} η(i)η(j) 1{S(i)=S(j)}` and its split
//! `H_n = X̌_n + Y_n` with `X̌_n = Σ_z (q̌_n(z)² - l_n(z))` and
//! `Y_n = Σ_k (1 - η(k)²)`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::charge::{check_lengths, site_sums, ChargeDistribution, ChargeSequence};
use crate::error::Result;
use crate::lattice::{Site, Trajectory};
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianMethod {
    /// Quadratic double sum over ordered pairs. Kept as an oracle.
    Direct,
    /// `Σ_z q̌_n(z)² - Σ_k η(k)²`, linear time.
    PerSite,
}

pub fn hamiltonian(traj: &Trajectory, charges: &ChargeSequence, method: HamiltonianMethod) -> Result<f64> {
    check_lengths(traj, charges)?;
    if let Some(signs) = charges.signs() {
        let h = match method {
            HamiltonianMethod::Direct => direct_int(traj, &signs),
            HamiltonianMethod::PerSite => per_site_int(traj, &signs),
        };
        return Ok(h as f64);
    }
    Ok(match method {
        HamiltonianMethod::Direct => direct_real(traj, &charges.values),
        HamiltonianMethod::PerSite => per_site_real(traj, &charges.values),
    })
}

fn direct_int(traj: &Trajectory, eta: &[i64]) -> i64 {
    let n = traj.len();
    let mut h = 0i64;
    for i in 0..n {
        let pi = traj.position(i);
        for j in i + 1..n {
            if traj.position(j) == pi {
                h += 2 * eta[i] * eta[j];
            }
        }
    }
    h
}

fn direct_real(traj: &Trajectory, eta: &[f64]) -> f64 {
    let n = traj.len();
    let mut h = CompensatedSum::new();
    for i in 0..n {
        let pi = traj.position(i);
        for j in i + 1..n {
            if traj.position(j) == pi {
                h.add(2.0 * eta[i] * eta[j]);
            }
        }
    }
    h.value()
}

fn per_site_int(traj: &Trajectory, eta: &[i64]) -> i64 {
    let as_real: Vec<f64> = eta.iter().map(|&e| e as f64).collect();
    // Local charges of ±1 are integers far below 2^53, so the f64 sums are exact.
    site_sums(traj, &as_real)
        .into_iter()
        .map(|(_, q)| {
            let q = q as i64;
            q * q
        })
        .sum::<i64>()
        - eta.len() as i64
}

fn per_site_real(traj: &Trajectory, eta: &[f64]) -> f64 {
    let mut h = CompensatedSum::new();
    for (_, q) in site_sums(traj, eta) {
        h.add(q * q);
    }
    for e in eta {
        h.add(-e * e);
    }
    h.value()
}

/// `X̌_n` alone, on the fast path. Equals `H_n` for `±1` charges.
pub fn x_check(traj: &Trajectory, eta: &[f64]) -> f64 {
    site_sums(traj, eta)
        .into_iter()
        .map(|(l, q)| q * q - l as f64)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub h: f64,
    pub x_check: f64,
    pub y: f64,
    /// `X̌_n(z) = q̌_n(z)² - l_n(z)` for every visited site.
    #[serde(skip)]
    pub per_site: HashMap<Site, f64>,
}

pub fn decompose(traj: &Trajectory, charges: &ChargeSequence) -> Result<EnergyBreakdown> {
    check_lengths(traj, charges)?;
    let mut per: HashMap<Site, (f64, f64)> = HashMap::new();
    for (k, &eta) in charges.values.iter().enumerate() {
        let e = per.entry(traj.site(k)).or_insert((0.0, 0.0));
        e.0 += 1.0;
        e.1 += eta;
    }
    let per_site: HashMap<Site, f64> = per.into_iter().map(|(s, (l, q))| (s, q * q - l)).collect();
    let mut x = CompensatedSum::new();
    for v in per_site.values() {
        x.add(*v);
    }
    let mut y = CompensatedSum::new();
    for e in &charges.values {
        y.add(1.0 - e * e);
    }
    let (x, y) = (x.value(), y.value());
    let y = if charges.dist == ChargeDistribution::Rademacher { 0.0 } else { y };
    Ok(EnergyBreakdown {
        h: x + y,
        x_check: x,
        y,
        per_site,
    })
}

/// `E[(q̌² - l)²]` for `l` charges and the bounds `2(l² - l) <= · <= χ₁ l²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteVariance {
    pub exact: f64,
    pub lower: f64,
    pub upper: f64,
}

pub fn site_variance_formula(l: u64, dist: ChargeDistribution) -> Result<SiteVariance> {
    if l == 0 {
        return Err(crate::Error::invalid("l", "site variance needs l >= 1"));
    }
    let m = dist.moments();
    let l = l as f64;
    Ok(SiteVariance {
        exact: l * (m.fourth - 1.0) + 2.0 * (l * l - l),
        lower: 2.0 * (l * l - l),
        upper: m.chi1 * l * l,
    })
}
