//! Charge laws, local charges, the normalised squared charge sums `ζ_z` and
//! the exact charge-integrated weight for ±1 charges.

use rand::Rng;
use rand_distr::StandardNormal;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lattice::{KeyCodec, LocalTimeField, Site, Trajectory};
use crate::stats::{ln_binomial_row, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeDistribution {
    /// `±1` with probability ½ each.
    Rademacher,
    StandardGaussian,
    /// Uniform on `[-√3, √3]`, which has unit variance.
    CenteredUniform,
}

/// `(E η, E η², E η⁴, χ₁ = E η⁴ + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub second: f64,
    pub fourth: f64,
    pub chi1: f64,
}

impl ChargeDistribution {
    pub fn moments(self) -> Moments {
        let fourth = match self {
            ChargeDistribution::Rademacher => 1.0,
            ChargeDistribution::StandardGaussian => 3.0,
            ChargeDistribution::CenteredUniform => 9.0 / 5.0,
        };
        Moments {
            mean: 0.0,
            second: 1.0,
            fourth,
            chi1: fourth + 1.0,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ChargeDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ChargeDistribution::StandardGaussian => rng.sample(StandardNormal),
            ChargeDistribution::CenteredUniform => {
                let s = 3f64.sqrt();
                rng.random_range(-s..s)
            }
        }
    }
}

pub fn moment_summary(dist: ChargeDistribution) -> Moments {
    dist.moments()
}

/// The charges `η(0), …, η(n-1)` carried by the monomers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeSequence {
    pub dist: ChargeDistribution,
    pub values: Vec<f64>,
}

impl ChargeSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rademacher charges as integers.
    pub fn signs(&self) -> Option<Vec<i64>> {
        (self.dist == ChargeDistribution::Rademacher)
            .then(|| self.values.iter().map(|&v| v as i64).collect())
    }
}

pub fn sample_charges<R: Rng + ?Sized>(n: usize, dist: ChargeDistribution, rng: &mut R) -> ChargeSequence {
    ChargeSequence {
        dist,
        values: (0..n).map(|_| dist.sample(rng)).collect(),
    }
}

/// `q̌_n(z) = Σ_k η(k) 1{S(k) = z}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCharges {
    pub sums: HashMap<Site, f64>,
}

impl LocalCharges {
    pub fn get(&self, site: &Site) -> f64 {
        self.sums.get(site).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.sums.values().sum()
    }
}

pub(crate) fn check_lengths(traj: &Trajectory, charges: &ChargeSequence) -> Result<()> {
    if traj.len() != charges.len() {
        return Err(Error::LengthMismatch {
            walk: traj.len(),
            charges: charges.len(),
        });
    }
    Ok(())
}

/// Per-site `(l_n(z), q̌_n(z))` keyed by packed coordinates. The hot path of
/// the energy computations.
pub(crate) fn site_sums(traj: &Trajectory, charges: &[f64]) -> Vec<(u32, f64)> {
    let codec = KeyCodec::for_bound(traj.dim(), traj.max_abs_coord());
    match codec {
        Some(codec) => {
            let mut map: FxHashMap<u64, (u32, f64)> = FxHashMap::default();
            for (p, &eta) in traj.positions().zip(charges) {
                let e = map.entry(codec.encode(p)).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += eta;
            }
            map.into_values().collect()
        }
        None => {
            let mut map: FxHashMap<Box<[i32]>, (u32, f64)> = FxHashMap::default();
            for (p, &eta) in traj.positions().zip(charges) {
                let e = map.entry(p.into()).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += eta;
            }
            map.into_values().collect()
        }
    }
}

pub fn local_charges(traj: &Trajectory, charges: &ChargeSequence) -> Result<LocalCharges> {
    check_lengths(traj, charges)?;
    let mut sums: HashMap<Site, f64> = HashMap::new();
    for (k, &eta) in charges.values.iter().enumerate() {
        *sums.entry(traj.site(k)).or_insert(0.0) += eta;
    }
    Ok(LocalCharges { sums })
}

/// `ζ = (l^{-1/2} Σ η)²` for the charges deposited on one site.
pub fn zeta_of(charges: &[f64]) -> Option<f64> {
    if charges.is_empty() {
        return None;
    }
    let q: f64 = charges.iter().sum();
    Some(q * q / charges.len() as f64)
}

/// `ζ_z(l_n(z))` for every visited site, from charges grouped by site.
/// Unvisited sites have no `ζ` and are absent from the result.
pub fn zeta_field(
    field: &LocalTimeField,
    grouped: &HashMap<Site, Vec<f64>>,
) -> Result<HashMap<Site, f64>> {
    let mut out = HashMap::with_capacity(grouped.len());
    for (site, charges) in grouped {
        let l = field.get(site) as usize;
        if l == 0 && !charges.is_empty() {
            return Err(Error::invalid("zeta_field", format!("charges attached to unvisited site {site}")));
        }
        if l != charges.len() {
            return Err(Error::invalid(
                "zeta_field",
                format!("site {site} has local time {l} but {} charges", charges.len()),
            ));
        }
        if let Some(z) = zeta_of(charges) {
            out.insert(site.clone(), z);
        }
    }
    if out.len() != field.range_size() {
        return Err(Error::invalid("zeta_field", "some visited sites carry no charges"));
    }
    Ok(out)
}

/// Group the monomer charges by the site they sit on.
pub fn group_charges(traj: &Trajectory, charges: &ChargeSequence) -> Result<HashMap<Site, Vec<f64>>> {
    check_lengths(traj, charges)?;
    let mut grouped: HashMap<Site, Vec<f64>> = HashMap::new();
    for (k, &eta) in charges.values.iter().enumerate() {
        grouped.entry(traj.site(k)).or_default().push(eta);
    }
    Ok(grouped)
}

/// Local times up to which `W(l, β)` is an exact binomial sum. Above it the
/// Gaussian form `(1 + 2βl)^{-1/2}` is used.
pub const EXACT_WEIGHT_LIMIT: usize = 10_000;

/// `W(l, β) = E[exp(-β S_l²)]` for a sum `S_l` of `l` Rademacher charges,
/// together with `-∂_β log W(l, β)`, for `l = 0..=l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    beta: f64,
    log_w: Vec<f64>,
    neg_dlog_w: Vec<f64>,
}

impl WeightTable {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn l_max(&self) -> usize {
        self.log_w.len() - 1
    }

    #[inline]
    pub fn log_weight(&self, l: usize) -> f64 {
        self.log_w[l]
    }

    pub fn weight(&self, l: usize) -> f64 {
        self.log_w[l].exp()
    }

    /// `-∂_β log W(l, β) = E_β[S_l²]` under the charge law tilted by `e^{-βS²}`.
    #[inline]
    pub fn neg_dlog_weight(&self, l: usize) -> f64 {
        self.neg_dlog_w[l]
    }

    pub fn try_log_weight(&self, l: usize) -> Result<f64> {
        self.log_w.get(l).copied().ok_or(Error::TableTooSmall {
            l_max: self.l_max(),
            needed: l,
        })
    }

    /// Extend the table so it covers `l_max`.
    pub fn ensure(&mut self, l_max: usize) {
        for l in self.log_w.len()..=l_max {
            let (lw, d) = weight_entry(l, self.beta);
            self.log_w.push(lw);
            self.neg_dlog_w.push(d);
        }
    }
}

fn weight_entry(l: usize, beta: f64) -> (f64, f64) {
    if l == 0 {
        return (0.0, 0.0);
    }
    if beta == 0.0 {
        return (0.0, l as f64);
    }
    if l > EXACT_WEIGHT_LIMIT {
        let x = 1.0 + 2.0 * beta * l as f64;
        return (-0.5 * x.ln(), l as f64 / x);
    }
    let ln_c = ln_binomial_row(l);
    let ln2 = std::f64::consts::LN_2;
    let terms: Vec<(f64, f64)> = (0..=l)
        .map(|k| {
            let s = (2 * k) as f64 - l as f64;
            (ln_c[k] - l as f64 * ln2 - beta * s * s, s * s)
        })
        .collect();
    let logs: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let lw = log_sum_exp(&logs);
    let mean_sq = terms.iter().map(|&(lt, s2)| (lt - lw).exp() * s2).sum();
    (lw, mean_sq)
}

pub fn rademacher_weight_table(l_max: usize, beta: f64) -> Result<WeightTable> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::invalid("beta", format!("must be finite and >= 0, got {beta}")));
    }
    let mut table = WeightTable {
        beta,
        log_w: Vec::with_capacity(l_max + 1),
        neg_dlog_w: Vec::with_capacity(l_max + 1),
    };
    table.ensure(l_max);
    Ok(table)
}
