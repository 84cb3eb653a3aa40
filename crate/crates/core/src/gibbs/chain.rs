//! Metropolis chain on trajectories for the annealed measure `∝ e^{-βH_n}`
//! with `±1` charges integrated out: a trajectory has weight
//! `e^{βn} Π_z W(l_n(z), β)` relative to the free walk.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::charge::{rademacher_weight_table, ChargeDistribution, ChargeSequence, WeightTable};
use crate::energy::{hamiltonian, HamiltonianMethod};
use crate::error::{Error, Result};
use crate::lattice::{LocalTimeField, Move, Site, Trajectory};
use crate::stats::log_sum_exp;

/// Largest dimension the chain supports.
pub const MAX_DIM: usize = 8;
/// Steps between cache audits.
pub const AUDIT_EVERY: u64 = 10_000;
/// Probability of a suffix-regrowth proposal.
pub const SUFFIX_PROB: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Number of monomers.
    pub n: usize,
    pub d: usize,
    pub beta: f64,
    /// Exponent `s` in `β_eff = β n^{-s}`.
    pub scaling: f64,
}

impl GibbsConfig {
    pub fn new(n: usize, d: usize, beta: f64) -> Self {
        GibbsConfig {
            n,
            d,
            beta,
            scaling: 0.4,
        }
    }

    pub fn beta_eff(&self) -> f64 {
        self.beta * (self.n as f64).powf(-self.scaling)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least 2 monomers"));
        }
        if self.d == 0 || self.d > MAX_DIM {
            return Err(Error::invalid("d", format!("need 1 <= d <= {MAX_DIM}")));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `Σ_z log W(l_n(z), β)`.
pub fn log_weight(field: &LocalTimeField, table: &WeightTable) -> Result<f64> {
    field.counts().map(|l| table.try_log_weight(l as usize)).sum()
}

#[derive(Debug, Clone)]
pub struct GibbsChainState {
    n: usize,
    d: usize,
    steps: Vec<Move>,
    pos: Vec<i32>,
    field: LocalTimeField,
    table: WeightTable,
    log_w: f64,
    /// `Σ_z E_β[q_z²]`.
    sq_charge: f64,
    suffix: Geometric,
    pub proposed: u64,
    pub accepted: u64,
    pub audits: u64,
}

impl GibbsChainState {
    /// Chain started from the given trajectory.
    pub fn from_trajectory(traj: &Trajectory, beta_eff: f64) -> Result<Self> {
        let n = traj.len();
        let d = traj.dim();
        GibbsConfig::new(n, d, beta_eff).validate()?;
        if traj.start().coords.iter().any(|&c| c != 0) {
            return Err(Error::invalid("trajectory", "must start at the origin"));
        }
        let mean = (n as f64 / 8.0).max(1.0);
        let mut state = GibbsChainState {
            n,
            d,
            steps: traj.steps().to_vec(),
            pos: traj.positions().flatten().copied().collect(),
            field: LocalTimeField::with_bound(d, n as u64),
            table: rademacher_weight_table(8, beta_eff)?,
            log_w: 0.0,
            sq_charge: 0.0,
            suffix: Geometric::new(1.0 / mean).expect("p in (0, 1]"),
            proposed: 0,
            accepted: 0,
            audits: 0,
        };
        for k in 0..n {
            state.add(k);
        }
        Ok(state)
    }

    /// Chain started from a free walk.
    pub fn from_free_walk<R: Rng + ?Sized>(n: usize, d: usize, beta_eff: f64, rng: &mut R) -> Result<Self> {
        Self::from_trajectory(&crate::lattice::sample_walk(n, d, rng)?, beta_eff)
    }

    /// Chain started from the walk that never leaves the origin.
    pub fn at_origin(n: usize, d: usize, beta_eff: f64) -> Result<Self> {
        let traj = Trajectory::from_steps(Site::origin(d), vec![Move::STAY; n.saturating_sub(1)])?;
        Self::from_trajectory(&traj, beta_eff)
    }

    pub fn beta_eff(&self) -> f64 {
        self.table.beta()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> &[Move] {
        &self.steps
    }

    pub fn field(&self) -> &LocalTimeField {
        &self.field
    }

    /// Cached `Σ_z log W(l_n(z), β_eff)`.
    pub fn log_weight(&self) -> f64 {
        self.log_w
    }

    /// `E[H_n | walk] = Σ_z (-∂_β log W)(l_n(z)) - n`.
    pub fn conditional_energy(&self) -> f64 {
        self.sq_charge - self.n as f64
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory::from_steps(Site::origin(self.d), self.steps.clone()).expect("valid steps")
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            return 1.0;
        }
        self.accepted as f64 / self.proposed as f64
    }

    fn coords(&self, k: usize) -> [i32; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        c[..self.d].copy_from_slice(&self.pos[k * self.d..(k + 1) * self.d]);
        c
    }

    fn add(&mut self, k: usize) {
        let c = self.coords(k);
        let c = &c[..self.d];
        let before = self.field.get_coords(c) as usize;
        self.field.add(c, 1);
        if before + 1 > self.table.l_max() {
            self.table.ensure((2 * (before + 1)).min(self.n));
        }
        self.log_w += self.table.log_weight(before + 1) - self.table.log_weight(before);
        self.sq_charge += self.table.neg_dlog_weight(before + 1) - self.table.neg_dlog_weight(before);
    }

    fn remove(&mut self, k: usize) {
        let c = self.coords(k);
        let before = self.field.remove_one(&c[..self.d]) as usize;
        self.log_w += self.table.log_weight(before - 1) - self.table.log_weight(before);
        self.sq_charge += self.table.neg_dlog_weight(before - 1) - self.table.neg_dlog_weight(before);
    }

    /// Replace increments `from..` by `new_steps` and rebuild the suffix.
    fn rewrite(&mut self, from: usize, new_steps: &[Move]) {
        for k in from + 1..self.n {
            self.remove(k);
        }
        self.steps[from..].copy_from_slice(new_steps);
        let d = self.d;
        for k in from + 1..self.n {
            let (head, tail) = self.pos.split_at_mut(k * d);
            tail[..d].copy_from_slice(&head[(k - 1) * d..]);
            self.steps[k - 1].apply(&mut tail[..d]);
            self.add(k);
        }
    }

    /// Recompute the field, `L` and the energy from the steps and compare.
    pub fn audit(&mut self, step: u64) -> Result<()> {
        self.audits += 1;
        let traj = self.trajectory();
        let mut field = LocalTimeField::with_bound(self.d, self.n as u64);
        for (k, p) in traj.positions().enumerate() {
            if p != &self.pos[k * self.d..(k + 1) * self.d] {
                return Err(Error::CacheAudit {
                    step,
                    detail: format!("cached position of monomer {k} is stale"),
                });
            }
            field.add(p, 1);
        }
        if field.range_size() != self.field.range_size()
            || field.iter().any(|(s, l)| self.field.get(&s) != l)
        {
            return Err(Error::CacheAudit {
                step,
                detail: "local-time field differs from the recomputed one".into(),
            });
        }
        let lw = log_weight(&field, &self.table)?;
        let sq: f64 = field.counts().map(|l| self.table.neg_dlog_weight(l as usize)).sum();
        let scale = 1.0 + field.counts().map(|l| self.table.log_weight(l as usize).abs()).sum::<f64>();
        if (lw - self.log_w).abs() > 1e-9 * scale {
            return Err(Error::CacheAudit {
                step,
                detail: format!("cached log-weight {} vs recomputed {lw}", self.log_w),
            });
        }
        self.log_w = lw;
        self.sq_charge = sq;
        Ok(())
    }
}

/// One Metropolis step. Returns whether the proposal was accepted.
pub fn mcmc_step<R: Rng + ?Sized>(state: &mut GibbsChainState, rng: &mut R) -> Result<bool> {
    let n = state.n;
    let (from, new_steps): (usize, Vec<Move>) = if rng.random::<f64>() < SUFFIX_PROB {
        let len = (1 + state.suffix.sample(rng) as usize).min(n - 1);
        let from = n - 1 - len;
        (from, (0..len).map(|_| Move::sample(state.d, rng)).collect())
    } else {
        let from = rng.random_range(0..n - 1);
        let mut s = state.steps[from..].to_vec();
        s[0] = Move::sample(state.d, rng);
        (from, s)
    };
    let old_steps = state.steps[from..].to_vec();
    let (old_lw, old_sq) = (state.log_w, state.sq_charge);
    state.rewrite(from, &new_steps);
    let delta = state.log_w - old_lw;
    state.proposed += 1;
    let accept = delta >= 0.0 || rng.random::<f64>() < delta.exp();
    if accept {
        state.accepted += 1;
    } else {
        state.rewrite(from, &old_steps);
        state.log_w = old_lw;
        state.sq_charge = old_sq;
    }
    if state.proposed % AUDIT_EVERY == 0 {
        state.audit(state.proposed)?;
    }
    Ok(accept)
}

/// Gibbs law of an `n`-monomer chain computed by brute force over walks
/// and sign patterns, with `H` from the pairwise double sum.
#[derive(Debug, Clone)]
pub struct ExactGibbs {
    pub n: usize,
    pub d: usize,
    pub beta_eff: f64,
    /// Probability of each increment sequence, indexed by its base-`(2d+1)` code.
    pub probs: Vec<f64>,
    /// `log E[e^{-βH_n}]`.
    pub log_z: f64,
    pub mean_energy: f64,
}

pub fn walk_code(steps: &[Move], d: usize) -> usize {
    steps.iter().rev().fold(0, |acc, m| acc * (2 * d + 1) + m.0 as usize)
}

pub fn exact_gibbs(n: usize, d: usize, beta_eff: f64) -> Result<ExactGibbs> {
    GibbsConfig::new(n, d, beta_eff).validate()?;
    let moves = 2 * d + 1;
    let walks = (moves as u128).pow(n as u32 - 1);
    if walks << n > 10_000_000 {
        return Err(Error::BudgetExceeded {
            states: walks << n,
            budget: 10_000_000,
        });
    }
    let mut log_terms = Vec::with_capacity(walks as usize);
    let mut energy_num = Vec::with_capacity(walks as usize);
    for code in 0..walks as usize {
        let mut rest = code;
        let steps: Vec<Move> = (0..n - 1)
            .map(|_| {
                let m = Move((rest % moves) as u8);
                rest /= moves;
                m
            })
            .collect();
        let traj = Trajectory::from_steps(Site::origin(d), steps)?;
        let mut w = Vec::with_capacity(1 << n);
        let mut hw = 0.0;
        for mask in 0u32..(1 << n) {
            let values = (0..n).map(|k| if mask >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let charges = ChargeSequence {
                dist: ChargeDistribution::Rademacher,
                values,
            };
            let h = hamiltonian(&traj, &charges, HamiltonianMethod::Direct)?;
            w.push(-beta_eff * h);
            hw += h * (-beta_eff * h).exp();
        }
        let lw = log_sum_exp(&w) - n as f64 * std::f64::consts::LN_2;
        log_terms.push(lw);
        energy_num.push(hw / (1u64 << n) as f64);
    }
    let total = log_sum_exp(&log_terms);
    let log_z = total - (walks as f64).ln();
    let probs: Vec<f64> = log_terms.iter().map(|l| (l - total).exp()).collect();
    let z = total.exp();
    let mean_energy = energy_num.iter().sum::<f64>() / z;
    Ok(ExactGibbs {
        n,
        d,
        beta_eff,
        probs,
        log_z,
        mean_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{local_times, sample_walk};
    use crate::rng::task_rng;

    #[test]
    fn log_weight_trivial_cases() {
        let mut rng = task_rng(101, 0);
        let t = sample_walk(40, 3, &mut rng).unwrap();
        let f = local_times(&t);
        assert_eq!(log_weight(&f, &rademacher_weight_table(40, 0.0).unwrap()).unwrap(), 0.0);
        let single = LocalTimeField::from_counts(3, [(Site::origin(3), 40)]).unwrap();
        let table = rademacher_weight_table(40, 0.3).unwrap();
        assert_eq!(log_weight(&single, &table).unwrap(), table.log_weight(40));
        let small = rademacher_weight_table(2, 0.3).unwrap();
        assert!(matches!(log_weight(&single, &small), Err(Error::TableTooSmall { .. })));
    }

    #[test]
    fn weight_integrates_charges_exactly() {
        // E_walk[e^{βn + L}] = E[e^{-βH}] over all 7² walks and 2³ signs.
        for beta in [0.0, 0.5, 1.3] {
            let exact = exact_gibbs(3, 3, beta).unwrap();
            let table = rademacher_weight_table(3, beta).unwrap();
            let mut terms = Vec::new();
            for code in 0..49usize {
                let steps = vec![Move((code % 7) as u8), Move((code / 7) as u8)];
                let t = Trajectory::from_steps(Site::origin(3), steps).unwrap();
                terms.push(3.0 * beta + log_weight(&local_times(&t), &table).unwrap());
            }
            let lhs = log_sum_exp(&terms) - 49f64.ln();
            assert!((lhs - exact.log_z).abs() < 1e-12, "β={beta}: {lhs} vs {}", exact.log_z);
        }
    }

    #[test]
    fn free_chain_accepts_everything() {
        let mut rng = task_rng(102, 0);
        let mut s = GibbsChainState::at_origin(50, 3, 0.0).unwrap();
        for _ in 0..2000 {
            assert!(mcmc_step(&mut s, &mut rng).unwrap());
        }
        s.audit(0).unwrap();
        assert_eq!(s.conditional_energy(), 0.0);
    }

    #[test]
    fn audits_stay_clean() {
        let mut rng = task_rng(103, 0);
        let mut s = GibbsChainState::at_origin(300, 3, 0.4).unwrap();
        for _ in 0..3 * AUDIT_EVERY {
            mcmc_step(&mut s, &mut rng).unwrap();
        }
        assert_eq!(s.audits, 3);
        assert!(s.acceptance_rate() > 0.0 && s.acceptance_rate() <= 1.0);
    }

    #[test]
    fn short_chain_law_matches_enumeration() {
        let exact = exact_gibbs(3, 3, 0.5).unwrap();
        let mut rng = task_rng(104, 0);
        let mut s = GibbsChainState::at_origin(3, 3, 0.5).unwrap();
        let mut counts = vec![0u64; 49];
        let steps = 300_000;
        for _ in 0..steps {
            mcmc_step(&mut s, &mut rng).unwrap();
            counts[walk_code(s.steps(), 3)] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&exact.probs)
            .map(|(&c, p)| (c as f64 / steps as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn same_seed_same_path() {
        let run = || {
            let mut rng = task_rng(105, 0);
            let mut s = GibbsChainState::at_origin(64, 3, 0.2).unwrap();
            (0..500).map(|_| mcmc_step(&mut s, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
