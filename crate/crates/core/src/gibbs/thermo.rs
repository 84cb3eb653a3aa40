//! Chain averages: the Rao-Blackwellised mean energy, `log Z` by
//! thermodynamic integration, and the phase-scan observables.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::chain::{mcmc_step, GibbsChainState, GibbsConfig};
use crate::error::{Error, Result};
use crate::rng::{task_rng, SimRng};
use crate::stats::{batch_means_stderr, RunningStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainBudget {
    pub chains: usize,
    /// Metropolis steps per chain, burn-in included.
    pub steps: u64,
    /// Record observables every `thin` steps.
    pub thin: u64,
}

impl Default for ChainBudget {
    fn default() -> Self {
        ChainBudget {
            chains: 4,
            steps: 20_000,
            thin: 10,
        }
    }
}

/// Fraction of each chain discarded as burn-in.
pub const BURN_IN: f64 = 0.2;

impl ChainBudget {
    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.steps < 10 || self.thin == 0 {
            return Err(Error::invalid("budget", "need chains > 0, steps >= 10, thin > 0"));
        }
        Ok(())
    }
}

/// Per-sample observables of one chain.
#[derive(Debug, Clone, Default)]
struct ChainTrace {
    energy: Vec<f64>,
    max_local: Vec<u32>,
    histograms: Vec<Vec<u64>>,
    proposed: u64,
    accepted: u64,
    audits: u64,
}

fn run_chain(cfg: &GibbsConfig, budget: &ChainBudget, seed: u64, keep_levels: bool) -> Result<ChainTrace> {
    let mut rng: SimRng = task_rng(seed, 0);
    let mut state = GibbsChainState::from_free_walk(cfg.n, cfg.d, cfg.beta_eff(), &mut rng)?;
    let burn = (budget.steps as f64 * BURN_IN) as u64;
    let mut trace = ChainTrace::default();
    for t in 1..=budget.steps {
        mcmc_step(&mut state, &mut rng)?;
        if t > burn && (t - burn) % budget.thin == 0 {
            trace.energy.push(state.conditional_energy());
            if keep_levels {
                let h = state.field().level_histogram();
                trace.max_local.push((h.len() - 1) as u32);
                trace.histograms.push(h);
            }
        }
    }
    state.audit(budget.steps)?;
    trace.proposed = state.proposed;
    trace.accepted = state.accepted;
    trace.audits = state.audits;
    Ok(trace)
}

fn run_chains<R: Rng + ?Sized>(
    cfg: &GibbsConfig,
    budget: &ChainBudget,
    keep_levels: bool,
    rng: &mut R,
) -> Result<Vec<ChainTrace>> {
    cfg.validate()?;
    budget.validate()?;
    let seeds: Vec<u64> = (0..budget.chains).map(|_| rng.random()).collect();
    seeds.par_iter().map(|&s| run_chain(cfg, budget, s, keep_levels)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub beta_eff: f64,
    pub mean: f64,
    pub stderr: f64,
    pub acceptance: f64,
    /// First-half and second-half means agree within 4 combined stderr.
    pub equilibrated: bool,
    pub samples: u64,
}

fn summarize_energy(beta_eff: f64, traces: &[ChainTrace]) -> EnergyEstimate {
    let mut all = RunningStats::new();
    let mut halves = [RunningStats::new(), RunningStats::new()];
    let mut var = 0.0;
    let mut var_halves = [0.0; 2];
    for t in traces {
        let k = t.energy.len();
        for (i, &e) in t.energy.iter().enumerate() {
            all.push(e);
            halves[(2 * i >= k) as usize].push(e);
        }
        var += batch_means_stderr(&t.energy, 10).powi(2);
        var_halves[0] += batch_means_stderr(&t.energy[..k / 2], 5).powi(2);
        var_halves[1] += batch_means_stderr(&t.energy[k / 2..], 5).powi(2);
    }
    let c = traces.len() as f64;
    let gap = (halves[0].mean() - halves[1].mean()).abs();
    let gap_se = ((var_halves[0] + var_halves[1]) / (c * c)).sqrt();
    let proposed: u64 = traces.iter().map(|t| t.proposed).sum();
    let accepted: u64 = traces.iter().map(|t| t.accepted).sum();
    EnergyEstimate {
        beta_eff,
        mean: all.mean(),
        stderr: (var / (c * c)).sqrt(),
        acceptance: accepted as f64 / proposed.max(1) as f64,
        equilibrated: gap <= 4.0 * gap_se + 1e-12,
        samples: all.count(),
    }
}

/// Chain average of `E[H_n | walk]` under the annealed Gibbs measure.
pub fn mean_energy<R: Rng + ?Sized>(cfg: &GibbsConfig, budget: &ChainBudget, rng: &mut R) -> Result<EnergyEstimate> {
    let traces = run_chains(cfg, budget, false, rng)?;
    Ok(summarize_energy(cfg.beta_eff(), &traces))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPartition {
    pub n: usize,
    /// Effective inverse temperatures of the requested grid.
    pub beta_eff: Vec<f64>,
    pub log_z: Vec<f64>,
    /// Monte Carlo standard error propagated through the quadrature.
    pub stderr: Vec<f64>,
    /// Every energy evaluation used, sorted by `β_eff`.
    pub evaluations: Vec<EnergyEstimate>,
}

struct Integrator<'a, R: Rng + ?Sized> {
    cfg: GibbsConfig,
    budget: &'a ChainBudget,
    rng: &'a mut R,
    tol: f64,
    max_depth: u32,
    cache: BTreeMap<u64, EnergyEstimate>,
}

impl<R: Rng + ?Sized> Integrator<'_, R> {
    /// `-E(b)` and its stderr.
    fn f(&mut self, b: f64) -> Result<(f64, f64)> {
        if let Some(e) = self.cache.get(&b.to_bits()) {
            return Ok((-e.mean, e.stderr));
        }
        let mut cfg = self.cfg;
        cfg.beta = b;
        cfg.scaling = 0.0;
        let e = mean_energy(&cfg, self.budget, self.rng)?;
        self.cache.insert(b.to_bits(), e);
        Ok((-e.mean, e.stderr))
    }

    /// Integral of `-E` over `[a, b]` and its variance.
    fn panel(&mut self, a: f64, b: f64, depth: u32) -> Result<(f64, f64)> {
        let m = 0.5 * (a + b);
        let (q1, q3) = (0.5 * (a + m), 0.5 * (m + b));
        let pts = [a, q1, m, q3, b];
        let mut v = [(0.0, 0.0); 5];
        for (slot, &x) in v.iter_mut().zip(&pts) {
            *slot = self.f(x)?;
        }
        let h = b - a;
        let coarse = h / 6.0 * (v[0].0 + 4.0 * v[2].0 + v[4].0);
        let w = [h / 12.0, h / 3.0, h / 6.0, h / 3.0, h / 12.0];
        let fine: f64 = w.iter().zip(&v).map(|(w, f)| w * f.0).sum();
        let var: f64 = w.iter().zip(&v).map(|(w, f)| (w * f.1).powi(2)).sum();
        let coarse_var = (h / 6.0).powi(2) * (v[0].1.powi(2) + 16.0 * v[2].1.powi(2) + v[4].1.powi(2));
        let curvature = (fine - coarse).abs();
        let allowed = self.tol.max(3.0 * (var + coarse_var).sqrt());
        if curvature <= 15.0 * allowed {
            return Ok((fine, var));
        }
        if depth >= self.max_depth {
            return Err(Error::IntegrationRejected { lo: a, hi: b, curvature });
        }
        let (l, lv) = self.panel(a, m, depth + 1)?;
        let (r, rv) = self.panel(m, b, depth + 1)?;
        Ok((l + r, lv + rv))
    }
}

/// `log Z(β_eff) = -∫_0^{β_eff} E(b) db` on a grid of raw `β` starting at
/// 0, by adaptive Simpson with chain evaluations of the mean energy.
pub fn log_partition<R: Rng + ?Sized>(
    cfg: &GibbsConfig,
    betas: &[f64],
    budget: &ChainBudget,
    tol: f64,
    rng: &mut R,
) -> Result<LogPartition> {
    cfg.validate()?;
    if betas.first() != Some(&0.0) || betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("betas", "grid must start at 0 and increase"));
    }
    let scale = (cfg.n as f64).powf(-cfg.scaling);
    let grid: Vec<f64> = betas.iter().map(|b| b * scale).collect();
    let mut integ = Integrator {
        cfg: *cfg,
        budget,
        rng,
        tol,
        max_depth: 3,
        cache: BTreeMap::new(),
    };
    let mut log_z = vec![0.0];
    let mut var = vec![0.0];
    for w in grid.windows(2) {
        let (v, s2) = integ.panel(w[0], w[1], 0)?;
        log_z.push(log_z.last().unwrap() + v);
        var.push(var.last().unwrap() + s2);
    }
    Ok(LogPartition {
        n: cfg.n,
        beta_eff: grid,
        log_z,
        stderr: var.into_iter().map(f64::sqrt).collect(),
        evaluations: integ.cache.into_values().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseObservables {
    pub n: usize,
    pub beta: f64,
    pub beta_eff: f64,
    /// `(a, frequency of |{z : n^{2/5}/a <= l <= a n^{2/5}}| >= n^{3/5}/a⁴)`.
    pub mid_level: Vec<(f64, f64)>,
    /// `(b, frequency of max_z l >= b n^{1/5})`.
    pub max_local: Vec<(f64, f64)>,
    pub mean_max_local_time: f64,
    pub mean_mid_level_count: Vec<f64>,
    pub energy: EnergyEstimate,
    pub audits: u64,
    /// Failure of this cell, if any; the scan carries on.
    pub error: Option<String>,
}

fn mid_count(h: &[u64], lo: f64, hi: f64) -> u64 {
    h.iter()
        .enumerate()
        .filter(|&(k, _)| k as f64 >= lo && k as f64 <= hi)
        .map(|(_, &c)| c)
        .sum()
}

/// Run a chain per `(n, β)` and record the event frequencies.
pub fn phase_scan<R: Rng + ?Sized>(
    ns: &[usize],
    betas: &[f64],
    a_list: &[f64],
    b_list: &[f64],
    d: usize,
    budget: &ChainBudget,
    rng: &mut R,
) -> Result<Vec<PhaseObservables>> {
    if a_list.iter().any(|&a| !(a > 1.0)) || b_list.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::invalid("a, b", "need a > 1 and b > 0"));
    }
    let mut out = Vec::new();
    for &n in ns {
        for &beta in betas {
            let cfg = GibbsConfig::new(n, d, beta);
            let nf = n as f64;
            let cell = match run_chains(&cfg, budget, true, rng) {
                Ok(traces) => {
                    let hists: Vec<&Vec<u64>> = traces.iter().flat_map(|t| &t.histograms).collect();
                    let maxes: Vec<u32> = traces.iter().flat_map(|t| t.max_local.iter().copied()).collect();
                    let total = hists.len().max(1) as f64;
                    let mut mid_level = Vec::new();
                    let mut mean_mid = Vec::new();
                    for &a in a_list {
                        let (lo, hi) = (nf.powf(0.4) / a, a * nf.powf(0.4));
                        let need = nf.powf(0.6) / a.powi(4);
                        let counts: Vec<u64> = hists.iter().map(|h| mid_count(h, lo, hi)).collect();
                        mid_level.push((a, counts.iter().filter(|&&c| c as f64 >= need).count() as f64 / total));
                        mean_mid.push(counts.iter().sum::<u64>() as f64 / total);
                    }
                    let max_local = b_list
                        .iter()
                        .map(|&b| (b, maxes.iter().filter(|&&m| m as f64 >= b * nf.powf(0.2)).count() as f64 / total))
                        .collect();
                    PhaseObservables {
                        n,
                        beta,
                        beta_eff: cfg.beta_eff(),
                        mid_level,
                        max_local,
                        mean_max_local_time: maxes.iter().map(|&m| m as f64).sum::<f64>() / total,
                        mean_mid_level_count: mean_mid,
                        energy: summarize_energy(cfg.beta_eff(), &traces),
                        audits: traces.iter().map(|t| t.audits).sum(),
                        error: None,
                    }
                }
                Err(e) => PhaseObservables {
                    n,
                    beta,
                    beta_eff: cfg.beta_eff(),
                    mid_level: vec![],
                    max_local: vec![],
                    mean_max_local_time: f64::NAN,
                    mean_mid_level_count: vec![],
                    energy: EnergyEstimate {
                        beta_eff: cfg.beta_eff(),
                        mean: f64::NAN,
                        stderr: f64::NAN,
                        acceptance: f64::NAN,
                        equilibrated: false,
                        samples: 0,
                    },
                    audits: 0,
                    error: Some(e.to_string()),
                },
            };
            out.push(cell);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::exact_gibbs;

    #[test]
    fn zero_beta_has_zero_energy() {
        let mut rng = task_rng(111, 0);
        let e = mean_energy(&GibbsConfig::new(200, 3, 0.0), &ChainBudget::default(), &mut rng).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.acceptance, 1.0);
    }

    #[test]
    fn three_monomer_energy_matches_enumeration() {
        let mut rng = task_rng(112, 0);
        let mut cfg = GibbsConfig::new(3, 3, 0.5);
        cfg.scaling = 0.0;
        let budget = ChainBudget {
            chains: 4,
            steps: 100_000,
            thin: 1,
        };
        let e = mean_energy(&cfg, &budget, &mut rng).unwrap();
        let exact = exact_gibbs(3, 3, 0.5).unwrap();
        assert!((e.mean - exact.mean_energy).abs() < 3.0 * e.stderr, "{} vs {}", e.mean, exact.mean_energy);
    }

    #[test]
    fn thermodynamic_integration_matches_enumeration() {
        let mut rng = task_rng(113, 0);
        let mut cfg = GibbsConfig::new(3, 3, 0.0);
        cfg.scaling = 0.0;
        let budget = ChainBudget {
            chains: 2,
            steps: 40_000,
            thin: 1,
        };
        let lz = log_partition(&cfg, &[0.0, 0.5, 1.0], &budget, 1e-3, &mut rng).unwrap();
        assert_eq!(lz.log_z[0], 0.0);
        for (k, &b) in lz.beta_eff.iter().enumerate() {
            let exact = exact_gibbs(3, 3, b).unwrap().log_z;
            assert!((lz.log_z[k] - exact).abs() < 4.0 * lz.stderr[k] + 2e-3, "β={b}: {} vs {exact}", lz.log_z[k]);
            assert!(lz.log_z[k] >= 0.0 && lz.log_z[k] <= b * 3.0 + 1e-9);
        }
        assert!(log_partition(&cfg, &[0.1, 0.5], &budget, 1e-3, &mut rng).is_err());
    }

    #[test]
    fn energy_decreases_with_beta() {
        let mut rng = task_rng(114, 0);
        let mut last = f64::INFINITY;
        for beta in [0.0, 0.5, 1.0, 2.0] {
            let e = mean_energy(&GibbsConfig::new(300, 3, beta), &ChainBudget::default(), &mut rng).unwrap();
            assert!(e.mean <= last + 3.0 * e.stderr);
            last = e.mean;
        }
    }

    #[test]
    fn phase_scan_frequencies_are_probabilities() {
        let mut rng = task_rng(115, 0);
        let budget = ChainBudget {
            chains: 2,
            steps: 2000,
            thin: 20,
        };
        let cells = phase_scan(&[200], &[0.0, 2.0], &[2.0, 4.0], &[2.0, 8.0], 3, &budget, &mut rng).unwrap();
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert!(c.error.is_none());
            for &(_, f) in c.mid_level.iter().chain(&c.max_local) {
                assert!((0.0..=1.0).contains(&f));
            }
        }
        assert!(phase_scan(&[200], &[0.0], &[1.0], &[2.0], 3, &budget, &mut rng).is_err());
    }
}
