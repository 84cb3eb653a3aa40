//! Lower bounds from the folding strategy: keep the walk in a ball `B(r)`
//! for `T` monomers, then ask the charges on the well-visited sites
//! `𝒢 = {z : δ₀T/|B| <= l_T(z) <= 2T/(ε₀|B|)}` to produce
//! `Σ_𝒢 Y_z >= (1+δ)x`, where `Y_z = l(z) - q̌(z)²`.
//!
//! The walk factor is estimated by fixed-effort splitting over confined
//! walkers that carry their local times. The charge factor is computed per
//! sampled occupation profile by exponentially tilted importance sampling.
//! With `p = P(|𝒢| >= ε₀|B|/2, Σ_𝒢 Y >= (1+δ)x)` and
//! `B_n^c = {‖l_n‖₂ > x n^{-ε'}}`, the returned estimate is
//! `(p - P(B_n^c)) / 2`.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lattice::{checkpoints, fixed_effort_splitting, in_ball, sample_walk, Move, Particle};
use crate::lattice::local_times;
use crate::rng::{child_rng, SimRng};
use crate::stats::{ln_binomial_row, log_sum_exp, LogMean, Method, TailEstimate};

/// Exponent `ε'` in `B_n = {‖l_n‖₂ <= x n^{-ε'}}`.
pub const EPS_PRIME: f64 = 0.05;

/// Volume of the unit Euclidean ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Number of monomers `T` kept inside the ball.
    pub duration: usize,
    /// Target ball volume `|B(r)|` from the cost matching.
    pub volume: f64,
    pub radius: f64,
    pub delta0: f64,
    pub eps0: f64,
    pub delta: f64,
}

impl StrategyConfig {
    /// Default geometry for threshold `x`: in `d = 3`, `T = n` and
    /// `|B|^{5/3} = T³/x²`; in `d >= 4`, `T = (4/ε₀)x` and `|B| = x^{d/(d+2)}`.
    pub fn for_target(n: usize, d: usize, x: f64) -> Self {
        let (delta0, eps0, delta) = (0.5, 0.25, 0.1);
        let dd = d as f64;
        let (duration, volume) = if d == 3 {
            let t = n as f64;
            (n, (t.powi(3) / (x * x)).powf(dd / (dd + 2.0)))
        } else {
            ((4.0 / eps0 * x).ceil() as usize, x.powf(dd / (dd + 2.0)))
        };
        StrategyConfig {
            duration,
            volume,
            radius: (volume / unit_ball_volume(d)).powf(1.0 / dd),
            delta0,
            eps0,
            delta,
        }
    }

    pub fn with_delta0(mut self, delta0: f64) -> Self {
        self.delta0 = delta0;
        self
    }

    pub fn validate(&self, n: usize, d: usize) -> Result<BallGeometry> {
        if self.duration < 2 || self.duration > n {
            return Err(Error::invalid("T", format!("need 2 <= T <= n = {n}, got {}", self.duration)));
        }
        if self.duration > u16::MAX as usize {
            return Err(Error::invalid("T", "durations above 65535 are not supported"));
        }
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return Err(Error::invalid("eps0", "must lie in (0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta0 > 0.0) {
            return Err(Error::invalid("delta", "δ and δ₀ must be positive"));
        }
        if !(self.radius >= 1.0) {
            return Err(Error::invalid("radius", format!("need r >= 1, got {}", self.radius)));
        }
        let geom = BallGeometry::new(d, self.radius);
        let visits = self.delta0 * self.duration as f64 / geom.volume as f64;
        if visits < 2.0 {
            return Err(Error::invalid(
                "delta0",
                format!("δ₀T/|B| = {visits:.3} < 2 (T = {}, |B| = {})", self.duration, geom.volume),
            ));
        }
        Ok(geom)
    }
}

/// Lattice points of `B(r)` with a dense index over the bounding box.
#[derive(Debug, Clone)]
pub struct BallGeometry {
    pub d: usize,
    pub radius: f64,
    /// Number of lattice sites in the ball.
    pub volume: usize,
    half: i32,
    strides: Vec<usize>,
    index: Vec<i32>,
}

impl BallGeometry {
    pub fn new(d: usize, radius: f64) -> Self {
        let half = radius.floor() as i32;
        let side = (2 * half + 1) as usize;
        let mut strides = vec![1usize; d];
        for i in 1..d {
            strides[i] = strides[i - 1] * side;
        }
        let cells = side.pow(d as u32);
        let mut index = vec![-1i32; cells];
        let mut volume = 0;
        let mut c = vec![0i32; d];
        for (cell, slot) in index.iter_mut().enumerate() {
            let mut rest = cell;
            for ci in c.iter_mut() {
                *ci = (rest % side) as i32 - half;
                rest /= side;
            }
            if in_ball(&c, radius) {
                *slot = volume as i32;
                volume += 1;
            }
        }
        BallGeometry {
            d,
            radius,
            volume,
            half,
            strides,
            index,
        }
    }

    /// Ball index of `pos`, if inside.
    #[inline]
    pub fn site(&self, pos: &[i32]) -> Option<usize> {
        let mut cell = 0;
        for (i, &c) in pos.iter().enumerate() {
            if c.abs() > self.half {
                return None;
            }
            cell += (c + self.half) as usize * self.strides[i];
        }
        let k = self.index[cell];
        (k >= 0).then_some(k as usize)
    }

    fn origin_cell(&self) -> usize {
        (0..self.d).map(|i| self.half as usize * self.strides[i]).sum()
    }
}

#[derive(Clone)]
struct ConfinedWalker<'a> {
    geom: &'a BallGeometry,
    pos: Vec<i32>,
    cell: usize,
    local: Vec<u16>,
}

impl<'a> ConfinedWalker<'a> {
    fn new(geom: &'a BallGeometry) -> Self {
        let mut local = vec![0u16; geom.volume];
        let cell = geom.origin_cell();
        local[geom.index[cell] as usize] = 1;
        ConfinedWalker {
            geom,
            pos: vec![0; geom.d],
            cell,
            local,
        }
    }
}

impl Particle for ConfinedWalker<'_> {
    fn advance(&mut self, steps: usize, rng: &mut SimRng) -> bool {
        let g = self.geom;
        for _ in 0..steps {
            let m = Move::sample(g.d, rng);
            if m == Move::STAY {
                self.local[g.index[self.cell] as usize] += 1;
                continue;
            }
            let axis = (m.0 as usize - 1) / 2;
            let up = m.0 % 2 == 1;
            let c = &mut self.pos[axis];
            if up {
                if *c == g.half {
                    return false;
                }
                *c += 1;
                self.cell += g.strides[axis];
            } else {
                if *c == -g.half {
                    return false;
                }
                *c -= 1;
                self.cell -= g.strides[axis];
            }
            let k = g.index[self.cell];
            if k < 0 {
                return false;
            }
            self.local[k as usize] += 1;
        }
        true
    }
}

/// Exact law of `Y = l - S_l²` for a sum `S_l` of `l` Rademacher charges.
#[derive(Debug, Clone)]
pub struct SiteLaw {
    pub l: u32,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl SiteLaw {
    pub fn new(l: u32) -> Self {
        let row = ln_binomial_row(l as usize);
        let ln2 = std::f64::consts::LN_2;
        let mut values = Vec::new();
        let mut log_probs = Vec::new();
        let mut s = l % 2;
        while s <= l {
            let k = ((l + s) / 2) as usize;
            let sym = if s > 0 { ln2 } else { 0.0 };
            values.push(l as f64 - (s as f64) * (s as f64));
            log_probs.push(row[k] - l as f64 * ln2 + sym);
            s += 2;
        }
        SiteLaw { l, values, log_probs }
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    /// `(Λ(θ), Λ'(θ))` for the cumulant generating function.
    fn cumulant(&self, theta: f64) -> (f64, f64) {
        let w: Vec<f64> = self.log_probs.iter().zip(&self.values).map(|(p, y)| p + theta * y).collect();
        let lam = log_sum_exp(&w);
        let mean = w.iter().zip(&self.values).map(|(wi, y)| (wi - lam).exp() * y).sum();
        (lam, mean)
    }
}

/// `log Q(Σ_z Y_z >= t)` with its relative standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeFactor {
    pub log_p: f64,
    pub rel_stderr: f64,
}

fn group_profile(profile: &[u32]) -> Vec<(SiteLaw, usize)> {
    let mut groups: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in profile {
        *groups.entry(l).or_insert(0) += 1;
    }
    groups.into_iter().map(|(l, c)| (SiteLaw::new(l), c)).collect()
}

/// `Q(Σ_z Y_z >= t)` for independent sites with local times `profile`,
/// by importance sampling under the exponential tilt that centres the sum
/// at `t`. Returns `log_p = -inf` when `t` exceeds the largest attainable
/// sum, where the probability is exactly zero.
pub fn charge_tail_is<R: Rng + ?Sized>(profile: &[u32], t: f64, samples: usize, rng: &mut R) -> ChargeFactor {
    let groups = group_profile(profile);
    let max: f64 = groups.iter().map(|(law, c)| law.max_value() * *c as f64).sum();
    if t > max + 1e-9 {
        return ChargeFactor {
            log_p: f64::NEG_INFINITY,
            rel_stderr: 0.0,
        };
    }
    if t >= max - 1e-9 {
        let log_p = groups.iter().map(|(law, c)| law.log_probs[0] * *c as f64).sum();
        return ChargeFactor { log_p, rel_stderr: 0.0 };
    }
    let drift = |theta: f64| -> f64 { groups.iter().map(|(law, c)| law.cumulant(theta).1 * *c as f64).sum::<f64>() - t };
    let mut theta = 0.0;
    if t > 0.0 {
        let mut hi = 1e-3;
        while drift(hi) < 0.0 && hi < 1e6 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if drift(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        theta = hi;
    }
    let mut log_norm = 0.0;
    let tilted: Vec<(Vec<f64>, &SiteLaw, usize)> = groups
        .iter()
        .map(|(law, c)| {
            let (lam, _) = law.cumulant(theta);
            log_norm += lam * *c as f64;
            let mut acc = 0.0;
            let cdf = law
                .log_probs
                .iter()
                .zip(&law.values)
                .map(|(p, y)| {
                    acc += (p + theta * y - lam).exp();
                    acc
                })
                .collect();
            (cdf, law, *c)
        })
        .collect();
    let mut mean = LogMean::new();
    for _ in 0..samples {
        let mut sum = 0.0;
        for (cdf, law, c) in &tilted {
            let top = *cdf.last().unwrap();
            for _ in 0..*c {
                let u = rng.random::<f64>() * top;
                let k = cdf.partition_point(|&v| v < u).min(cdf.len() - 1);
                sum += law.values[k];
            }
        }
        mean.push(if sum >= t - 1e-9 { log_norm - theta * sum } else { f64::NEG_INFINITY });
    }
    ChargeFactor {
        log_p: mean.log_mean(),
        rel_stderr: mean.rel_stderr(),
    }
}

/// `Q(Σ_z Y_z >= t)` by exact convolution of the integer site laws. The
/// support grows like `Σ l²`, so this is for small profiles only.
pub fn charge_tail_exact(profile: &[u32], t: f64) -> f64 {
    let mut lo = 0i64;
    let mut pmf = vec![1.0f64];
    for &l in profile {
        let law = SiteLaw::new(l);
        let min = law.values.iter().cloned().fold(f64::INFINITY, f64::min) as i64;
        let max = law.max_value() as i64;
        let mut next = vec![0.0; pmf.len() + (max - min) as usize];
        for (i, &p) in pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (y, lp) in law.values.iter().zip(&law.log_probs) {
                next[i + (*y as i64 - min) as usize] += p * lp.exp();
            }
        }
        lo += min;
        pmf = next;
    }
    pmf.iter()
        .enumerate()
        .filter(|(i, _)| (lo + *i as i64) as f64 >= t)
        .map(|(_, p)| p)
        .sum()
}

/// Effort knobs of [`strategy_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyBudget {
    pub replicates: usize,
    /// Splitting particles per replicate.
    pub particles: usize,
    /// Checkpoint spacing in units of `r²` steps.
    pub stage_factor: f64,
    /// Survivors per replicate whose charge factor is evaluated.
    pub profiles: usize,
    /// Importance samples per profile.
    pub charge_samples: usize,
    /// Free walks used to estimate `P(B_n^c)`.
    pub restriction_walks: usize,
}

impl Default for StrategyBudget {
    fn default() -> Self {
        StrategyBudget {
            replicates: 10,
            particles: 500,
            stage_factor: 0.75,
            profiles: 16,
            charge_samples: 64,
            restriction_walks: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEstimate {
    /// Lower-bound estimate `(p - P(B_n^c)) / 2`.
    pub estimate: TailEstimate,
    /// `log P(τ > T, |𝒢| >= ε₀|B|/2)`.
    pub log_walk_factor: f64,
    /// `log p - log_walk_factor`: the charge factor averaged over profiles.
    pub log_charge_factor: f64,
    pub log_joint: f64,
    pub restriction_failure: TailEstimate,
    pub lattice_volume: usize,
    pub radius: f64,
    pub duration: usize,
}

/// Folding-strategy lower bound on `P(X̌_n <= -x)` for `±1` charges.
pub fn strategy_lower_bound<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    x: f64,
    cfg: &StrategyConfig,
    budget: &StrategyBudget,
    rng: &mut R,
) -> Result<StrategyEstimate> {
    let geom = cfg.validate(n, d)?;
    if budget.replicates == 0 || budget.particles == 0 || budget.profiles == 0 {
        return Err(Error::invalid("budget", "replicates, particles and profiles must be positive"));
    }
    let vol = geom.volume as f64;
    let t_mon = cfg.duration;
    let lo = cfg.delta0 * t_mon as f64 / vol;
    let hi = 2.0 * t_mon as f64 / (cfg.eps0 * vol);
    let need = cfg.eps0 / 2.0 * vol;
    let target = (1.0 + cfg.delta) * x;
    let stage = ((budget.stage_factor * cfg.radius * cfg.radius).round() as usize).max(1);
    let stages = checkpoints(t_mon - 1, stage);

    let mut joint = LogMean::new();
    let mut walk = LogMean::new();
    let mut extinct = 0;
    let mut qualified_any = false;
    let mut possible_any = false;
    for _ in 0..budget.replicates {
        let mut child = child_rng(rng);
        let run = fixed_effort_splitting(ConfinedWalker::new(&geom), budget.particles, &stages, &mut child);
        if run.survivors.is_empty() {
            extinct += 1;
            joint.push(f64::NEG_INFINITY);
            walk.push(f64::NEG_INFINITY);
            continue;
        }
        let s = run.survivors.len();
        let pick = sample_indices(&mut child, s, budget.profiles.min(s));
        let mut qualifying = 0usize;
        let mut factors = LogMean::new();
        let picked: Vec<usize> = pick.into_iter().collect();
        for (j, w) in run.survivors.iter().enumerate() {
            let g_count = w.local.iter().filter(|&&l| (l as f64) >= lo && (l as f64) <= hi).count();
            let ok = g_count as f64 >= need;
            if ok {
                qualifying += 1;
            }
            if !picked.contains(&j) {
                continue;
            }
            if !ok {
                factors.push(f64::NEG_INFINITY);
                continue;
            }
            qualified_any = true;
            let final_local = continue_free(w, n - t_mon, &mut child);
            let profile: Vec<u32> = w
                .local
                .iter()
                .zip(&final_local)
                .filter(|(&lt, _)| (lt as f64) >= lo && (lt as f64) <= hi)
                .map(|(_, &ln)| ln)
                .collect();
            let cf = charge_tail_is(&profile, target, budget.charge_samples, &mut child);
            if cf.log_p > f64::NEG_INFINITY {
                possible_any = true;
            }
            factors.push(cf.log_p);
        }
        walk.push(run.log_weight + (qualifying as f64 / s as f64).ln());
        joint.push(run.log_weight + factors.log_mean());
    }
    if extinct == budget.replicates {
        return Err(Error::StrategyFactor {
            factor: "walk",
            reason: format!("every splitting replicate went extinct over {} checkpoints", stages.len()),
        });
    }
    if !qualified_any {
        return Err(Error::StrategyFactor {
            factor: "walk",
            reason: format!("no confined walk reached |𝒢| >= {need:.1}"),
        });
    }
    if !possible_any {
        return Err(Error::StrategyFactor {
            factor: "charge",
            reason: format!("(1+δ)x = {target:.1} exceeds the largest attainable Σ_𝒢 Y on every sampled profile"),
        });
    }

    let threshold = x * (n as f64).powf(-EPS_PRIME);
    let bc_hits = (0..budget.restriction_walks)
        .filter(|_| {
            let t = sample_walk(n, d, rng).expect("validated");
            local_times(&t).q_norm(2.0).expect("q = 2") > threshold * threshold
        })
        .count();
    let restriction_failure = TailEstimate::from_hits(bc_hits as u64, budget.restriction_walks.max(1) as u64, Method::Naive);

    let log_joint = joint.log_mean();
    let bc = restriction_failure.p_hat;
    let log_p = if bc == 0.0 {
        log_joint - std::f64::consts::LN_2
    } else {
        let diff = 1.0 - (bc.ln() - log_joint).exp();
        if diff > 0.0 {
            log_joint + diff.ln() - std::f64::consts::LN_2
        } else {
            f64::NEG_INFINITY
        }
    };
    let samples = (budget.replicates * budget.particles) as u64;
    let log_walk_factor = walk.log_mean();
    Ok(StrategyEstimate {
        estimate: TailEstimate::from_log(log_p, joint.rel_stderr(), samples, Method::Strategy),
        log_walk_factor,
        log_charge_factor: log_joint - log_walk_factor,
        log_joint,
        restriction_failure,
        lattice_volume: geom.volume,
        radius: cfg.radius,
        duration: t_mon,
    })
}

/// Run the walk on freely for `steps` more steps and return the final
/// local times of the ball sites.
fn continue_free(w: &ConfinedWalker<'_>, steps: usize, rng: &mut SimRng) -> Vec<u32> {
    let mut local: Vec<u32> = w.local.iter().map(|&l| l as u32).collect();
    let mut pos = w.pos.clone();
    for _ in 0..steps {
        Move::sample(w.geom.d, rng).apply(&mut pos);
        if let Some(k) = w.geom.site(&pos) {
            local[k] += 1;
        }
    }
    local
}
