use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::charge::ChargeDistribution;
use crate::energy::x_check;
use crate::error::{Error, Result};
use crate::lattice::{sample_walk, KeyCodec, Move};
use crate::stats::{Method, TailEstimate};

/// Reusable buffers for drawing `X̌_n` of a fresh (walk, charges) pair.
pub(crate) struct XCheckSampler {
    n: usize,
    d: usize,
    dist: ChargeDistribution,
    codec: Option<KeyCodec>,
    map: FxHashMap<u64, (u32, f64)>,
    pos: Vec<i32>,
}

impl XCheckSampler {
    pub(crate) fn new(n: usize, d: usize, dist: ChargeDistribution) -> Self {
        XCheckSampler {
            n,
            d,
            dist,
            codec: KeyCodec::for_bound(d, n as u64),
            map: FxHashMap::default(),
            pos: vec![0; d],
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let Some(codec) = self.codec else {
            let t = sample_walk(self.n, self.d, rng).expect("validated");
            let eta: Vec<f64> = (0..self.n).map(|_| self.dist.sample(rng)).collect();
            return x_check(&t, &eta);
        };
        self.map.clear();
        self.pos.iter_mut().for_each(|c| *c = 0);
        for k in 0..self.n {
            if k > 0 {
                Move::sample(self.d, rng).apply(&mut self.pos);
            }
            let e = self.map.entry(codec.encode(&self.pos)).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += self.dist.sample(rng);
        }
        self.map.values().map(|&(l, q)| q * q - l as f64).sum()
    }
}

fn check_model(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("model", "need n >= 1 and d >= 1"));
    }
    Ok(())
}

/// `samples` independent draws of `X̌_n`.
pub fn naive_samples<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    dist: ChargeDistribution,
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_model(n, d)?;
    let mut s = XCheckSampler::new(n, d, dist);
    Ok((0..samples).map(|_| s.draw(rng)).collect())
}

/// Fraction of i.i.d. (walk, charges) samples with `X̌_n <= -x`.
pub fn naive_tail<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    dist: ChargeDistribution,
    x: f64,
    samples: usize,
    rng: &mut R,
) -> Result<TailEstimate> {
    check_model(n, d)?;
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    let mut s = XCheckSampler::new(n, d, dist);
    let hits = (0..samples).filter(|_| s.draw(rng) <= -x).count();
    Ok(TailEstimate::from_hits(hits as u64, samples as u64, Method::Naive))
}

/// Largest state count `exact_h_distribution` will enumerate.
pub const EXACT_BUDGET: u128 = 100_000_000;

/// Law of `H_n` for `±1` charges, with integer masses over the common
/// denominator `(2d+1)^{n-1} 2^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactDistribution {
    pub n: usize,
    pub d: usize,
    pub counts: BTreeMap<i64, u64>,
    pub total: u64,
}

impl ExactDistribution {
    pub fn prob(&self, h: i64) -> f64 {
        self.counts.get(&h).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// `P(H_n <= -x)`.
    pub fn lower_tail(&self, x: f64) -> f64 {
        self.counts
            .iter()
            .filter(|(&h, _)| h as f64 <= -x)
            .map(|(_, &c)| c)
            .sum::<u64>() as f64
            / self.total as f64
    }

    pub fn mean(&self) -> f64 {
        let s: i128 = self.counts.iter().map(|(&h, &c)| h as i128 * c as i128).sum();
        s as f64 / self.total as f64
    }

    pub fn variance(&self) -> f64 {
        let s2: i128 = self.counts.iter().map(|(&h, &c)| (h as i128).pow(2) * c as i128).sum();
        s2 as f64 / self.total as f64 - self.mean().powi(2)
    }

    /// Total variation distance to an empirical histogram.
    pub fn total_variation(&self, samples: &[f64]) -> f64 {
        let mut emp: BTreeMap<i64, u64> = BTreeMap::new();
        for &h in samples {
            *emp.entry(h.round() as i64).or_insert(0) += 1;
        }
        let n = samples.len() as f64;
        let keys: std::collections::BTreeSet<i64> = emp.keys().chain(self.counts.keys()).copied().collect();
        keys.iter()
            .map(|h| (self.prob(*h) - emp.get(h).copied().unwrap_or(0) as f64 / n).abs())
            .sum::<f64>()
            / 2.0
    }
}

/// Exhaustive law of `H_n` for `±1` charges over every trajectory and sign
/// pattern.
pub fn exact_h_distribution(n: usize, d: usize) -> Result<ExactDistribution> {
    check_model(n, d)?;
    let moves = (2 * d + 1) as u128;
    let states = moves.checked_pow(n as u32 - 1).and_then(|w| w.checked_mul(1u128 << n.min(127)));
    match states {
        Some(s) if s <= EXACT_BUDGET => {}
        _ => {
            return Err(Error::BudgetExceeded {
                states: states.unwrap_or(u128::MAX),
                budget: EXACT_BUDGET,
            })
        }
    }
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    let mut steps = vec![0u8; n - 1];
    let mut site_of = vec![0usize; n];
    let mut positions: Vec<Vec<i32>> = vec![vec![0; d]; n];
    let mut walks = 0u64;
    loop {
        for k in 1..n {
            let mut p = positions[k - 1].clone();
            Move(steps[k - 1]).apply(&mut p);
            positions[k] = p;
        }
        let mut sites: Vec<&Vec<i32>> = Vec::new();
        for k in 0..n {
            site_of[k] = match sites.iter().position(|s| **s == positions[k]) {
                Some(i) => i,
                None => {
                    sites.push(&positions[k]);
                    sites.len() - 1
                }
            };
        }
        let mut q = vec![0i64; sites.len()];
        for mask in 0u64..(1 << n) {
            q.iter_mut().for_each(|v| *v = 0);
            for k in 0..n {
                q[site_of[k]] += if mask >> k & 1 == 1 { 1 } else { -1 };
            }
            let h = q.iter().map(|v| v * v).sum::<i64>() - n as i64;
            *counts.entry(h).or_insert(0) += 1;
        }
        walks += 1;
        // Odometer over the move sequence.
        let mut i = 0;
        loop {
            if i == n - 1 {
                return Ok(ExactDistribution {
                    n,
                    d,
                    counts,
                    total: walks << n,
                });
            }
            steps[i] += 1;
            if (steps[i] as u128) < moves {
                break;
            }
            steps[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::{return_probabilities, GreenMethod};
    use crate::rng::task_rng;

    #[test]
    fn small_exact_laws() {
        let e1 = exact_h_distribution(1, 3).unwrap();
        assert_eq!(e1.counts, BTreeMap::from([(0, 2)]));
        let e2 = exact_h_distribution(2, 3).unwrap();
        // Same site with probability 1/7, then H = ±2 evenly.
        assert_eq!(e2.total, 7 * 4);
        assert_eq!(e2.counts[&2], 2);
        assert_eq!(e2.counts[&-2], 2);
        assert_eq!(e2.counts[&0], 24);
        for n in 1..=6 {
            let e = exact_h_distribution(n, 3).unwrap();
            assert_eq!(e.counts.values().sum::<u64>(), e.total);
            assert!(e.counts.keys().all(|&h| h >= -(n as i64)));
        }
        assert!(matches!(exact_h_distribution(12, 3), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn exact_moments_match_green_function() {
        // E H = 0 and Var H = 4 Σ_{m<n} (n-m) P(S_m = 0).
        let g = return_probabilities(3, 8, GreenMethod::Convolution).unwrap();
        for n in 2..=6 {
            let e = exact_h_distribution(n, 3).unwrap();
            let var: f64 = (1..n).map(|m| 4.0 * (n - m) as f64 * g.prob(m)).sum();
            assert_eq!(e.mean(), 0.0);
            assert!((e.variance() - var).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn naive_matches_exact() {
        let e = exact_h_distribution(4, 3).unwrap();
        let mut rng = task_rng(41, 0);
        let est = naive_tail(4, 3, ChargeDistribution::Rademacher, 2.0, 200_000, &mut rng).unwrap();
        let p = e.lower_tail(2.0);
        assert!((est.p_hat - p).abs() < 3.0 * est.stderr.max(1e-12), "{} vs {p}", est.p_hat);
        let mid = naive_tail(6, 3, ChargeDistribution::Rademacher, 0.0, 100_000, &mut rng).unwrap();
        let mid_exact = exact_h_distribution(6, 3).unwrap().lower_tail(0.0);
        assert!((mid.p_hat - mid_exact).abs() < 4.0 * mid.stderr);
    }

    #[test]
    fn impossible_threshold_has_no_hits() {
        let mut rng = task_rng(42, 0);
        let est = naive_tail(20, 3, ChargeDistribution::Rademacher, 21.0, 10_000, &mut rng).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert!(est.is_zero_hit());
        assert!(est.upper_bound.unwrap() > 0.0);
    }

    #[test]
    fn sampler_agrees_with_reference_path() {
        // Same generator, same draws: the packed sampler and the Trajectory
        // path consume randomness differently, so compare distributions.
        let mut rng = task_rng(43, 0);
        let fast = naive_samples(30, 3, ChargeDistribution::Rademacher, 40_000, &mut rng).unwrap();
        let slow: Vec<f64> = (0..40_000)
            .map(|_| {
                let t = sample_walk(30, 3, &mut rng).unwrap();
                let eta: Vec<f64> = (0..30).map(|_| ChargeDistribution::Rademacher.sample(&mut rng)).collect();
                x_check(&t, &eta)
            })
            .collect();
        let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let v = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((m(&fast) - m(&slow)).abs() < 0.1);
        assert!((v(&fast) / v(&slow) - 1.0).abs() < 0.05);
    }
}
