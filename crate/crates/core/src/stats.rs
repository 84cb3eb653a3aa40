//! Estimates, accumulators and small numerical helpers shared by the
//! estimators.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Which estimator produced a [`TailEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Naive,
    Rejection,
    Splitting,
    Strategy,
    D2Moderate,
    Tilted,
    Conjecture,
}

/// A probability estimate with its Monte Carlo error.
///
/// Rare-event estimators work in log space, so `p_hat` may underflow to zero
/// while `log_p` and `rel_stderr` stay meaningful. A zero-hit estimate never
/// claims `0 ± 0`: it carries a Clopper-Pearson 95% upper bound instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub log_p: f64,
    pub rel_stderr: f64,
    pub samples: u64,
    pub method: Method,
    pub upper_bound: Option<f64>,
}

impl TailEstimate {
    /// Binomial estimate from `hits` successes out of `samples` trials.
    pub fn from_hits(hits: u64, samples: u64, method: Method) -> Self {
        assert!(samples > 0 && hits <= samples);
        if hits == 0 {
            return TailEstimate {
                p_hat: 0.0,
                stderr: 0.0,
                log_p: f64::NEG_INFINITY,
                rel_stderr: f64::INFINITY,
                samples,
                method,
                upper_bound: Some(clopper_pearson_zero_upper(samples, 0.05)),
            };
        }
        let p = hits as f64 / samples as f64;
        let stderr = (p * (1.0 - p) / samples as f64).sqrt();
        TailEstimate {
            p_hat: p,
            stderr,
            log_p: p.ln(),
            rel_stderr: stderr / p,
            samples,
            method,
            upper_bound: None,
        }
    }

    /// Estimate known only through its logarithm and relative error.
    pub fn from_log(log_p: f64, rel_stderr: f64, samples: u64, method: Method) -> Self {
        if log_p == f64::NEG_INFINITY {
            return TailEstimate {
                p_hat: 0.0,
                stderr: 0.0,
                log_p,
                rel_stderr: f64::INFINITY,
                samples,
                method,
                upper_bound: None,
            };
        }
        let p = log_p.exp();
        TailEstimate {
            p_hat: p,
            stderr: p * rel_stderr,
            log_p,
            rel_stderr,
            samples,
            method,
            upper_bound: None,
        }
    }

    pub fn exact(p: f64) -> Self {
        TailEstimate {
            p_hat: p,
            stderr: 0.0,
            log_p: p.ln(),
            rel_stderr: 0.0,
            samples: 0,
            method: Method::Exact,
            upper_bound: None,
        }
    }

    pub fn is_zero_hit(&self) -> bool {
        self.upper_bound.is_some()
    }

    /// The largest value compatible with the estimate: the point estimate for
    /// hits, the Clopper-Pearson bound otherwise.
    pub fn optimistic(&self) -> f64 {
        self.upper_bound.unwrap_or(self.p_hat)
    }
}

impl fmt::Display for TailEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.upper_bound {
            Some(ub) => write!(f, "< {ub:.3e} (CP95, {} samples, {:?})", self.samples, self.method),
            None => write!(
                f,
                "{:.4e} ± {:.2e} (log {:.4}, {:?})",
                self.p_hat, self.stderr, self.log_p, self.method
            ),
        }
    }
}

/// Two-sided Clopper-Pearson upper limit for zero successes.
pub fn clopper_pearson_zero_upper(samples: u64, alpha: f64) -> f64 {
    1.0 - (alpha / 2.0).powf(1.0 / samples as f64)
}

/// Welford accumulator; merging is associative so per-worker partial results
/// can be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

/// Mean of positive quantities supplied as logarithms, kept in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMean {
    count: u64,
    shift: f64,
    sum: f64,
    sum_sq: f64,
}

impl Default for LogMean {
    fn default() -> Self {
        LogMean {
            count: 0,
            shift: f64::NEG_INFINITY,
            sum: 0.0,
            sum_sq: 0.0,
        }
    }
}

impl LogMean {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one sample `exp(log_value)`; `-inf` stands for a zero sample.
    pub fn push(&mut self, log_value: f64) {
        self.count += 1;
        if log_value == f64::NEG_INFINITY {
            return;
        }
        if log_value > self.shift {
            let r = (self.shift - log_value).exp();
            self.sum *= r;
            self.sum_sq *= r * r;
            self.shift = log_value;
        }
        let e = (log_value - self.shift).exp();
        self.sum += e;
        self.sum_sq += e * e;
    }

    pub fn merge(&mut self, other: &LogMean) {
        if other.shift > self.shift {
            let r = (self.shift - other.shift).exp();
            self.sum = self.sum * r + other.sum;
            self.sum_sq = self.sum_sq * r * r + other.sum_sq;
            self.shift = other.shift;
        } else if other.shift > f64::NEG_INFINITY {
            let r = (other.shift - self.shift).exp();
            self.sum += other.sum * r;
            self.sum_sq += other.sum_sq * r * r;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Logarithm of the sample mean.
    pub fn log_mean(&self) -> f64 {
        if self.count == 0 || self.sum == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shift + (self.sum / self.count as f64).ln()
    }

    /// Standard error of the mean divided by the mean.
    pub fn rel_stderr(&self) -> f64 {
        if self.count < 2 || self.sum == 0.0 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (var / n).sqrt() / mean
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Neumaier-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Batch-means standard error of a correlated series.
pub fn batch_means_stderr(series: &[f64], batches: usize) -> f64 {
    let batches = batches.max(2);
    let size = series.len() / batches;
    if size == 0 {
        return RunningStats::from_iter(series.iter().copied()).stderr();
    }
    let means: RunningStats = series
        .chunks(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    means.stderr()
}

/// `ln C(n, k)` through a running sum of logs. Exact enough for the binomial
/// weights used by the weight tables and charge factors.
pub fn ln_binomial_row(n: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    row.push(0.0);
    for k in 1..=n {
        acc += ((n - k + 1) as f64).ln() - (k as f64).ln();
        row.push(acc);
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_hits_carry_an_upper_bound() {
        let est = TailEstimate::from_hits(0, 1000, Method::Naive);
        assert!(est.is_zero_hit());
        let ub = est.upper_bound.unwrap();
        // 1 - 0.025^(1/1000) ≈ 3.68e-3
        assert!((ub - 3.682e-3).abs() < 1e-5, "{ub}");
    }

    #[test]
    fn log_mean_matches_direct_mean() {
        let xs = [1e-3, 2e-3, 5e-4, 0.0, 7e-3];
        let mut lm = LogMean::new();
        for x in xs {
            lm.push(if x > 0.0 { f64::ln(x) } else { f64::NEG_INFINITY });
        }
        let direct = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((lm.log_mean() - direct.ln()).abs() < 1e-12);
        let rs: RunningStats = xs.iter().copied().collect();
        assert!((lm.rel_stderr() - rs.stderr() / direct).abs() < 1e-9);
    }

    #[test]
    fn binomial_row_small() {
        let row = ln_binomial_row(5);
        let expect = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
        for (r, e) in row.iter().zip(expect) {
            assert!((r.exp() - e).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn running_stats_merge_is_associative(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 1usize..59) {
            let cut = cut.min(xs.len() - 1);
            let whole: RunningStats = xs.iter().copied().collect();
            let mut left: RunningStats = xs[..cut].iter().copied().collect();
            let right: RunningStats = xs[cut..].iter().copied().collect();
            left.merge(&right);
            prop_assert_eq!(left.count(), whole.count());
            prop_assert!((left.mean() - whole.mean()).abs() < 1e-9);
            prop_assert!((left.variance() - whole.variance()).abs() < 1e-6 * (1.0 + whole.variance()));
        }

        #[test]
        fn log_mean_merge_matches_sequential(xs in prop::collection::vec(-50f64..5.0, 1..40), cut in 0usize..40) {
            let cut = cut.min(xs.len());
            let mut seq = LogMean::new();
            xs.iter().for_each(|&x| seq.push(x));
            let mut a = LogMean::new();
            let mut b = LogMean::new();
            xs[..cut].iter().for_each(|&x| a.push(x));
            xs[cut..].iter().for_each(|&x| b.push(x));
            a.merge(&b);
            prop_assert!((a.log_mean() - seq.log_mean()).abs() < 1e-9);
        }
    }
}
