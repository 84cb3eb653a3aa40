//! Return probabilities `P_0(S(m) = 0)` of the lazy walk, the constant
//! `c_d = Σ_{m>=1} P_0(S(m) = 0)` and the escape probability
//! `γ_0 = 1/(1 + c_d)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    Quadrature,
    Convolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub d: usize,
    /// `probs[m - 1] = P_0(S(m) = 0)`.
    pub probs: Vec<f64>,
    /// Upper bound on `Σ_{m > N} P_0(S(m) = 0)`.
    pub truncation_tail: f64,
    /// Numerical error estimate of the computed terms (grid refinement
    /// difference, or leaked mass for the convolution).
    pub numeric_error: f64,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `P_0(S(m) = 0)` for `1 <= m <= N`.
    pub fn prob(&self, m: usize) -> f64 {
        self.probs[m - 1]
    }

    pub fn partial_sum(&self, upto: usize) -> f64 {
        self.probs[..upto].iter().sum()
    }
}

/// Gauss-Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(k: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for i in 0..k.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            if k == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = k as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = mid - half * z;
        x[k - 1 - i] = mid + half * z;
        w[i] = 2.0 * half / ((1.0 - z * z) * dp * dp);
        w[k - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes per axis needed for terms up to `m`.
fn nodes_for(m: usize) -> usize {
    16 + (2.0 * (m as f64).sqrt()).ceil() as usize
}

/// `(weight, φ)` over the sorted sub-grid `i_1 <= … <= i_d`, each point
/// weighted by the number of its permutations.
fn grid_points(d: usize, k: usize) -> Vec<(f64, f64)> {
    let (theta, w) = gauss_legendre(k, 0.0, std::f64::consts::PI);
    let cos: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let volume = std::f64::consts::PI.powi(d as i32);
    let moves = (2 * d + 1) as f64;
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    loop {
        let mut weight = 1.0;
        let mut sum = 0.0;
        for &i in &idx {
            weight *= w[i];
            sum += cos[i];
        }
        let mut perms = fact(d);
        let mut run = 1;
        for j in 1..=d {
            if j < d && idx[j] == idx[j - 1] {
                run += 1;
            } else {
                perms /= fact(run);
                run = 1;
            }
        }
        out.push((weight * perms / volume, (1.0 + 2.0 * sum) / moves));
        // Next non-decreasing multi-index.
        let mut j = d;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            if idx[j] + 1 < k {
                idx[j] += 1;
                for t in j + 1..d {
                    idx[t] = idx[j];
                }
                break;
            }
        }
    }
}

fn quadrature_terms(d: usize, n: usize, k: usize) -> Vec<f64> {
    let points = grid_points(d, k);
    points
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for &(w, phi) in chunk {
                let mut p = w;
                for a in acc.iter_mut() {
                    p *= phi;
                    *a += p;
                }
            }
            acc
        })
        .reduce(
            || vec![0.0; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Relative disagreement between two grids above which the quadrature
/// is declared unresolved.
const QUADRATURE_TOL: f64 = 1e-9;

fn by_quadrature(d: usize, n: usize) -> Result<(Vec<f64>, f64)> {
    let k = nodes_for(n);
    let fine = quadrature_terms(d, n, k);
    let coarse = quadrature_terms(d, n, k * 4 / 5);
    let mut worst = 0.0f64;
    for (m, (a, b)) in fine.iter().zip(&coarse).enumerate() {
        let rel = (a - b).abs() / a.abs();
        if !(rel <= QUADRATURE_TOL) {
            return Err(Error::Quadrature {
                m: m + 1,
                reason: format!("grids of {k} and {} nodes differ by {rel:e}", k * 4 / 5),
            });
        }
        worst = worst.max((a - b).abs());
    }
    Ok((fine, worst))
}

/// Iterate the step distribution on the non-negative orthant of the box
/// `[-R, R]^d`, `R = ⌈4√N⌉`, using reflection symmetry.
fn by_convolution(d: usize, n: usize) -> (Vec<f64>, f64) {
    let r = (4.0 * (n as f64).sqrt()).ceil() as usize;
    let side = r + 1;
    let cells = side.pow(d as u32);
    let mut strides = vec![1usize; d];
    for i in 1..d {
        strides[i] = strides[i - 1] * side;
    }
    let mut cur = vec![0.0f64; cells];
    let mut next = vec![0.0f64; cells];
    cur[0] = 1.0;
    let inv = 1.0 / (2 * d + 1) as f64;
    let mut probs = Vec::with_capacity(n);
    let mut coords = vec![0usize; d];
    for m in 1..=n {
        let reach = m.min(r);
        next.iter_mut().for_each(|v| *v = 0.0);
        coords.iter_mut().for_each(|c| *c = 0);
        'cells: loop {
            let idx: usize = coords.iter().zip(&strides).map(|(c, s)| c * s).sum();
            let mut v = cur[idx];
            for i in 0..d {
                let c = coords[i];
                let up = if c < r { cur[idx + strides[i]] } else { 0.0 };
                let down = if c > 0 { cur[idx - strides[i]] } else { up };
                v += up + down;
            }
            next[idx] = v * inv;
            for i in 0..d {
                if coords[i] < reach {
                    coords[i] += 1;
                    continue 'cells;
                }
                coords[i] = 0;
            }
            break;
        }
        std::mem::swap(&mut cur, &mut next);
        probs.push(cur[0]);
    }
    // Mass left in the box, each orthant cell standing for 2^{#nonzero} sites.
    let mut mass = 0.0;
    for (idx, v) in cur.iter().enumerate() {
        let nonzero = (0..d).filter(|&i| (idx / strides[i]) % side != 0).count();
        mass += v * (1u64 << nonzero) as f64;
    }
    (probs, (1.0 - mass).abs())
}

/// Fit `P(m) m^{d/2} = a + b/m` on `m ∈ [N/2, N]`.
fn fit_amplitude(d: usize, probs: &[f64]) -> (f64, f64) {
    let n = probs.len();
    let lo = (n / 2).max(1);
    let pts: Vec<(f64, f64)> = (lo..=n)
        .map(|m| (1.0 / m as f64, probs[m - 1] * (m as f64).powf(d as f64 / 2.0)))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// `2A ∫_N^∞ m^{-d/2} dm`.
fn certified_tail(d: usize, n: usize, amplitude: f64) -> f64 {
    let e = d as f64 / 2.0 - 1.0;
    2.0 * amplitude * (n as f64).powf(-e) / e
}

/// `P_0(S(m) = 0)` for `m = 1..=N`.
pub fn return_probabilities(d: usize, n: usize, method: GreenMethod) -> Result<ReturnSeries> {
    if d < 3 {
        return Err(Error::invalid("d", format!("the walk is recurrent in d = {d}; need d >= 3")));
    }
    if n == 0 {
        return Err(Error::invalid("N", "need at least one term"));
    }
    let (probs, numeric_error) = match method {
        GreenMethod::Quadrature => by_quadrature(d, n)?,
        GreenMethod::Convolution => by_convolution(d, n),
    };
    let (a, _) = fit_amplitude(d, &probs);
    let truncation_tail = certified_tail(d, n, a.max(0.0));
    Ok(ReturnSeries {
        d,
        probs,
        truncation_tail,
        numeric_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenConstant {
    pub d: usize,
    /// Partial sum plus the fitted estimate of the remainder.
    pub value: f64,
    pub partial_sum: f64,
    pub tail_estimate: f64,
    /// Certified bound on the remainder; `|value - c_d| <= tail_bound`.
    pub tail_bound: f64,
    pub terms: usize,
}

/// Largest number of terms `c_d` will compute before giving up on `tol`.
pub const MAX_TERMS: usize = 4096;

pub fn c_d(d: usize, tol: f64) -> Result<GreenConstant> {
    c_d_with_budget(d, tol, MAX_TERMS)
}

/// [`c_d`] with an explicit cap on the number of terms.
pub fn c_d_with_budget(d: usize, tol: f64, max_terms: usize) -> Result<GreenConstant> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    let mut n = 64;
    loop {
        let s = return_probabilities(d, n, GreenMethod::Quadrature)?;
        if s.truncation_tail <= tol || n * 2 > max_terms {
            if s.truncation_tail > tol {
                return Err(Error::ToleranceUnreachable {
                    tol,
                    max_terms,
                    bound: s.truncation_tail,
                });
            }
            let (a, b) = fit_amplitude(d, &s.probs);
            // Σ_{m>N} (a m^{-d/2} + b m^{-d/2-1}) by the midpoint integral.
            let h = d as f64 / 2.0;
            let x = n as f64 + 0.5;
            let tail = a * x.powf(1.0 - h) / (h - 1.0) + b * x.powf(-h) / h;
            let partial = s.partial_sum(n);
            return Ok(GreenConstant {
                d,
                value: partial + tail,
                partial_sum: partial,
                tail_estimate: tail,
                tail_bound: s.truncation_tail,
                terms: n,
            });
        }
        n *= 2;
    }
}

/// Tolerance used by [`green_table`].
pub const DEFAULT_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenTable {
    pub d: usize,
    pub c_d: f64,
    pub gamma0: f64,
    pub terms: usize,
    pub tail_bound: f64,
}

impl GreenTable {
    pub fn save(tables: &[GreenTable], path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(tables).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vec<GreenTable>> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))
    }
}

/// `c_d` and `γ_0` at [`DEFAULT_TOL`], memoised per dimension.
pub fn green_table(d: usize) -> Result<GreenTable> {
    static CACHE: OnceLock<Mutex<HashMap<usize, GreenTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&d) {
        return Ok(*t);
    }
    let c = c_d(d, DEFAULT_TOL)?;
    let t = GreenTable {
        d,
        c_d: c.value,
        gamma0: 1.0 / (1.0 + c.value),
        terms: c.terms,
        tail_bound: c.tail_bound,
    };
    cache.lock().unwrap().insert(d, t);
    Ok(t)
}

/// `γ_0 = P_0(S(k) ≠ 0 for all k > 0) = 1/(1 + c_d)`.
pub fn escape_probability(d: usize) -> Result<f64> {
    Ok(green_table(d)?.gamma0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Full-lattice convolution with no symmetry reduction, d = 3.
    fn brute_force_returns(m_max: usize) -> Vec<f64> {
        let r = m_max as i64;
        let side = (2 * r + 1) as usize;
        let idx = |x: i64, y: i64, z: i64| ((x + r) as usize * side + (y + r) as usize) * side + (z + r) as usize;
        let mut cur = vec![0.0; side * side * side];
        cur[idx(0, 0, 0)] = 1.0;
        let moves = [(0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
        let mut out = Vec::new();
        for _ in 0..m_max {
            let mut next = vec![0.0; cur.len()];
            for x in -r..=r {
                for y in -r..=r {
                    for z in -r..=r {
                        let v = cur[idx(x, y, z)];
                        if v == 0.0 {
                            continue;
                        }
                        for &(a, b, c) in &moves {
                            let (p, q, s) = (x + a, y + b, z + c);
                            if p.abs() <= r && q.abs() <= r && s.abs() <= r {
                                next[idx(p, q, s)] += v / 7.0;
                            }
                        }
                    }
                }
            }
            cur = next;
            out.push(cur[idx(0, 0, 0)]);
        }
        out
    }

    /// `e^{-x} I_0(x)`.
    fn scaled_i0(x: f64) -> f64 {
        if x < 30.0 {
            let mut term = 1.0;
            let mut sum = 1.0;
            let q = x * x / 4.0;
            for k in 1..200 {
                term *= q / (k as f64 * k as f64);
                sum += term;
                if term < 1e-17 * sum {
                    break;
                }
            }
            sum * (-x).exp()
        } else {
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..10 {
                let o = (2 * k - 1) as f64;
                term *= o * o / (k as f64 * 8.0 * x);
                sum += term;
            }
            sum / (2.0 * std::f64::consts::PI * x).sqrt()
        }
    }

    /// `1 + c_d = ∫_0^∞ (e^{-bt} I_0(bt))^d dt` with `b = 2/(2d+1)`, from
    /// `1/(1-φ) = ∫ e^{-t(1-φ)} dt`; integrated in `t = e^u` by Simpson.
    fn green_via_bessel(d: usize) -> f64 {
        let b = 2.0 / (2 * d + 1) as f64;
        let (lo, hi, steps) = (-30.0f64, 90.0f64, 24_000usize);
        let h = (hi - lo) / steps as f64;
        let f = |u: f64| {
            let t = u.exp();
            scaled_i0(b * t).powi(d as i32) * t
        };
        let mut s = f(lo) + f(hi);
        for i in 1..steps {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7, 0.0, 2.0);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(13)).sum();
        assert!((int - 2f64.powi(14) / 14.0).abs() < 1e-9);
    }

    #[test]
    fn first_terms() {
        for method in [GreenMethod::Quadrature, GreenMethod::Convolution] {
            let s = return_probabilities(3, 4, method).unwrap();
            assert!((s.prob(1) - 1.0 / 7.0).abs() < 1e-14);
            assert!((s.prob(2) - 1.0 / 7.0).abs() < 1e-14);
        }
        assert!(return_probabilities(2, 10, GreenMethod::Quadrature).is_err());
    }

    #[test]
    fn methods_match_brute_force() {
        let exact = brute_force_returns(30);
        let q = return_probabilities(3, 30, GreenMethod::Quadrature).unwrap();
        let c = return_probabilities(3, 30, GreenMethod::Convolution).unwrap();
        for m in 1..=30 {
            let e = exact[m - 1];
            assert!((q.prob(m) - e).abs() < 1e-12 * e, "quadrature m={m}");
            assert!((c.prob(m) - e).abs() < 1e-12 * e, "convolution m={m}");
        }
    }

    #[test]
    fn methods_agree_to_hundred() {
        for d in [3, 4] {
            let q = return_probabilities(d, 100, GreenMethod::Quadrature).unwrap();
            let c = return_probabilities(d, 100, GreenMethod::Convolution).unwrap();
            assert!(c.numeric_error < 1e-9);
            for m in 1..=100 {
                assert!((q.prob(m) - c.prob(m)).abs() < 1e-6 * c.prob(m), "d={d} m={m}");
            }
        }
    }

    #[test]
    fn power_law_decay() {
        let s = return_probabilities(3, 1000, GreenMethod::Quadrature).unwrap();
        let pts: Vec<(f64, f64)> = (100..=1000).map(|m| ((m as f64).ln(), s.prob(m).ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 1.5).abs() < 0.05, "{slope}");
        let partial: Vec<f64> = (1..=1000).map(|k| s.partial_sum(k)).collect();
        assert!(partial.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn constants_match_bessel_integral() {
        for d in [3, 4] {
            let c = c_d(d, DEFAULT_TOL).unwrap();
            let oracle = green_via_bessel(d) - 1.0;
            assert!((c.value - oracle).abs() <= c.tail_bound);
            assert!((c.value - oracle).abs() < 1e-4 * oracle, "d={d}: {} vs {oracle}", c.value);
        }
        let c3 = c_d(3, DEFAULT_TOL).unwrap().value;
        let c4 = c_d(4, DEFAULT_TOL).unwrap().value;
        assert!(c4 < c3);
        let g = escape_probability(3).unwrap();
        assert!(g > 0.0 && g < 1.0);
    }

    #[test]
    fn termwise_domination() {
        let s3 = return_probabilities(3, 300, GreenMethod::Quadrature).unwrap();
        let s4 = return_probabilities(4, 300, GreenMethod::Quadrature).unwrap();
        // Equal at m = 1? 1/7 vs 1/9, so strict from the start.
        for m in 1..=300 {
            assert!(s4.prob(m) < s3.prob(m));
        }
    }

    #[test]
    fn unreachable_tolerance_reported() {
        assert!(matches!(c_d_with_budget(3, 1e-6, 256), Err(Error::ToleranceUnreachable { .. })));
        assert!(c_d(3, 0.0).is_err());
    }

    #[test]
    fn table_round_trip() {
        let t = green_table(3).unwrap();
        let dir = std::env::temp_dir().join(format!("green-{}.json", std::process::id()));
        GreenTable::save(&[t], &dir).unwrap();
        assert_eq!(GreenTable::load(&dir).unwrap(), vec![t]);
        let _ = std::fs::remove_file(dir);
    }
}
