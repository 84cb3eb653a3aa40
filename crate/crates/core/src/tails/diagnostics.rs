//! Report-only diagnostics: the Nagaev-type envelope for sums of centred
//! unit-variance variables and a probe of the level-set conjecture
//! `P₀(|{z : l_n(z) >= y}| >= y^{d/2})`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::{Method, TailEstimate};
use crate::tails::tilted::walk_histograms;

/// `C_Y (n·tail(t/2) + exp(-t²/(20n)))`.
pub fn nagaev_envelope(n: usize, t: f64, c_y: f64, tail: impl Fn(f64) -> f64) -> f64 {
    let n = n as f64;
    c_y * (n * tail(t / 2.0) + (-t * t / (20.0 * n)).exp())
}

fn check_probe(n: usize, d: usize, y: f64) -> Result<()> {
    if !(y >= 1.0) || y.powf(1.0 + d as f64 / 2.0) > n as f64 {
        return Err(Error::invalid("y", format!("need 1 <= y and y^(1+d/2) <= n = {n}, got y = {y}")));
    }
    Ok(())
}

/// Estimate `P₀(|{z : l_n(z) >= y}| >= y^{d/2})`.
pub fn conjecture_probe<R: Rng + ?Sized>(n: usize, d: usize, y: f64, samples: usize, rng: &mut R) -> Result<TailEstimate> {
    Ok(conjecture_scan(n, d, &[y], samples, rng)?.remove(0))
}

/// [`conjecture_probe`] for several `y` on the same walks, so the estimates
/// are non-increasing in `y` sample by sample.
pub fn conjecture_scan<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    ys: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<TailEstimate>> {
    for &y in ys {
        check_probe(n, d, y)?;
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    let hist = walk_histograms(n, d, samples, rng)?;
    Ok(ys
        .iter()
        .map(|&y| {
            let need = y.powf(d as f64 / 2.0);
            let hits = hist
                .iter()
                .filter(|h| {
                    let above: u64 = h.iter().enumerate().filter(|&(k, _)| k as f64 >= y).map(|(_, &c)| c).sum();
                    above as f64 >= need
                })
                .count();
            TailEstimate::from_hits(hits as u64, samples as u64, Method::Conjecture)
        })
        .collect())
}
