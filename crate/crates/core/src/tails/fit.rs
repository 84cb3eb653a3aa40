//! Ordinary least-squares exponent fits with a jackknife confidence interval.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScale {
    /// `ln y` against `ln x`: power-law exponents.
    LogLog,
    /// `ln y` against `x`.
    LogLinear,
    /// `y` against `x`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub scale: FitScale,
    /// Transformed coordinates actually regressed.
    pub abscissas: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Half-width of the 95% jackknife interval on the slope.
    pub half_width: f64,
    /// Residual sum of squares.
    pub residual: f64,
}

impl ExponentFit {
    pub fn covers(&self, value: f64) -> bool {
        (self.slope - value).abs() <= self.half_width
    }
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fit `points = [(scale, value)]` in the requested coordinates.
pub fn exponent_fit(points: &[(f64, f64)], scale: FitScale) -> Result<ExponentFit> {
    let k = points.len();
    let mut x = Vec::with_capacity(k);
    let mut y = Vec::with_capacity(k);
    for &(a, b) in points {
        let (u, v) = match scale {
            FitScale::LogLog => (a.ln(), b.ln()),
            FitScale::LogLinear => (a, b.ln()),
            FitScale::Linear => (a, b),
        };
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::invalid("points", format!("({a}, {b}) has no finite image on a {scale:?} scale")));
        }
        x.push(u);
        y.push(v);
    }
    let mut distinct = x.clone();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if k < 4 || distinct.len() < 3 {
        return Err(Error::DegenerateFit { needed: 4, got: k.min(distinct.len()) });
    }
    let (slope, intercept) = ols(&x, &y);
    let residual = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();

    let loo: Vec<f64> = (0..k)
        .map(|i| {
            let xs: Vec<f64> = x.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).collect();
            let ys: Vec<f64> = y.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| *v).collect();
            ols(&xs, &ys).0
        })
        .collect();
    let mean = loo.iter().sum::<f64>() / k as f64;
    let se = ((k - 1) as f64 / k as f64 * loo.iter().map(|s| (s - mean).powi(2)).sum::<f64>()).sqrt();
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64).expect("df >= 3").inverse_cdf(0.975);
    Ok(ExponentFit {
        scale,
        abscissas: x,
        ordinates: y,
        slope,
        intercept,
        half_width: t * se,
        residual,
    })
}
