//! Experiment configuration files (TOML).
//!
//! ```toml
//! kind = "tails_scan"        # identity_suite | oracle_compare | level_sets | green
//!                            # | tails_scan | gibbs_scan | conjecture_probe
//! seed = 7                   # master seed, default 0
//! workers = 1                # default: all cores
//! out = "runs/tails"         # default: results/<kind>
//!
//! [model]
//! n = [1024, 4096]
//! d = [3]
//! distribution = ["rademacher"]   # rademacher | standard_gaussian | centered_uniform
//! xi = [2.0, 4.0, 8.0]
//! method = "strategy"        # tails_scan: strategy | tilted | naive | d2 | folded
//!
//! [budget]
//! samples = 1000
//! ```
//!
//! Unknown keys are errors. Which grids must be nonempty depends on `kind`.

use polymer_core::charge::ChargeDistribution;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: `{field}` {reason}")]
    Invalid { path: String, field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    IdentitySuite,
    OracleCompare,
    LevelSets,
    Green,
    TailsScan,
    GibbsScan,
    ConjectureProbe,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::IdentitySuite => "identity_suite",
            Kind::OracleCompare => "oracle_compare",
            Kind::LevelSets => "level_sets",
            Kind::Green => "green",
            Kind::TailsScan => "tails_scan",
            Kind::GibbsScan => "gibbs_scan",
            Kind::ConjectureProbe => "conjecture_probe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    Naive,
    Strategy,
    Tilted,
    D2,
    Folded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default = "default_d")]
    pub d: Vec<usize>,
    #[serde(default = "default_dist")]
    pub distribution: Vec<ChargeDistribution>,
    /// Threshold scale: `x = ξ n^{2/3}` (naive, strategy, tilted), `x = ξ n`
    /// (folded), or `ξ_n` itself (d2).
    #[serde(default)]
    pub xi: Vec<f64>,
    /// If set, `ξ_n = n^{xi_exponent}` replaces the `xi` grid.
    pub xi_exponent: Option<f64>,
    pub method: Option<TailMethod>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default = "default_ab")]
    pub a: Vec<f64>,
    #[serde(default = "default_ab")]
    pub b: Vec<f64>,
    #[serde(default)]
    pub y: Vec<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    #[serde(default = "default_scaling")]
    pub scaling: f64,
    /// gibbs_scan: also integrate `log Z` from 0 to each `β`.
    #[serde(default)]
    pub log_partition: bool,
}

fn default_d() -> Vec<usize> {
    vec![3]
}
fn default_dist() -> Vec<ChargeDistribution> {
    vec![ChargeDistribution::Rademacher]
}
fn default_ab() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}
fn default_lambda() -> f64 {
    0.05
}
fn default_delta0() -> f64 {
    0.9
}
fn default_scaling() -> f64 {
    0.4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_walks")]
    pub walks: usize,
    #[serde(default = "d_particles")]
    pub particles: usize,
    #[serde(default = "d_replicates")]
    pub replicates: usize,
    #[serde(default = "d_chains")]
    pub chains: usize,
    #[serde(default = "d_chain_steps")]
    pub chain_steps: u64,
    #[serde(default = "d_thin")]
    pub thin: u64,
}

fn d_samples() -> usize {
    10_000
}
fn d_walks() -> usize {
    100
}
fn d_particles() -> usize {
    300
}
fn d_replicates() -> usize {
    10
}
fn d_chains() -> usize {
    2
}
fn d_chain_steps() -> u64 {
    20_000
}
fn d_thin() -> u64 {
    10
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            samples: d_samples(),
            walks: d_walks(),
            particles: d_particles(),
            replicates: d_replicates(),
            chains: d_chains(),
            chain_steps: d_chain_steps(),
            thin: d_thin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub model: Model,
    #[serde(default)]
    pub budget: Budget,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: shown.clone(),
            source,
        })?;
        Self::from_toml(&text, &shown)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results").join(self.kind.name()))
    }

    fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let bad = |field: &'static str, reason: &str| ConfigError::Invalid {
            path: path.to_string(),
            field,
            reason: reason.to_string(),
        };
        let m = &self.model;
        let b = &self.budget;
        if self.workers == Some(0) {
            return Err(bad("workers", "must be positive"));
        }
        if b.samples == 0 || b.walks == 0 || b.particles == 0 || b.replicates == 0 || b.chains == 0 || b.chain_steps < 10 || b.thin == 0 {
            return Err(bad("budget", "every budget entry must be positive (chain_steps >= 10)"));
        }
        if m.d.is_empty() || m.distribution.is_empty() {
            return Err(bad("model.d", "grid must be nonempty"));
        }
        if m.d.iter().any(|&d| d == 0 || d > 8) {
            return Err(bad("model.d", "dimensions must lie in 1..=8"));
        }
        if self.kind != Kind::Green && m.n.is_empty() {
            return Err(bad("model.n", "grid must be nonempty"));
        }
        if m.n.iter().any(|&n| n < 2) {
            return Err(bad("model.n", "needs at least 2 monomers"));
        }
        match self.kind {
            Kind::TailsScan => {
                if m.method.is_none() {
                    return Err(bad("model.method", "is required for tails_scan"));
                }
                if m.xi.is_empty() && m.xi_exponent.is_none() {
                    return Err(bad("model.xi", "grid must be nonempty (or set xi_exponent)"));
                }
                if m.xi.iter().any(|&x| !(x > 0.0)) {
                    return Err(bad("model.xi", "values must be positive"));
                }
            }
            Kind::GibbsScan => {
                if m.beta.is_empty() || m.beta.iter().any(|&b| !(b >= 0.0)) {
                    return Err(bad("model.beta", "grid must be nonempty and >= 0"));
                }
                if m.a.is_empty() || m.b.is_empty() || m.a.iter().any(|&a| !(a > 1.0)) || m.b.iter().any(|&b| !(b > 0.0)) {
                    return Err(bad("model.a", "a > 1 and b > 0 grids must be nonempty"));
                }
            }
            Kind::ConjectureProbe => {
                if m.y.is_empty() || m.y.iter().any(|&y| !(y >= 1.0)) {
                    return Err(bad("model.y", "grid must be nonempty and >= 1"));
                }
            }
            Kind::OracleCompare => {
                if m.n.iter().any(|&n| n > 6) {
                    return Err(bad("model.n", "exact enumeration needs n <= 6"));
                }
            }
            Kind::Green => {
                if m.d.iter().any(|&d| d < 3) {
                    return Err(bad("model.d", "the Green function needs d >= 3"));
                }
            }
            Kind::IdentitySuite | Kind::LevelSets => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml("kind = \"green\"\n[model]\nd = [3, 4]\n", "t.toml").unwrap();
        assert_eq!(c.kind, Kind::Green);
        assert_eq!(c.seed, 0);
        assert_eq!(c.budget, Budget::default());
        assert_eq!(c.out_dir(), PathBuf::from("results/green"));
    }

    #[test]
    fn rejects_unknown_keys_and_empty_grids() {
        assert!(ExperimentConfig::from_toml("kind = \"green\"\ncolour = 1\n[model]\n", "t").is_err());
        assert!(ExperimentConfig::from_toml("kind = \"nope\"\n[model]\n", "t").is_err());
        let e = ExperimentConfig::from_toml("kind = \"tails_scan\"\n[model]\nn = [64]\nmethod = \"naive\"\n", "t");
        assert!(matches!(e, Err(ConfigError::Invalid { field: "model.xi", .. })));
        let e = ExperimentConfig::from_toml("kind = \"level_sets\"\n[model]\nn = [10]\n[budget]\nwalks = 0\n", "t");
        assert!(matches!(e, Err(ConfigError::Invalid { field: "budget", .. })));
    }
}
