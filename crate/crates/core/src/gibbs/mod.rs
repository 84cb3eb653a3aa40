//! The annealed Gibbs measure `∝ e^{-βH_n}` for `±1` charges.

mod chain;
mod thermo;

pub use chain::{
    exact_gibbs, log_weight, mcmc_step, walk_code, ExactGibbs, GibbsChainState, GibbsConfig, AUDIT_EVERY, MAX_DIM,
    SUFFIX_PROB,
};
pub use thermo::{
    log_partition, mean_energy, phase_scan, ChainBudget, EnergyEstimate, LogPartition, PhaseObservables, BURN_IN,
};
