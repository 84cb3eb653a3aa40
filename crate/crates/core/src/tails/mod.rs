//! Lower-tail estimators for `P(X̌_n <= -x)` and `P(H_n <= -x)`.

mod d2;
mod diagnostics;
mod fit;
mod naive;
mod strategy;
mod tilted;

pub use d2::{d2_moderate_strategy, gamma1, log_pair_tail, D2Estimate};
pub use diagnostics::{conjecture_probe, conjecture_scan, nagaev_envelope};
pub use fit::{exponent_fit, ExponentFit, FitScale};
pub use naive::{exact_h_distribution, naive_samples, naive_tail, ExactDistribution, EXACT_BUDGET};
pub use strategy::{
    charge_tail_exact, charge_tail_is, strategy_lower_bound, unit_ball_volume, BallGeometry, ChargeFactor,
    SiteLaw, StrategyBudget, StrategyConfig, StrategyEstimate, EPS_PRIME,
};
pub use tilted::{
    envelope, tilted_bound_from_histograms, tilted_upper_bound, tilted_upper_bound_best, walk_histograms,
    TiltedBound,
};
