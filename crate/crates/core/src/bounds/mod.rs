//! Analytical bounds: ensemble estimation variance, iterations to
//! beta-convergence, and the probability of misclassifying the coordination
//! regime under noisy ARSS readings.

mod convergence;
mod misdetection;
mod variance;

pub use convergence::{beta_iterations, BetaIterations};
pub use misdetection::{
    golden_section_min, lower_bound_curve, lower_expression, monte_carlo_pmis, optimal_threshold,
    pmis_bounds_general, pmis_bounds_two_agents, threshold_grid, upper_expression, ClassCounts, GeneralBounds,
    MisdetectionInput, ThresholdChoice, TwoAgentBounds,
};
pub use variance::{
    empirical_variance, estimate_lambda, variance_bound_asymptotic, variance_bound_finite_t, VarianceBound,
    VarianceEnvelope, VarianceTrace,
};
