use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration count after which updates are guaranteed below `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaIterations {
    /// `ceil(log(1 - beta / theta_sum) / log(u))`; 0 when vacuous.
    pub iterations: u64,
    pub theta_sum: f64,
    /// `beta >= theta_sum`: every iteration already satisfies the bound.
    pub vacuous: bool,
    /// The count is not representable (beta at or just below theta_sum).
    pub overflow: bool,
}

/// Worst-case iterations for `beta`-convergence from the summed bounds on
/// per-environment weighted update magnitudes.
pub fn beta_iterations(beta: f64, u: f64, theta: &[Vec<f64>]) -> Result<BetaIterations> {
    if !(beta > 0.0) {
        return Err(Error::Validation("beta must be positive".into()));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Validation(format!("update ratio {u} not in (0,1)")));
    }
    let theta_sum: f64 = theta.iter().flatten().sum();
    if theta.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Validation("theta values must be finite and non-negative".into()));
    }
    if beta >= theta_sum {
        return Ok(BetaIterations {
            iterations: 0,
            theta_sum,
            vacuous: true,
            overflow: false,
        });
    }
    let raw = (1.0 - beta / theta_sum).ln() / u.ln();
    let overflow = !raw.is_finite() || raw >= u64::MAX as f64;
    Ok(BetaIterations {
        iterations: if overflow { u64::MAX } else { raw.ceil() as u64 },
        theta_sum,
        vacuous: false,
        overflow,
    })
}
