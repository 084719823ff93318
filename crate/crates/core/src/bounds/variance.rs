use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite-time variance envelope `f(lambda, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceEnvelope {
    /// `lambda^2 (1 + rho^t)`; `rho = None` uses the update ratio.
    Geometric { rho: Option<f64> },
}

impl Default for VarianceEnvelope {
    fn default() -> Self {
        VarianceEnvelope::Geometric { rho: None }
    }
}

impl VarianceEnvelope {
    pub fn eval(&self, lambda: f64, t: u64, u: f64) -> f64 {
        match *self {
            VarianceEnvelope::Geometric { rho } => {
                let r = rho.unwrap_or(u);
                lambda * lambda * (1.0 + r.powf(t as f64))
            }
        }
    }
}

/// Per-agent terms `f(lambda_i, t) / K_i` and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBound {
    pub terms: Vec<f64>,
    pub total: f64,
}

fn check_inputs(lambdas: &[f64], u: f64) -> Result<()> {
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Validation("error scales must be finite and non-negative".into()));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::Validation(format!("update ratio {u} not in [0,1)")));
    }
    Ok(())
}

/// `sum_i f(lambda_i, t) / K_i`.
pub fn variance_bound_finite_t(
    lambdas: &[f64],
    environments: &[usize],
    u: f64,
    t: u64,
    envelope: VarianceEnvelope,
) -> Result<VarianceBound> {
    check_inputs(lambdas, u)?;
    if lambdas.len() != environments.len() || environments.contains(&0) {
        return Err(Error::Validation("need one positive environment count per agent".into()));
    }
    let terms: Vec<f64> = lambdas
        .iter()
        .zip(environments)
        .map(|(&l, &k)| envelope.eval(l, t, u) / k as f64)
        .collect();
    let total = terms.iter().sum();
    Ok(VarianceBound { terms, total })
}

/// `(1 - u) / (1 + u) * sum_i lambda_i^2`.
pub fn variance_bound_asymptotic(lambdas: &[f64], u: f64) -> Result<f64> {
    check_inputs(lambdas, u)?;
    Ok((1.0 - u) / (1.0 + u) * lambdas.iter().map(|l| l * l).sum::<f64>())
}

/// `sqrt(3)` times the sample standard deviation of the last quarter of an
/// error trace (the uniform-error model has variance `lambda^2 / 3`).
pub fn estimate_lambda(errors: &[f64]) -> Result<f64> {
    let tail = &errors[errors.len() - errors.len() / 4..];
    if tail.len() < 2 {
        return Err(Error::Validation("error trace too short to estimate a scale".into()));
    }
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(3f64.sqrt() * var.sqrt())
}

/// Sliding-window variance trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTrace {
    /// `values[k]` covers the window ending at trace index `k + window - 1`.
    pub values: Vec<f64>,
    pub window: usize,
    /// The requested window exceeded the trace and was shortened.
    pub truncated: bool,
}

/// Mean of squares minus squared mean over each window of `window`
/// consecutive entries.
pub fn empirical_variance(trace: &[f64], window: usize) -> Result<VarianceTrace> {
    if window == 0 || trace.is_empty() {
        return Err(Error::Validation("empty trace or zero window".into()));
    }
    let truncated = window > trace.len();
    let w = window.min(trace.len());
    let mut values = Vec::with_capacity(trace.len() - w + 1);
    let (mut s1, mut s2) = (0.0, 0.0);
    for (k, &x) in trace.iter().enumerate() {
        s1 += x;
        s2 += x * x;
        if k >= w {
            let old = trace[k - w];
            s1 -= old;
            s2 -= old * old;
        }
        if k + 1 >= w {
            let mean = s1 / w as f64;
            values.push((s2 / w as f64 - mean * mean).max(0.0));
        }
    }
    Ok(VarianceTrace {
        values,
        window: w,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn finite_bound_arithmetic_and_scaling() {
        let env = VarianceEnvelope::Geometric { rho: Some(0.0) };
        let b = variance_bound_finite_t(&[1.0, 2.0, 3.0], &[2, 2, 2], 0.5, 5, env).unwrap();
        assert_eq!(b.total, 7.0);
        let doubled = variance_bound_finite_t(&[1.0, 2.0, 3.0], &[4, 4, 4], 0.5, 5, env).unwrap();
        assert_eq!(doubled.total, 3.5);
        let many = variance_bound_finite_t(&[1.0], &[1_000_000_000], 0.5, 1, VarianceEnvelope::default()).unwrap();
        assert!(many.total < 1e-8);
    }

    #[test]
    fn default_envelope_tends_to_lambda_squared() {
        let e = VarianceEnvelope::default();
        assert_eq!(e.eval(2.0, 1, 0.5), 4.0 * 1.5);
        assert!((e.eval(2.0, 200, 0.5) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn asymptotic_bound_values() {
        assert_eq!(variance_bound_asymptotic(&[1.0, 2.0], 0.0).unwrap(), 5.0);
        assert!((variance_bound_asymptotic(&[1.0, 1.0, 1.0], 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(variance_bound_asymptotic(&[1.0], 1.0 - 1e-12).unwrap() < 1e-11);
        assert!(variance_bound_asymptotic(&[1.0], 1.0).is_err());
    }

    #[test]
    fn window_variance_hand_cases() {
        let c = empirical_variance(&[3.0; 10], 4).unwrap();
        assert!(c.values.iter().all(|&v| v.abs() < 1e-12));
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = empirical_variance(&alt, 4).unwrap();
        assert!(a.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let t = empirical_variance(&[1.0, 2.0], 5).unwrap();
        assert!(t.truncated);
        assert_eq!(t.values, vec![0.25]);
    }

    #[test]
    fn window_variance_recovers_white_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 2.0).unwrap();
        let trace: Vec<f64> = (0..5000).map(|_| n.sample(&mut rng)).collect();
        let v = empirical_variance(&trace, 500).unwrap();
        let last = *v.values.last().unwrap();
        assert!((last - 4.0).abs() < 0.6, "{last}");
    }

    #[test]
    fn lambda_estimate_scales_with_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trace: Vec<f64> = (0..4000).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let l = estimate_lambda(&trace).unwrap();
        assert!((l - 1.0).abs() < 0.05, "{l}");
        let scaled: Vec<f64> = trace.iter().map(|x| 7.0 * x).collect();
        assert!((estimate_lambda(&scaled).unwrap() - 7.0 * l).abs() < 1e-9);
    }
}
