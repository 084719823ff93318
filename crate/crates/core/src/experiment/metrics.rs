use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Average policy error: fraction of states where the two policies differ.
pub fn ape<A: PartialEq>(policy: &[A], oracle: &[A]) -> Result<f64> {
    if policy.len() != oracle.len() || policy.is_empty() {
        return Err(Error::Shape(format!(
            "policies over {} and {} states",
            policy.len(),
            oracle.len()
        )));
    }
    let differ = policy.iter().zip(oracle).filter(|(a, b)| a != b).count();
    Ok(differ as f64 / policy.len() as f64)
}

/// Average Q-function distance: mean squared entrywise difference.
pub fn aqd(values: &[f64], oracle: &[f64]) -> Result<f64> {
    if values.len() != oracle.len() || values.is_empty() {
        return Err(Error::Shape(format!(
            "tables with {} and {} entries",
            values.len(),
            oracle.len()
        )));
    }
    let sum: f64 = values.iter().zip(oracle).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / values.len() as f64)
}

/// First snapshot iteration whose value is below `threshold`.
pub fn first_below(series: &[(u64, f64)], threshold: f64) -> Option<u64> {
    series.iter().find(|(_, v)| *v < threshold).map(|(t, _)| *t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std, n }
}

/// Least-squares line `y = slope x + intercept` with its R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Shape("linear fit needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation("linear fit with constant x".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ape_counts_disagreements() {
        assert_eq!(ape(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(ape(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), 1.0);
        let a: Vec<usize> = (0..100).collect();
        let mut b = a.clone();
        b[37] = 0;
        assert_eq!(ape(&a, &b).unwrap(), 0.01);
        assert!(ape(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn aqd_is_mean_squared_gap() {
        assert_eq!(aqd(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(aqd(&[3.0, 4.0, 5.0], &[1.0, 2.0, 3.0]).unwrap(), 4.0);
        assert!(aqd(&[], &[]).is_err());
    }

    #[test]
    fn fit_recovers_line() {
        let x = [2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn summary_statistics() {
        let s = mean_std(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]).std, 0.0);
        assert_eq!(first_below(&[(10, 3.0), (20, 0.5), (30, 0.1)], 1.0), Some(20));
        assert_eq!(first_below(&[(10, 3.0)], 1.0), None);
    }
}
