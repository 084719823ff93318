use crate::error::{Error, Result};

/// Default smoothing for the running |TD error| statistic.
pub const TD_EMA_DECAY: f64 = 0.99;
/// Regularizer in the inverse-error weights.
pub const WEIGHT_EPS: f64 = 1e-6;

/// Exponential moving average of absolute TD errors for one environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdStatistic {
    pub mean_abs: f64,
    pub decay: f64,
    pub count: u64,
}

impl TdStatistic {
    pub fn new(decay: f64) -> Self {
        Self {
            mean_abs: 0.0,
            decay,
            count: 0,
        }
    }

    /// The first observation initializes the average directly.
    pub fn observe(&mut self, td: f64) {
        let x = td.abs();
        self.mean_abs = if self.count == 0 {
            x
        } else {
            self.decay * self.mean_abs + (1.0 - self.decay) * x
        };
        self.count += 1;
    }
}

/// Inverse-error simplex weights `w_n ∝ 1 / (eps + e_n)`.
pub fn update_weights(mean_abs_td: &[f64], eps: f64) -> Result<Vec<f64>> {
    if mean_abs_td.is_empty() {
        return Err(Error::Validation("no environments to weight".into()));
    }
    if eps <= 0.0 || mean_abs_td.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::Validation("td statistics must be finite and non-negative".into()));
    }
    let raw: Vec<f64> = mean_abs_td.iter().map(|e| 1.0 / (eps + e)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// `u * old + (1 - u) * sum_n w_n q_n`.
pub fn ensemble_value(old: f64, u: f64, weights: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), values.len());
    let mix: f64 = weights.iter().zip(values).map(|(w, q)| w * q).sum();
    u * old + (1.0 - u) * mix
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_errors_give_uniform_weights() {
        let w = update_weights(&[0.3, 0.3, 0.3], WEIGHT_EPS).unwrap();
        assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn zero_error_dominates() {
        let w = update_weights(&[0.0, 0.5], 1e-12).unwrap();
        assert!(w[0] > 1.0 - 1e-10 && w[1] < 1e-10);
    }

    #[test]
    fn hand_normalization() {
        let w = update_weights(&[1.0, 3.0], WEIGHT_EPS).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-6);
        assert!((w[1] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn ensemble_hand_values() {
        assert_eq!(ensemble_value(1.0, 0.5, &[0.5, 0.5], &[2.0, 4.0]), 2.0);
        assert_eq!(ensemble_value(7.0, 0.0, &[1.0], &[3.0]), 3.0);
        assert!((ensemble_value(7.0, 1.0 - 1e-12, &[1.0], &[3.0]) - 7.0).abs() < 1e-10);
    }

    #[test]
    fn ema_first_observation_then_smoothing() {
        let mut s = TdStatistic::new(0.99);
        s.observe(-2.0);
        assert_eq!(s.mean_abs, 2.0);
        s.observe(1.0);
        assert!((s.mean_abs - (0.99 * 2.0 + 0.01)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn weights_live_on_simplex(errs in prop::collection::vec(0.0f64..100.0, 1..8)) {
            let w = update_weights(&errs, WEIGHT_EPS).unwrap();
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn weights_are_permutation_equivariant(
            errs in prop::collection::vec(0.0f64..100.0, 2..8),
            rot in 0usize..8,
        ) {
            let w = update_weights(&errs, WEIGHT_EPS).unwrap();
            let k = rot % errs.len();
            let mut rotated = errs.clone();
            rotated.rotate_left(k);
            let mut wr = update_weights(&rotated, WEIGHT_EPS).unwrap();
            wr.rotate_right(k);
            for (a, b) in w.iter().zip(&wr) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
