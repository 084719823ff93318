use rand::Rng;

use super::{ActionId, QTable, StateId};
use crate::error::{Error, Result};

/// With probability `zeta` a uniformly random valid action, otherwise the
/// greedy (lowest-index) minimizer of `table[s, .]` over valid actions.
pub fn epsilon_greedy<R: Rng + ?Sized>(table: &QTable, s: StateId, zeta: f64, rng: &mut R) -> Result<ActionId> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Validation(format!("exploration rate {zeta} not in [0,1]")));
    }
    if s >= table.n_states() {
        return Err(Error::index("state", s, table.n_states()));
    }
    if zeta > 0.0 && rng.random::<f64>() < zeta {
        let valid = table.valid_actions(s);
        if valid.is_empty() {
            return Err(Error::NoValidAction { state: s });
        }
        return Ok(valid[rng.random_range(0..valid.len())]);
    }
    table.argmin(s).ok_or(Error::NoValidAction { state: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ActionMask;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn greedy_unique_minimizer() {
        let t = QTable::from_values(1, 4, 0.9, vec![3.0, 1.0, 2.0, 4.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&t, 0, 0.0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn greedy_tie_breaks_to_lowest_index() {
        let t = QTable::from_values(1, 4, 0.9, vec![3.0, 1.0, 2.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&t, 0, 0.0, &mut rng).unwrap(), 1);
    }

    #[test]
    fn full_exploration_is_uniform_over_valid() {
        // chi-square goodness of fit, 3 degrees of freedom
        let mask = Arc::new(ActionMask::from_fn(1, 5, |_, a| a != 2));
        let t = QTable::zeros(1, 5, 0.9).unwrap().with_mask(mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[epsilon_greedy(&t, 0, 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[2], 0);
        let expected = n as f64 / 4.0;
        let chi2: f64 = [0, 1, 3, 4]
            .iter()
            .map(|&a| (counts[a] as f64 - expected).powi(2) / expected)
            .sum();
        // p = 0.01 critical value for 3 dof
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn empty_valid_set_is_an_error() {
        let mask = Arc::new(ActionMask::from_fn(1, 2, |_, _| false));
        let t = QTable::zeros(1, 2, 0.9).unwrap().with_mask(mask).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            epsilon_greedy(&t, 0, 1.0, &mut rng),
            Err(Error::NoValidAction { .. })
        ));
        assert!(matches!(
            epsilon_greedy(&t, 0, 0.0, &mut rng),
            Err(Error::NoValidAction { .. })
        ));
    }
}
