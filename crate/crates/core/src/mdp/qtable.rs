use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmin_lowest, ActionId, StateId};
use crate::error::{Error, Result};

/// One observed transition `(s, a, s', c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: StateId,
    pub action: ActionId,
    pub next_state: StateId,
    pub cost: f64,
}

impl Sample {
    pub fn new(state: StateId, action: ActionId, next_state: StateId, cost: f64) -> Self {
        Self {
            state,
            action,
            next_state,
            cost,
        }
    }
}

/// Per-state set of admissible actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    n_states: usize,
    n_actions: usize,
    bits: Vec<bool>,
}

impl ActionMask {
    pub fn all(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            bits: vec![true; n_states * n_actions],
        }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(StateId, ActionId) -> bool) -> Self {
        let mut bits = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                bits.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            bits,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn is_valid(&self, s: StateId, a: ActionId) -> bool {
        self.bits[s * self.n_actions + a]
    }

    pub fn valid_actions(&self, s: StateId) -> Vec<ActionId> {
        (0..self.n_actions).filter(|&a| self.is_valid(s, a)).collect()
    }
}

/// Dense table of action-values, `|S| x |A|`, row-major.
///
/// An optional [`ActionMask`] restricts every `min`/`argmin` to admissible
/// actions; masked entries are never written by the learning updates.
#[derive(Debug, Clone)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    values: Vec<f64>,
    mask: Option<Arc<ActionMask>>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize, gamma: f64) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Shape(format!("empty table {n_states}x{n_actions}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Validation(format!("discount {gamma} not in [0,1)")));
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            values: vec![0.0; n_states * n_actions],
            mask: None,
        })
    }

    /// Table filled with i.i.d. uniform values in `[0, scale]`.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut table = Self::zeros(n_states, n_actions, gamma)?;
        for v in &mut table.values {
            *v = rng.random::<f64>() * scale;
        }
        Ok(table)
    }

    pub fn from_values(n_states: usize, n_actions: usize, gamma: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "{} values for a {n_states}x{n_actions} table",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("q-table values"));
        }
        let mut table = Self::zeros(n_states, n_actions, gamma)?;
        table.values = values;
        Ok(table)
    }

    pub fn with_mask(mut self, mask: Arc<ActionMask>) -> Result<Self> {
        if mask.n_states() != self.n_states || mask.n_actions() != self.n_actions {
            return Err(Error::Shape("action mask does not match table".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn mask(&self) -> Option<&Arc<ActionMask>> {
        self.mask.as_ref()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, s: StateId, a: ActionId) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: StateId, a: ActionId, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: StateId) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn is_valid(&self, s: StateId, a: ActionId) -> bool {
        self.mask.as_ref().is_none_or(|m| m.is_valid(s, a))
    }

    pub fn valid_actions(&self, s: StateId) -> Vec<ActionId> {
        (0..self.n_actions).filter(|&a| self.is_valid(s, a)).collect()
    }

    /// Greedy action with the lowest-index tie-break, among valid actions.
    pub fn argmin(&self, s: StateId) -> Option<ActionId> {
        self.argmin_with_value(s).map(|(a, _)| a)
    }

    pub fn argmin_with_value(&self, s: StateId) -> Option<(ActionId, f64)> {
        let row = self.row(s);
        argmin_lowest(
            row.iter()
                .copied()
                .enumerate()
                .filter(|&(a, _)| self.is_valid(s, a)),
        )
    }

    /// `min_a Q(s, a)` over valid actions; `+inf` if none is valid.
    pub fn min_value(&self, s: StateId) -> f64 {
        self.argmin_with_value(s).map_or(f64::INFINITY, |(_, v)| v)
    }

    pub(crate) fn check_index(&self, s: StateId, a: ActionId) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::index("state", s, self.n_states));
        }
        if a >= self.n_actions {
            return Err(Error::index("action", a, self.n_actions));
        }
        Ok(())
    }

    /// Moves `Q(s,a)` toward `target` with step `alpha`; returns the TD error
    /// `target - Q(s,a)` measured before the move.
    pub fn blend_toward(&mut self, s: StateId, a: ActionId, target: f64, alpha: f64) -> Result<f64> {
        self.check_index(s, a)?;
        if !target.is_finite() || !alpha.is_finite() {
            return Err(Error::NonFinite("q-update target"));
        }
        let idx = s * self.n_actions + a;
        let old = self.values[idx];
        let new = (1.0 - alpha) * old + alpha * target;
        if !new.is_finite() {
            return Err(Error::NonFinite("q-update result"));
        }
        self.values[idx] = new;
        Ok(target - old)
    }

    /// Largest absolute entrywise difference to `other`.
    pub fn sup_distance(&self, other: &QTable) -> Result<f64> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Shape("q-table dimensions differ".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Sup-norm distance restricted to valid entries.
    pub fn sup_distance_valid(&self, other: &QTable) -> Result<f64> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Shape("q-table dimensions differ".into()));
        }
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                if self.is_valid(s, a) {
                    worst = worst.max((self.get(s, a) - other.get(s, a)).abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn sup_norm_valid(&self) -> f64 {
        let mut worst = 0.0f64;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                if self.is_valid(s, a) {
                    worst = worst.max(self.get(s, a).abs());
                }
            }
        }
        worst
    }
}

/// Standard tabular Q-learning step:
/// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (c + gamma min_a' Q(s',a'))`.
///
/// Returns the TD error. The minimum over next actions respects the table's
/// action mask.
pub fn q_update(table: &mut QTable, sample: &Sample, alpha: f64) -> Result<f64> {
    table.check_index(sample.state, sample.action)?;
    if sample.next_state >= table.n_states {
        return Err(Error::index("next state", sample.next_state, table.n_states));
    }
    if !sample.cost.is_finite() {
        return Err(Error::NonFinite("sample cost"));
    }
    let next = table.min_value(sample.next_state);
    if !next.is_finite() {
        return Err(Error::NoValidAction {
            state: sample.next_state,
        });
    }
    let target = sample.cost + table.gamma * next;
    table.blend_toward(sample.state, sample.action, target, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_table_zero_cost_is_fixed_point() {
        let mut t = QTable::zeros(3, 2, 0.9).unwrap();
        q_update(&mut t, &Sample::new(0, 1, 2, 0.0), 0.3).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_step_no_discount_collapses_to_cost() {
        let mut t = QTable::zeros(2, 2, 0.0).unwrap();
        q_update(&mut t, &Sample::new(0, 1, 1, 5.0), 1.0).unwrap();
        assert_eq!(t.get(0, 1), 5.0);
    }

    #[test]
    fn hand_evaluated_update() {
        let mut t = QTable::zeros(2, 2, 0.9).unwrap();
        t.set(0, 0, 4.0);
        t.set(1, 0, 2.0);
        t.set(1, 1, 3.0);
        q_update(&mut t, &Sample::new(0, 0, 1, 1.0), 0.5).unwrap();
        let expected = 0.5 * 4.0 + 0.5 * (1.0 + 0.9 * 2.0);
        assert!((t.get(0, 0) - expected).abs() < 1e-15);
        // untouched entries
        assert_eq!(t.get(1, 0), 2.0);
        assert_eq!(t.get(1, 1), 3.0);
        assert_eq!(t.get(0, 1), 0.0);
    }

    #[test]
    fn out_of_range_and_non_finite_rejected() {
        let mut t = QTable::zeros(2, 2, 0.9).unwrap();
        assert!(matches!(
            q_update(&mut t, &Sample::new(2, 0, 0, 1.0), 0.5),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            q_update(&mut t, &Sample::new(0, 3, 0, 1.0), 0.5),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            q_update(&mut t, &Sample::new(0, 0, 5, 1.0), 0.5),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            q_update(&mut t, &Sample::new(0, 0, 1, f64::NAN), 0.5),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn masked_min_ignores_invalid_actions() {
        let mask = Arc::new(ActionMask::from_fn(2, 3, |_, a| a != 0));
        let mut t = QTable::zeros(2, 3, 0.5).unwrap().with_mask(mask).unwrap();
        t.set(1, 0, -100.0);
        t.set(1, 1, 4.0);
        t.set(1, 2, 2.0);
        assert_eq!(t.argmin(1), Some(2));
        assert_eq!(t.min_value(1), 2.0);
    }

    #[test]
    fn bad_discount_rejected() {
        assert!(QTable::zeros(1, 1, 1.0).is_err());
        assert!(QTable::zeros(1, 1, -0.1).is_err());
        assert!(QTable::zeros(1, 1, f64::NAN).is_err());
    }
}
