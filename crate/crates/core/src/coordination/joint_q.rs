use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, QTable, StateId};
use crate::wireless::JointCodec;

/// The leader's joint Q-table.
///
/// Entries default to the additive value `sum_i Q_i(s_i, a_i)` of the
/// agents' local tables; coordinated updates store explicit overrides.
/// Resetting an entry to the additive value removes its override, so the
/// table never materializes the full joint space.
#[derive(Debug, Clone)]
pub struct JointQTable {
    states: JointCodec,
    actions: JointCodec,
    gamma: f64,
    overrides: HashMap<u64, Vec<(u64, f64)>>,
}

impl JointQTable {
    pub fn new(states: JointCodec, actions: JointCodec, gamma: f64) -> Result<Self> {
        if states.arity() != actions.arity() {
            return Err(Error::Shape("joint state and action arity differ".into()));
        }
        Ok(Self {
            states,
            actions,
            gamma,
            overrides: HashMap::new(),
        })
    }

    pub fn states(&self) -> &JointCodec {
        &self.states
    }

    pub fn actions(&self) -> &JointCodec {
        &self.actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_agents(&self) -> usize {
        self.states.arity()
    }

    /// Number of explicitly stored entries.
    pub fn n_overrides(&self) -> usize {
        self.overrides.values().map(Vec::len).sum()
    }

    pub fn is_override(&self, s: u64, a: u64) -> bool {
        self.lookup(s, a).is_some()
    }

    /// `sum_i Q_i(s_i, a_i)`.
    pub fn additive(&self, locals: &[&QTable], s: u64, a: u64) -> f64 {
        (0..self.n_agents())
            .map(|i| locals[i].get(self.states.component(s, i), self.actions.component(a, i)))
            .sum()
    }

    pub fn get(&self, locals: &[&QTable], s: u64, a: u64) -> f64 {
        self.lookup(s, a).unwrap_or_else(|| self.additive(locals, s, a))
    }

    pub fn set(&mut self, s: u64, a: u64, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite("joint q-value"));
        }
        if s >= self.states.size() || a >= self.actions.size() {
            return Err(Error::Validation(format!("joint entry ({s},{a}) out of range")));
        }
        let row = self.overrides.entry(s).or_default();
        match row.binary_search_by_key(&a, |&(k, _)| k) {
            Ok(pos) => row[pos].1 = value,
            Err(pos) => row.insert(pos, (a, value)),
        }
        Ok(())
    }

    /// Returns the entry to the additive value of the local tables.
    pub fn reset_to_additive(&mut self, s: u64, a: u64) {
        if let Some(row) = self.overrides.get_mut(&s) {
            if let Ok(pos) = row.binary_search_by_key(&a, |&(k, _)| k) {
                row.remove(pos);
            }
            if row.is_empty() {
                self.overrides.remove(&s);
            }
        }
    }

    /// `Q(s,a) <- (1 - alpha) Q(s,a) + alpha * target`; returns the TD error.
    pub fn blend_toward(&mut self, locals: &[&QTable], s: u64, a: u64, target: f64, alpha: f64) -> Result<f64> {
        let old = self.get(locals, s, a);
        self.set(s, a, (1.0 - alpha) * old + alpha * target)?;
        Ok(target - old)
    }

    /// Whether every component of `a` is valid for its local state.
    pub fn is_valid(&self, locals: &[&QTable], s: u64, a: u64) -> bool {
        (0..self.n_agents()).all(|i| locals[i].is_valid(self.states.component(s, i), self.actions.component(a, i)))
    }

    /// Minimizing valid joint action and its value; ties go to the lowest
    /// joint index.
    pub fn argmin(&self, locals: &[&QTable], s: u64) -> Result<(u64, f64)> {
        let n = self.n_agents();
        let local_states: Vec<StateId> = (0..n).map(|i| self.states.component(s, i)).collect();
        let valid: Vec<Vec<ActionId>> = (0..n).map(|i| locals[i].valid_actions(local_states[i])).collect();
        if let Some(i) = valid.iter().position(Vec::is_empty) {
            return Err(Error::NoValidAction { state: local_states[i] });
        }
        match self.overrides.get(&s) {
            None => {
                let mut parts = Vec::with_capacity(n);
                let mut total = 0.0;
                for i in 0..n {
                    let (a, v) = locals[i].argmin_with_value(local_states[i]).expect("valid actions exist");
                    parts.push(a);
                    total += v;
                }
                Ok((self.actions.encode(&parts), total))
            }
            Some(_) => {
                let mut best: Option<(u64, f64)> = None;
                let mut idx = vec![0usize; n];
                let mut parts = vec![0usize; n];
                loop {
                    for i in 0..n {
                        parts[i] = valid[i][idx[i]];
                    }
                    let a = self.actions.encode(&parts);
                    let v = self.get(locals, s, a);
                    if best.is_none_or(|(_, bv)| v < bv) {
                        best = Some((a, v));
                    }
                    let mut k = n;
                    loop {
                        if k == 0 {
                            return Ok(best.expect("at least one valid joint action"));
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < valid[k].len() {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
            }
        }
    }

    pub fn min_value(&self, locals: &[&QTable], s: u64) -> Result<f64> {
        Ok(self.argmin(locals, s)?.1)
    }

    fn lookup(&self, s: u64, a: u64) -> Option<f64> {
        let row = self.overrides.get(&s)?;
        row.binary_search_by_key(&a, |&(k, _)| k).ok().map(|pos| row[pos].1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::ActionMask;
    use std::sync::Arc;

    fn locals() -> (QTable, QTable) {
        let a = QTable::from_values(2, 2, 0.9, vec![1.0, 2.0, 3.0, 0.5]).unwrap();
        let b = QTable::from_values(2, 2, 0.9, vec![0.0, 4.0, 2.0, 2.0]).unwrap();
        (a, b)
    }

    fn table() -> JointQTable {
        JointQTable::new(JointCodec::uniform(2, 2).unwrap(), JointCodec::uniform(2, 2).unwrap(), 0.9).unwrap()
    }

    #[test]
    fn defaults_to_additive_values() {
        let (a, b) = locals();
        let q = table();
        let l = [&a, &b];
        // s = (1, 0), a = (1, 0): 0.5 + 0.0
        assert_eq!(q.get(&l, 2, 2), 0.5);
        assert_eq!(q.argmin(&l, 2).unwrap(), (2, 0.5));
    }

    #[test]
    fn overrides_and_reset() {
        let (a, b) = locals();
        let mut q = table();
        let l = [&a, &b];
        q.set(2, 2, 9.0).unwrap();
        assert_eq!(q.get(&l, 2, 2), 9.0);
        // next best: (1,1) = 0.5 + 4 = 4.5, (0,0) = 3 + 0 = 3
        assert_eq!(q.argmin(&l, 2).unwrap(), (0, 3.0));
        q.reset_to_additive(2, 2);
        assert_eq!(q.get(&l, 2, 2), 0.5);
        assert_eq!(q.n_overrides(), 0);
        assert!(q.set(2, 2, f64::NAN).is_err());
    }

    #[test]
    fn blend_with_unit_step_sets_target() {
        let (a, b) = locals();
        let mut q = table();
        let l = [&a, &b];
        let td = q.blend_toward(&l, 0, 0, 5.0, 1.0).unwrap();
        assert_eq!(td, 4.0);
        assert_eq!(q.get(&l, 0, 0), 5.0);
    }

    #[test]
    fn argmin_respects_masks_and_ties() {
        let mask = Arc::new(ActionMask::from_fn(2, 2, |s, a| !(s == 1 && a == 1)));
        let a = QTable::from_values(2, 2, 0.9, vec![1.0, 1.0, 3.0, 0.5]).unwrap().with_mask(mask).unwrap();
        let b = QTable::from_values(2, 2, 0.9, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let mut q = table();
        let l = [&a, &b];
        assert_eq!(q.argmin(&l, 0).unwrap(), (0, 2.0));
        // Masked component is skipped even when its additive value is lowest.
        assert_eq!(q.argmin(&l, 2).unwrap().0, 0);
        q.set(0, 3, 2.0).unwrap();
        assert_eq!(q.argmin(&l, 0).unwrap(), (0, 2.0));
        q.set(0, 3, 1.0).unwrap();
        assert_eq!(q.argmin(&l, 0).unwrap(), (3, 1.0));
        assert!(!q.is_valid(&l, 2, 2));
    }
}
