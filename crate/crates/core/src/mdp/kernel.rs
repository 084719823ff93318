use rand::Rng;

use super::{ActionId, Sample, StateId};
use crate::error::{Error, Result};

/// Tolerance on row sums for a kernel to count as stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Anything that can supply next-state distributions for `(s, a)` pairs.
pub trait TransitionModel {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;

    /// Calls `f(s', p)` for every successor with non-zero probability.
    fn for_each_successor(&self, s: StateId, a: ActionId, f: &mut dyn FnMut(StateId, f64));

    fn expectation(&self, s: StateId, a: ActionId, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_successor(s, a, &mut |next, p| acc += p * values[next]);
        acc
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                let mut sum = 0.0;
                let mut bad = None;
                self.for_each_successor(s, a, &mut |next, p| {
                    if !(0.0..=1.0 + STOCHASTIC_TOL).contains(&p) || next >= self.n_states() {
                        bad = Some((next, p));
                    }
                    sum += p;
                });
                if let Some((next, p)) = bad {
                    return Err(Error::Validation(format!(
                        "entry ({s},{a},{next}) = {p} is not a probability"
                    )));
                }
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Validation(format!("row ({s},{a}) sums to {sum}")));
                }
            }
        }
        Ok(())
    }
}

/// Dense probability transition tensor indexed `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTensor {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TransitionTensor {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_states as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions * n_states],
        }
    }

    pub fn identity(n_states: usize, n_actions: usize) -> Self {
        let mut t = Self {
            n_states,
            n_actions,
            probs: vec![0.0; n_states * n_actions * n_states],
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                t.row_mut(s, a)[s] = 1.0;
            }
        }
        t
    }

    /// Builds a tensor from raw probabilities and checks it is row-stochastic.
    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "{} probabilities for {n_states}x{n_actions}x{n_states}",
                probs.len()
            )));
        }
        let t = Self {
            n_states,
            n_actions,
            probs,
        };
        t.validate()?;
        Ok(t)
    }

    /// Builds a tensor with one `|S| x |S|` matrix per action.
    pub fn from_action_matrices(matrices: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_actions = matrices.len();
        let n_states = matrices.first().map_or(0, Vec::len);
        let mut probs = vec![0.0; n_states * n_actions * n_states];
        for (a, m) in matrices.iter().enumerate() {
            if m.len() != n_states {
                return Err(Error::Shape("ragged action matrices".into()));
            }
            for (s, row) in m.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::Shape("ragged action matrices".into()));
                }
                let start = (s * n_actions + a) * n_states;
                probs[start..start + n_states].copy_from_slice(row);
            }
        }
        Self::from_probs(n_states, n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: StateId, a: ActionId, next: StateId) -> f64 {
        self.probs[(s * self.n_actions + a) * self.n_states + next]
    }

    #[inline]
    pub fn row(&self, s: StateId, a: ActionId) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn row_mut(&mut self, s: StateId, a: ActionId) -> &mut [f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &mut self.probs[start..start + self.n_states]
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.validate().is_ok()
    }

    /// Draws `s' ~ P(s, a, .)` by inverse-CDF sampling.
    pub fn sample_next<R: Rng + ?Sized>(&self, s: StateId, a: ActionId, rng: &mut R) -> StateId {
        sample_from_row(self.row(s, a), rng)
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &TransitionTensor) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn sample_from_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // round-off: u landed beyond the accumulated mass
    last_positive
}

impl TransitionModel for TransitionTensor {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn for_each_successor(&self, s: StateId, a: ActionId, f: &mut dyn FnMut(StateId, f64)) {
        for (next, &p) in self.row(s, a).iter().enumerate() {
            if p != 0.0 {
                f(next, p);
            }
        }
    }

    fn expectation(&self, s: StateId, a: ActionId, values: &[f64]) -> f64 {
        self.row(s, a).iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// Row-sparse kernel for large joint spaces; each `(s, a)` row lists its
/// successors explicitly.
#[derive(Debug, Clone, Default)]
pub struct SparseKernel {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<(StateId, f64)>>,
}

impl SparseKernel {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            rows: vec![Vec::new(); n_states * n_actions],
        }
    }

    pub fn set_row(&mut self, s: StateId, a: ActionId, mut row: Vec<(StateId, f64)>) {
        row.sort_by_key(|&(n, _)| n);
        // merge duplicates
        let mut merged: Vec<(StateId, f64)> = Vec::with_capacity(row.len());
        for (n, p) in row {
            match merged.last_mut() {
                Some((m, q)) if *m == n => *q += p,
                _ => merged.push((n, p)),
            }
        }
        self.rows[s * self.n_actions + a] = merged;
    }

    pub fn row(&self, s: StateId, a: ActionId) -> &[(StateId, f64)] {
        &self.rows[s * self.n_actions + a]
    }

    pub fn to_dense(&self) -> TransitionTensor {
        let mut probs = vec![0.0; self.n_states * self.n_actions * self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let start = (s * self.n_actions + a) * self.n_states;
                for &(n, p) in self.row(s, a) {
                    probs[start + n] += p;
                }
            }
        }
        TransitionTensor {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        }
    }
}

impl TransitionModel for SparseKernel {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn for_each_successor(&self, s: StateId, a: ActionId, f: &mut dyn FnMut(StateId, f64)) {
        for &(n, p) in self.row(s, a) {
            f(n, p);
        }
    }

    fn expectation(&self, s: StateId, a: ActionId, values: &[f64]) -> f64 {
        self.row(s, a).iter().map(|&(n, p)| p * values[n]).sum()
    }
}

/// Running transition counts for sample-average kernel estimation.
#[derive(Debug, Clone)]
pub struct PttCounts {
    n_states: usize,
    n_actions: usize,
    counts: Vec<u32>,
    totals: Vec<u32>,
}

impl PttCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            counts: vec![0; n_states * n_actions * n_states],
            totals: vec![0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn record(&mut self, sample: &Sample) -> Result<()> {
        if sample.state >= self.n_states {
            return Err(Error::index("state", sample.state, self.n_states));
        }
        if sample.next_state >= self.n_states {
            return Err(Error::index("next state", sample.next_state, self.n_states));
        }
        if sample.action >= self.n_actions {
            return Err(Error::index("action", sample.action, self.n_actions));
        }
        let row = sample.state * self.n_actions + sample.action;
        self.counts[row * self.n_states + sample.next_state] += 1;
        self.totals[row] += 1;
        Ok(())
    }

    pub fn visits(&self, s: StateId, a: ActionId) -> u32 {
        self.totals[s * self.n_actions + a]
    }

    /// Sample-average estimate; rows never visited are uniform.
    pub fn to_tensor(&self) -> TransitionTensor {
        let n = self.n_states;
        let uniform = 1.0 / n as f64;
        let mut probs = vec![0.0; self.counts.len()];
        for (row, &total) in self.totals.iter().enumerate() {
            let out = &mut probs[row * n..(row + 1) * n];
            if total == 0 {
                out.fill(uniform);
            } else {
                let inv = 1.0 / total as f64;
                for (o, &c) in out.iter_mut().zip(&self.counts[row * n..(row + 1) * n]) {
                    *o = c as f64 * inv;
                }
            }
        }
        TransitionTensor {
            n_states: self.n_states,
            n_actions: self.n_actions,
            probs,
        }
    }
}

/// Sample-average (maximum-likelihood) kernel estimate from observed
/// transitions. Unvisited `(s, a)` rows default to uniform over `|S|`.
pub fn estimate_ptt(samples: &[Sample], n_states: usize, n_actions: usize) -> Result<TransitionTensor> {
    let mut counts = PttCounts::new(n_states, n_actions);
    for s in samples {
        counts.record(s)?;
    }
    Ok(counts.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_row() {
        let samples = vec![Sample::new(0, 0, 1, 0.0); 5];
        let p = estimate_ptt(&samples, 3, 2).unwrap();
        assert_eq!(p.row(0, 0), &[0.0, 1.0, 0.0]);
        assert!(p.is_row_stochastic());
    }

    #[test]
    fn empty_input_is_uniform() {
        let p = estimate_ptt(&[], 4, 2).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert!(p.row(s, a).iter().all(|&x| (x - 0.25).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn monte_carlo_recovers_generating_kernel() {
        let truth = TransitionTensor::from_action_matrices(&[vec![
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.1, 0.3],
            vec![0.0, 0.4, 0.6],
        ]])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples = Vec::new();
        let mut s = 0;
        for _ in 0..10_000 {
            let next = truth.sample_next(s, 0, &mut rng);
            samples.push(Sample::new(s, 0, next, 0.0));
            s = next;
        }
        let est = estimate_ptt(&samples, 3, 1).unwrap();
        assert!(est.max_abs_diff(&truth) < 0.05);
    }

    #[test]
    fn non_stochastic_rejected() {
        assert!(TransitionTensor::from_probs(2, 1, vec![0.5, 0.4, 0.0, 1.0]).is_err());
        assert!(TransitionTensor::from_probs(2, 1, vec![1.5, -0.5, 0.0, 1.0]).is_err());
    }

    #[test]
    fn sparse_matches_dense() {
        let mut k = SparseKernel::new(3, 1);
        k.set_row(0, 0, vec![(1, 0.25), (2, 0.5), (1, 0.25)]);
        k.set_row(1, 0, vec![(1, 1.0)]);
        k.set_row(2, 0, vec![(0, 1.0)]);
        k.validate().unwrap();
        let d = k.to_dense();
        assert_eq!(d.row(0, 0), &[0.0, 0.5, 0.5]);
        let v = [1.0, 2.0, 4.0];
        assert_eq!(k.expectation(0, 0, &v), d.expectation(0, 0, &v));
    }
}
