use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Sample, StateId, TransitionTensor};

/// `P^n` taken per action slice: for every action `a`, the `|S| x |S|`
/// matrix `P(., a, .)` is raised to the `n`-th power.
pub fn matrix_power_kernel(p: &TransitionTensor, n: u32) -> Result<TransitionTensor> {
    if n == 0 {
        return Err(Error::Validation("kernel order must be at least 1".into()));
    }
    let n_s = p.n_states();
    let n_a = p.n_actions();
    if n == 1 {
        return Ok(p.clone());
    }
    let mut probs = vec![0.0; n_s * n_a * n_s];
    for a in 0..n_a {
        let mut base = vec![0.0; n_s * n_s];
        for s in 0..n_s {
            base[s * n_s..(s + 1) * n_s].copy_from_slice(p.row(s, a));
        }
        let power = matrix_power(&base, n_s, n);
        for s in 0..n_s {
            let start = (s * n_a + a) * n_s;
            probs[start..start + n_s].copy_from_slice(&power[s * n_s..(s + 1) * n_s]);
        }
    }
    renormalize_rows(&mut probs, n_s);
    TransitionTensor::from_probs(n_s, n_a, probs)
}

fn renormalize_rows(probs: &mut [f64], n_s: usize) {
    for row in probs.chunks_mut(n_s) {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in row.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// Square-and-multiply power of a row-major `n x n` matrix.
fn matrix_power(m: &[f64], n: usize, mut e: u32) -> Vec<f64> {
    let mut result: Option<Vec<f64>> = None;
    let mut base = m.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => matmul(&r, &base, n),
            });
        }
        e >>= 1;
        if e > 0 {
            base = matmul(&base, &base, n);
        }
    }
    result.expect("exponent is positive")
}

#[derive(Debug, Clone, Default)]
struct CountRows {
    /// Sorted `(next, count)` per `(s, a)`.
    rows: Vec<Vec<(u32, u32)>>,
    totals: Vec<u32>,
}

/// Sample-average estimate of the real kernel with lazily evaluated powers.
///
/// Counts accumulate continuously; powers are computed from a frozen
/// snapshot that is refreshed on demand, and individual `(s, a)` rows of
/// `P^n` are evaluated by propagating a point mass `n` times through the
/// snapshot and cached until the next refresh. Unvisited rows are uniform.
#[derive(Debug, Clone)]
pub struct EstimatedKernel {
    n_states: usize,
    n_actions: usize,
    live: CountRows,
    snapshot: CountRows,
    /// Cumulative distribution of cached rows, keyed by `(order, s, a)`.
    cache: HashMap<(u32, StateId, ActionId), Vec<(StateId, f64)>>,
}

impl EstimatedKernel {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        let empty = CountRows {
            rows: vec![Vec::new(); n_states * n_actions],
            totals: vec![0; n_states * n_actions],
        };
        Self {
            n_states,
            n_actions,
            live: empty.clone(),
            snapshot: empty,
            cache: HashMap::new(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn record(&mut self, sample: &Sample) -> Result<()> {
        if sample.state >= self.n_states || sample.next_state >= self.n_states {
            return Err(Error::index("state", sample.state.max(sample.next_state), self.n_states));
        }
        if sample.action >= self.n_actions {
            return Err(Error::index("action", sample.action, self.n_actions));
        }
        let idx = sample.state * self.n_actions + sample.action;
        let row = &mut self.live.rows[idx];
        let next = sample.next_state as u32;
        match row.binary_search_by_key(&next, |&(n, _)| n) {
            Ok(pos) => row[pos].1 += 1,
            Err(pos) => row.insert(pos, (next, 1)),
        }
        self.live.totals[idx] += 1;
        Ok(())
    }

    pub fn visits(&self, s: StateId, a: ActionId) -> u32 {
        self.live.totals[s * self.n_actions + a]
    }

    /// Freezes the current counts as the base for all powers.
    pub fn refresh(&mut self) {
        self.snapshot = self.live.clone();
        self.cache.clear();
    }

    /// Dense estimate of the live counts.
    pub fn live_tensor(&self) -> TransitionTensor {
        to_tensor(&self.live, self.n_states, self.n_actions)
    }

    /// Dense estimate of the snapshot the powers are built from.
    pub fn snapshot_tensor(&self) -> TransitionTensor {
        to_tensor(&self.snapshot, self.n_states, self.n_actions)
    }

    /// Dense `P^n` of the snapshot.
    pub fn materialize(&self, order: u32) -> Result<TransitionTensor> {
        matrix_power_kernel(&self.snapshot_tensor(), order)
    }

    /// Row `(s, a)` of `P^n` as a sparse probability list.
    pub fn power_row(&mut self, order: u32, s: StateId, a: ActionId) -> Vec<(StateId, f64)> {
        let cdf = self.cached_cdf(order, s, a);
        let mut last = 0.0;
        cdf.iter()
            .map(|&(n, c)| {
                let p = c - last;
                last = c;
                (n, p)
            })
            .collect()
    }

    /// Draws `s' ~ P^n(s, a, .)`.
    pub fn sample_next<R: Rng + ?Sized>(&mut self, order: u32, s: StateId, a: ActionId, rng: &mut R) -> StateId {
        let u: f64 = rng.random();
        let cdf = self.cached_cdf(order, s, a);
        let pos = cdf.partition_point(|&(_, c)| c <= u);
        cdf[pos.min(cdf.len() - 1)].0
    }

    fn cached_cdf(&mut self, order: u32, s: StateId, a: ActionId) -> &Vec<(StateId, f64)> {
        let key = (order, s, a);
        if !self.cache.contains_key(&key) {
            let row = self.propagate(order, s, a);
            let mut acc = 0.0;
            let mut cdf: Vec<(StateId, f64)> = Vec::with_capacity(row.len());
            for (n, p) in row {
                acc += p;
                cdf.push((n, acc));
            }
            if let Some(last) = cdf.last_mut() {
                last.1 = 1.0;
            }
            self.cache.insert(key, cdf);
        }
        &self.cache[&key]
    }

    fn propagate(&self, order: u32, s: StateId, a: ActionId) -> Vec<(StateId, f64)> {
        let n_s = self.n_states;
        let mut current = vec![0.0; n_s];
        current[s] = 1.0;
        let mut support = vec![s];
        let mut next = vec![0.0; n_s];
        let mut in_support = vec![false; n_s];
        for _ in 0..order {
            let mut new_support = Vec::new();
            let mut uniform_mass = 0.0;
            for &i in &support {
                let mass = current[i];
                if mass == 0.0 {
                    continue;
                }
                let idx = i * self.n_actions + a;
                let total = self.snapshot.totals[idx];
                if total == 0 {
                    uniform_mass += mass;
                    continue;
                }
                let scale = mass / total as f64;
                for &(j, c) in &self.snapshot.rows[idx] {
                    let j = j as usize;
                    next[j] += scale * c as f64;
                    if !in_support[j] {
                        in_support[j] = true;
                        new_support.push(j);
                    }
                }
            }
            if uniform_mass > 0.0 {
                let share = uniform_mass / n_s as f64;
                for (j, v) in next.iter_mut().enumerate() {
                    *v += share;
                    if !in_support[j] {
                        in_support[j] = true;
                        new_support.push(j);
                    }
                }
            }
            for &i in &support {
                current[i] = 0.0;
            }
            std::mem::swap(&mut current, &mut next);
            for &j in &new_support {
                in_support[j] = false;
            }
            support = new_support;
        }
        support.sort_unstable();
        support.into_iter().filter(|&j| current[j] > 0.0).map(|j| (j, current[j])).collect()
    }
}

fn to_tensor(counts: &CountRows, n_s: usize, n_a: usize) -> TransitionTensor {
    let mut t = TransitionTensor::uniform(n_s, n_a);
    for s in 0..n_s {
        for a in 0..n_a {
            let idx = s * n_a + a;
            let total = counts.totals[idx];
            if total == 0 {
                continue;
            }
            let row = t.row_mut(s, a);
            row.iter_mut().for_each(|p| *p = 0.0);
            for &(j, c) in &counts.rows[idx] {
                row[j as usize] = c as f64 / total as f64;
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::FiniteMdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_power_is_identity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = FiniteMdp::random(5, 2, 3, &mut rng).unwrap();
        assert_eq!(matrix_power_kernel(&mdp.kernel, 1).unwrap(), mdp.kernel);
    }

    #[test]
    fn identity_is_a_fixed_point() {
        let id = TransitionTensor::identity(4, 3);
        assert!(matrix_power_kernel(&id, 7).unwrap().max_abs_diff(&id) < 1e-15);
    }

    #[test]
    fn doubly_stochastic_square_by_hand() {
        let m = vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]];
        let p = TransitionTensor::from_action_matrices(&[m]).unwrap();
        let p2 = matrix_power_kernel(&p, 2).unwrap();
        let expected = [[0.25, 0.5, 0.25], [0.25, 0.25, 0.5], [0.5, 0.25, 0.25]];
        for (s, row) in expected.iter().enumerate() {
            for (n, &v) in row.iter().enumerate() {
                assert!((p2.get(s, 0, n) - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lazy_rows_match_dense_powers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = FiniteMdp::random(8, 2, 3, &mut rng).unwrap();
        let mut k = EstimatedKernel::new(8, 2);
        for _ in 0..3000 {
            let s = rng.random_range(0..7);
            let a = rng.random_range(0..2);
            let (n, c) = mdp.step(s, a, &mut rng);
            k.record(&Sample::new(s, a, n, c)).unwrap();
        }
        k.refresh();
        for order in [1, 2, 3, 5] {
            let dense = k.materialize(order).unwrap();
            for s in 0..8 {
                for a in 0..2 {
                    let mut row = [0.0; 8];
                    for (n, p) in k.power_row(order, s, a) {
                        row[n] = p;
                    }
                    for n in 0..8 {
                        assert!((row[n] - dense.get(s, a, n)).abs() < 1e-12, "order {order} ({s},{a},{n})");
                    }
                }
            }
        }
    }

    #[test]
    fn synthetic_draws_follow_power_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = FiniteMdp::random(6, 1, 3, &mut rng).unwrap();
        let mut k = EstimatedKernel::new(6, 1);
        for _ in 0..5000 {
            let s = rng.random_range(0..6);
            let (n, c) = mdp.step(s, 0, &mut rng);
            k.record(&Sample::new(s, 0, n, c)).unwrap();
        }
        k.refresh();
        let row = k.power_row(3, 0, 0);
        let mut counts = [0usize; 6];
        let n = 100_000;
        for _ in 0..n {
            counts[k.sample_next(3, 0, 0, &mut rng)] += 1;
        }
        for (s, p) in row {
            assert!((counts[s] as f64 / n as f64 - p).abs() < 0.02);
        }
    }

    #[test]
    fn point_mass_row_is_deterministic() {
        let mut k = EstimatedKernel::new(3, 1);
        k.record(&Sample::new(0, 0, 2, 0.0)).unwrap();
        k.record(&Sample::new(2, 0, 1, 0.0)).unwrap();
        k.refresh();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(k.sample_next(1, 0, 0, &mut rng), 2);
            assert_eq!(k.sample_next(2, 0, 0, &mut rng), 1);
        }
    }

    #[test]
    fn unvisited_rows_stay_uniform_under_powers() {
        let mut k = EstimatedKernel::new(4, 2);
        k.refresh();
        let row = k.power_row(3, 1, 1);
        assert_eq!(row.len(), 4);
        assert!(row.iter().all(|&(_, p)| (p - 0.25).abs() < 1e-15));
    }
}
