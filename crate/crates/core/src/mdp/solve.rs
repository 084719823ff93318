use std::sync::Arc;

use rayon::prelude::*;

use super::{ActionId, ActionMask, QTable, TransitionModel};
use crate::error::{Error, Result};

/// Outcome of a value-iteration solve.
#[derive(Debug, Clone)]
pub struct ValueIterationReport {
    pub iterations: usize,
    /// Sup-norm distance between successive iterates, one entry per sweep.
    pub deltas: Vec<f64>,
    /// `||T Q - Q||_inf` of the returned table.
    pub residual: f64,
}

/// Synchronous value iteration on the Bellman optimality operator
/// `Q(s,a) <- c(s,a) + gamma * sum_s' P(s,a,s') min_a' Q(s',a')`.
#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mask: Option<Arc<ActionMask>>,
}

impl ValueIteration {
    pub fn new(gamma: f64, tolerance: f64) -> Self {
        Self {
            gamma,
            tolerance,
            max_iterations: 1_000_000,
            mask: None,
        }
    }

    pub fn with_mask(mut self, mask: Arc<ActionMask>) -> Self {
        self.mask = Some(mask);
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn solve<M>(&self, model: &M, costs: &[f64]) -> Result<(QTable, ValueIterationReport)>
    where
        M: TransitionModel + Sync,
    {
        let n_s = model.n_states();
        let n_a = model.n_actions();
        if costs.len() != n_s * n_a {
            return Err(Error::Shape(format!(
                "{} costs for {n_s} states x {n_a} actions",
                costs.len()
            )));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::Validation("tolerance must be positive".into()));
        }
        model.validate()?;
        let mut table = QTable::zeros(n_s, n_a, self.gamma)?;
        if let Some(mask) = &self.mask {
            table = table.with_mask(mask.clone())?;
        }
        let mut values = vec![0.0; n_s];
        let mut next = vec![0.0; n_s * n_a];
        let mut deltas = Vec::new();
        let gamma = self.gamma;
        for iteration in 1..=self.max_iterations {
            bellman_sweep(model, costs, gamma, &values, &mut next, n_a);
            let delta = next
                .par_iter()
                .zip(table.values().par_iter())
                .map(|(a, b)| (a - b).abs())
                .reduce(|| 0.0, f64::max);
            table = QTable::from_values(n_s, n_a, gamma, next.clone())?;
            if let Some(mask) = &self.mask {
                table = table.with_mask(mask.clone())?;
            }
            for (s, v) in values.iter_mut().enumerate() {
                *v = table.min_value(s);
                if !v.is_finite() {
                    return Err(Error::NoValidAction { state: s });
                }
            }
            deltas.push(delta);
            if delta <= self.tolerance {
                // residual of the returned iterate is at most gamma * delta
                bellman_sweep(model, costs, gamma, &values, &mut next, n_a);
                let residual = next
                    .iter()
                    .zip(table.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                return Ok((
                    table,
                    ValueIterationReport {
                        iterations: iteration,
                        deltas,
                        residual,
                    },
                ));
            }
        }
        Err(Error::Validation(format!(
            "value iteration did not reach tolerance {} in {} sweeps",
            self.tolerance, self.max_iterations
        )))
    }
}

fn bellman_sweep<M>(model: &M, costs: &[f64], gamma: f64, values: &[f64], out: &mut [f64], n_a: usize)
where
    M: TransitionModel + Sync,
{
    out.par_chunks_mut(n_a).enumerate().for_each(|(s, row)| {
        for (a, q) in row.iter_mut().enumerate() {
            *q = costs[s * n_a + a] + gamma * model.expectation(s, a, values);
        }
    });
}

/// `Q*` with sup-norm Bellman residual at most `tol`.
pub fn value_iteration<M>(model: &M, costs: &[f64], gamma: f64, tol: f64) -> Result<QTable>
where
    M: TransitionModel + Sync,
{
    ValueIteration::new(gamma, tol).solve(model, costs).map(|(q, _)| q)
}

/// Per-state greedy action, lowest-index tie-break, restricted to the
/// table's valid actions.
pub fn greedy_policy(table: &QTable) -> Result<Vec<ActionId>> {
    (0..table.n_states())
        .map(|s| table.argmin(s).ok_or(Error::NoValidAction { state: s }))
        .collect()
}
