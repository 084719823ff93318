use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coordination::classify_state;
use crate::error::{Error, Result};
use crate::wireless::q_function;

/// Sizes of the coordinated and uncoordinated parts of the joint state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub coordinated: f64,
    pub uncoordinated: f64,
}

impl ClassCounts {
    pub fn new(coordinated: f64, uncoordinated: f64) -> Self {
        Self {
            coordinated,
            uncoordinated,
        }
    }

    pub fn total(&self) -> f64 {
        self.coordinated + self.uncoordinated
    }

    /// `(|S_C| / |S|, |S_U| / |S|)`.
    pub fn fractions(&self) -> (f64, f64) {
        let n = self.total();
        (self.coordinated / n, self.uncoordinated / n)
    }

    fn validate(&self) -> Result<()> {
        if !(self.coordinated >= 0.0 && self.uncoordinated >= 0.0 && self.total() > 0.0) {
            return Err(Error::Validation("class counts must be non-negative with a positive total".into()));
        }
        Ok(())
    }
}

/// Scenario for the misdetection bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisdetectionInput {
    pub counts: ClassCounts,
    pub sigma_c: f64,
    pub sigma_u: f64,
    /// Noiseless ARSS of each agent in the snapshot.
    pub arss: Vec<f64>,
    /// Candidate thresholds, ascending.
    pub grid: Vec<f64>,
}

impl MisdetectionInput {
    pub fn n_agents(&self) -> usize {
        self.arss.len()
    }

    /// `|S_C| sigma_u > |S_U| sigma_c`.
    pub fn hypothesis_holds(&self) -> bool {
        self.counts.coordinated * self.sigma_u > self.counts.uncoordinated * self.sigma_c
    }

    pub fn with_counts(&self, counts: ClassCounts) -> Self {
        Self {
            counts,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.counts.validate()?;
        if !(self.sigma_c > 0.0 && self.sigma_u > 0.0) {
            return Err(Error::Validation("noise levels must be positive".into()));
        }
        if self.arss.len() < 2 {
            return Err(Error::Validation("misdetection needs at least two agents".into()));
        }
        if self.arss.iter().chain(&self.grid).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("misdetection input"));
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("threshold grid must be non-empty and strictly ascending".into()));
        }
        Ok(())
    }

    fn min_arss(&self) -> f64 {
        self.arss.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evenly spaced thresholds from `min` to `max` inclusive.
pub fn threshold_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && min <= max && min.is_finite() && max.is_finite()) {
        return Err(Error::Validation("threshold grid needs step > 0 and min <= max".into()));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| min + step * k as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoAgentBounds {
    pub lower: f64,
    pub upper: f64,
    /// Optimal distance between threshold and true ARSS.
    pub delta: f64,
}

/// Closed-form two-agent misdetection bounds.
///
/// Refuses when `|S_C| sigma_u <= |S_U| sigma_c` (the logarithm under the
/// square root is not positive). Equal noise levels with equal class sizes
/// is the degenerate limit where both bounds are `1/2`.
pub fn pmis_bounds_two_agents(input: &MisdetectionInput) -> Result<TwoAgentBounds> {
    input.validate()?;
    if input.n_agents() != 2 {
        return Err(Error::Precondition(format!(
            "two-agent bounds with {} agents",
            input.n_agents()
        )));
    }
    let (pc, pu) = input.counts.fractions();
    let (sc, su) = (input.sigma_c, input.sigma_u);
    if sc == su && input.counts.coordinated == input.counts.uncoordinated {
        return Ok(TwoAgentBounds {
            lower: 0.5,
            upper: 0.5,
            delta: 0.0,
        });
    }
    if !input.hypothesis_holds() {
        return Err(Error::Precondition(format!(
            "|S_C| sigma_u = {} does not exceed |S_U| sigma_c = {}",
            input.counts.coordinated * su,
            input.counts.uncoordinated * sc
        )));
    }
    let precision_gap = 1.0 / (sc * sc) - 1.0 / (su * su);
    if !(precision_gap > 0.0) {
        return Err(Error::Precondition("sigma_c must be below sigma_u".into()));
    }
    let ratio = (input.counts.coordinated * su) / (input.counts.uncoordinated * sc);
    let delta = (2.0 * ratio.ln() / precision_gap).sqrt();
    Ok(TwoAgentBounds {
        lower: q_function(delta / sc) * pc + q_function(-delta / su) * pu,
        upper: q_function(-delta / sc) * pc + q_function(delta / su) * pu,
        delta,
    })
}

/// Lower misdetection expression at threshold `thr`, clamped to `[0, 1]`.
pub fn lower_expression(input: &MisdetectionInput, thr: f64) -> f64 {
    let (pc, pu) = input.counts.fractions();
    let exceed: f64 = input.arss.iter().map(|&i| q_function((thr - i) / input.sigma_c)).sum();
    let missed_c = (1.0 - exceed).max(0.0);
    let false_c = q_function((thr - input.min_arss()) / input.sigma_u);
    (missed_c * pc + false_c * pu).clamp(0.0, 1.0)
}

/// Upper misdetection expression at threshold `thr`, clamped to `[0, 1]`.
pub fn upper_expression(input: &MisdetectionInput, thr: f64) -> f64 {
    let (pc, pu) = input.counts.fractions();
    let false_c: f64 = input.arss.iter().map(|&i| q_function((thr - i) / input.sigma_u)).sum();
    let missed_c = 1.0 - q_function((thr - input.min_arss()) / input.sigma_c);
    (false_c.min(1.0) * pu + missed_c * pc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
}

/// Misdetection bounds for any number of agents.
///
/// The lower expression is minimized and the upper expression maximized over
/// `[grid[0], grid[last]]`: the best grid point brackets the optimum, then a
/// golden-section search refines inside its neighbouring cells.
pub fn pmis_bounds_general(input: &MisdetectionInput) -> Result<GeneralBounds> {
    input.validate()?;
    let (lower_threshold, lower) = grid_then_golden(&input.grid, |x| lower_expression(input, x));
    let (upper_threshold, neg_upper) = grid_then_golden(&input.grid, |x| -upper_expression(input, x));
    Ok(GeneralBounds {
        lower,
        upper: -neg_upper,
        lower_threshold,
        upper_threshold,
    })
}

fn grid_then_golden(grid: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let k = argmin_first(&values);
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let (x, fx) = golden_section_min(&f, lo, hi, 1e-12 * (1.0 + hi.abs()));
    if fx < values[k] {
        (x, fx)
    } else {
        (grid[k], values[k])
    }
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = k;
        }
    }
    best
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 200 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub index: usize,
    pub lower_bound: f64,
}

/// Lower-bound curve over the grid. `per_threshold` supplies the class sizes
/// induced by each candidate threshold; without it the input's counts are
/// used everywhere.
pub fn lower_bound_curve(input: &MisdetectionInput, per_threshold: Option<&[ClassCounts]>) -> Result<Vec<f64>> {
    input.validate()?;
    match per_threshold {
        None => Ok(input.grid.iter().map(|&x| lower_expression(input, x)).collect()),
        Some(counts) => {
            if counts.len() != input.grid.len() {
                return Err(Error::Shape(format!(
                    "{} class counts for {} thresholds",
                    counts.len(),
                    input.grid.len()
                )));
            }
            counts
                .iter()
                .zip(&input.grid)
                .map(|(c, &x)| {
                    c.validate()?;
                    Ok(lower_expression(&input.with_counts(*c), x))
                })
                .collect()
        }
    }
}

/// Grid threshold minimizing the lower misdetection bound; ties go to the
/// smallest threshold.
pub fn optimal_threshold(input: &MisdetectionInput, per_threshold: Option<&[ClassCounts]>) -> Result<ThresholdChoice> {
    let curve = lower_bound_curve(input, per_threshold)?;
    let index = argmin_first(&curve);
    Ok(ThresholdChoice {
        threshold: input.grid[index],
        index,
        lower_bound: curve[index],
    })
}

/// Monte-Carlo misdetection rate at threshold `thr`.
///
/// Each trial draws the true regime from the class fractions, perturbs every
/// snapshot ARSS with that regime's noise, and classifies the readings.
pub fn monte_carlo_pmis<R: Rng + ?Sized>(
    input: &MisdetectionInput,
    thr: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    input.validate()?;
    if trials == 0 {
        return Err(Error::Validation("need at least one trial".into()));
    }
    let (pc, _) = input.counts.fractions();
    let noise_c = Normal::new(0.0, input.sigma_c).map_err(|e| Error::Validation(e.to_string()))?;
    let noise_u = Normal::new(0.0, input.sigma_u).map_err(|e| Error::Validation(e.to_string()))?;
    let mut readings = vec![0.0; input.arss.len()];
    let mut wrong = 0usize;
    for _ in 0..trials {
        let coordinated = rng.random::<f64>() < pc;
        let noise = if coordinated { &noise_c } else { &noise_u };
        for (r, &i) in readings.iter_mut().zip(&input.arss) {
            *r = i + noise.sample(rng);
        }
        if classify_state(&readings, thr).is_coordinated() != coordinated {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(nc: f64, nu: f64, sc: f64, su: f64, arss: Vec<f64>) -> MisdetectionInput {
        MisdetectionInput {
            counts: ClassCounts::new(nc, nu),
            sigma_c: sc,
            sigma_u: su,
            arss,
            grid: threshold_grid(0.0, 1.0, 0.05).unwrap(),
        }
    }

    #[test]
    fn two_agent_bounds_are_complementary() {
        for (nc, nu, sc, su) in [(30.0, 70.0, 1.0, 5.0), (50.0, 50.0, 0.2, 1.0), (90.0, 10.0, 0.01, 0.3)] {
            let b = pmis_bounds_two_agents(&input(nc, nu, sc, su, vec![0.5, 0.5])).unwrap();
            assert!((b.lower + b.upper - 1.0).abs() < 1e-12);
            assert!(b.lower <= b.upper);
        }
    }

    #[test]
    fn two_agent_bounds_refuse_without_hypothesis() {
        let r = pmis_bounds_two_agents(&input(10.0, 90.0, 1.0, 5.0, vec![0.5, 0.5]));
        assert!(matches!(r, Err(Error::Precondition(_))));
        let r = pmis_bounds_two_agents(&input(50.0, 50.0, 1.0, 5.0, vec![0.5, 0.5, 0.5]));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn equal_noise_and_classes_give_one_half() {
        let b = pmis_bounds_two_agents(&input(40.0, 40.0, 1.0, 1.0, vec![0.5, 0.5])).unwrap();
        assert_eq!((b.lower, b.upper), (0.5, 0.5));
        let near = pmis_bounds_two_agents(&input(40.0, 40.0, 1.0, 1.0 + 1e-6, vec![0.5, 0.5])).unwrap();
        assert!((near.lower - 0.5).abs() < 1e-3 && (near.upper - 0.5).abs() < 1e-3);
    }

    #[test]
    fn general_bounds_are_ordered_and_bracket() {
        let inp = MisdetectionInput {
            counts: ClassCounts::new(40.0, 60.0),
            sigma_c: 0.02,
            sigma_u: 0.1,
            arss: vec![0.3, 0.35, 0.5],
            grid: threshold_grid(0.2, 0.6, 0.02).unwrap(),
        };
        let b = pmis_bounds_general(&inp).unwrap();
        assert!(b.lower <= b.upper);
        for &x in &inp.grid {
            assert!(lower_expression(&inp, x) <= upper_expression(&inp, x) + 1e-12);
            assert!(b.lower <= lower_expression(&inp, x) + 1e-15);
            assert!(b.upper >= upper_expression(&inp, x) - 1e-15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &x in inp.grid.iter().step_by(5) {
            let p = monte_carlo_pmis(&inp, x, 20_000, &mut rng).unwrap();
            assert!(p >= b.lower - 0.01 && p <= b.upper + 0.01, "{x}: {p} vs {b:?}");
        }
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, fx) = golden_section_min(|x| (x - 0.3).powi(2) + 1.0, -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_construction() {
        let g = threshold_grid(0.01, 0.1, 0.0045).unwrap();
        assert_eq!(g.len(), 21);
        assert!((g[20] - 0.1).abs() < 1e-12);
        assert!(threshold_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_scenario_returns_grid_minimum() {
        let mut inp = input(50.0, 50.0, 0.1, 0.1, vec![0.0, 0.0]);
        inp.grid = threshold_grid(0.0, 1.0, 0.1).unwrap();
        let c = optimal_threshold(&inp, None).unwrap();
        assert_eq!(c.index, 0);
        assert_eq!(c.threshold, 0.0);
    }
}
