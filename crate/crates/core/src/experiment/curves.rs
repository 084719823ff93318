//! Misdetection curves over a threshold grid, computed from sampled agent
//! geometries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_network, ExperimentConfig};
use crate::bounds::{lower_expression, pmis_bounds_two_agents, upper_expression, ClassCounts, MisdetectionInput};
use crate::error::{Error, Result};
use crate::wireless::{BsLayout, Position};

/// Noiseless ARSS profiles of uniformly drawn position configurations.
#[derive(Debug, Clone)]
pub struct GeometrySample {
    pub profiles: Vec<Vec<f64>>,
    /// Largest ARSS of each profile.
    pub maxima: Vec<f64>,
}

impl GeometrySample {
    /// Draws `samples` configurations of `config.wireless.n_agents` agents.
    pub fn draw(
        config: &ExperimentConfig,
        layout: BsLayout,
        seed: u64,
        samples: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let network = build_network(config, layout, seed)?;
        let n_pos = network.geometry.n_positions();
        let mut profiles = Vec::with_capacity(samples);
        let mut maxima = Vec::with_capacity(samples);
        for _ in 0..samples {
            let positions: Vec<Position> = (0..config.wireless.n_agents)
                .map(|_| network.geometry.position_at(rng.random_range(0..n_pos)))
                .collect();
            let arss = network.arss_profile(&positions);
            maxima.push(arss.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            profiles.push(arss);
        }
        Ok(Self { profiles, maxima })
    }

    /// Class sizes induced by `thr`: a configuration is coordinated when
    /// any agent's ARSS exceeds it.
    pub fn counts(&self, thr: f64) -> ClassCounts {
        let c = self.maxima.iter().filter(|&&m| m > thr).count();
        ClassCounts::new(c as f64, (self.maxima.len() - c) as f64)
    }
}

/// Bounds at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub coordinated_fraction: f64,
    /// Closed-form two-agent pair `(lower, upper, delta)`, when defined.
    pub two_agent: Option<(f64, f64, f64)>,
    /// Why the two-agent pair is undefined here.
    pub refused: Option<String>,
    pub general_lower: f64,
    pub general_upper: f64,
}

/// Evaluates both bound families at every threshold of `grid` for the
/// ARSS `snapshot`, with class sizes taken from `sample`.
pub fn threshold_curve(
    config: &ExperimentConfig,
    sample: &GeometrySample,
    snapshot: &[f64],
    grid: &[f64],
) -> Result<Vec<ThresholdRow>> {
    let w = &config.wireless;
    grid.iter()
        .map(|&thr| {
            let counts = sample.counts(thr);
            let input = MisdetectionInput {
                counts,
                sigma_c: w.sigma_c,
                sigma_u: w.sigma_u,
                arss: snapshot.to_vec(),
                grid: vec![thr],
            };
            let (two_agent, refused) = if snapshot.len() == 2 {
                match pmis_bounds_two_agents(&input) {
                    Ok(b) => (Some((b.lower, b.upper, b.delta)), None),
                    Err(Error::Precondition(why)) => (None, Some(why)),
                    Err(e) => return Err(e),
                }
            } else {
                (None, Some(format!("closed-form pair needs two agents, got {}", snapshot.len())))
            };
            Ok(ThresholdRow {
                threshold: thr,
                coordinated_fraction: counts.fractions().0,
                two_agent,
                refused,
                general_lower: lower_expression(&input, thr),
                general_upper: upper_expression(&input, thr),
            })
        })
        .collect()
}

/// The config with `n` agents; per-agent lists that no longer fit are
/// reduced to their first entry or dropped.
pub fn with_agents(config: &ExperimentConfig, n: usize) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    let w = &mut c.wireless;
    w.n_agents = n;
    if w.powers.len() != 1 && w.powers.len() != n {
        w.powers.truncate(1);
    }
    if w.comm_radii.len() != n {
        w.comm_radii.clear();
    }
    if w.mobile.len() != n {
        w.mobile.clear();
    }
    c.validate()?;
    Ok(c)
}

/// `points` thresholds evenly spaced over the configured ARSS range.
pub fn arss_grid(config: &ExperimentConfig, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Validation("threshold grid needs at least two points".into()));
    }
    let w = &config.wireless;
    Ok((0..points)
        .map(|k| w.arss_min + (w.arss_max - w.arss_min) * k as f64 / (points - 1) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::build_layout;
    use crate::rng::SeedStreams;

    #[test]
    fn two_agent_rows_are_complementary() {
        let config = ExperimentConfig::default();
        let layout = build_layout(&config, 1).unwrap();
        let mut rng = SeedStreams::new(1).stream("geometry");
        let sample = GeometrySample::draw(&config, layout, 1, 2000, &mut rng).unwrap();
        let grid = arss_grid(&config, 10).unwrap();
        let rows = threshold_curve(&config, &sample, &sample.profiles[0], &grid).unwrap();
        assert_eq!(rows.len(), 10);
        for row in &rows {
            assert!(row.two_agent.is_some() != row.refused.is_some());
            if let Some((lo, hi, _)) = row.two_agent {
                assert!((lo + hi - 1.0).abs() < 1e-12);
            }
            assert!((0.0..=1.0).contains(&row.general_lower));
        }
        // Raising the threshold never adds coordinated configurations.
        assert!(rows.windows(2).all(|w| w[1].coordinated_fraction <= w[0].coordinated_fraction));
    }
}
