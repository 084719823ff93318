use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use libm::erfc;

use super::{GridGeometry, Position, WirelessConfig};
use crate::error::{Error, Result};

/// Cost returned for an association to a base station that does not cover
/// the transmitter. Never written into Q-tables.
pub const INVALID_COST: f64 = 1e6;

/// Floor on `n + I` inside the SNR.
pub const SNR_DENOMINATOR_FLOOR: f64 = 1e-6;

/// Gaussian tail `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Aggregate received signal strength at `agent` from every other
/// transmitter: `sum_j P_j / max(d_ij, d_min)^2`.
pub fn true_arss(
    geometry: &GridGeometry,
    positions: &[Position],
    powers: &[f64],
    agent: usize,
    floor: f64,
) -> Result<f64> {
    if positions.len() < 2 {
        return Err(Error::Validation("ARSS needs at least two transmitters".into()));
    }
    if agent >= positions.len() {
        return Err(Error::index("agent", agent, positions.len()));
    }
    Ok(arss_sum(geometry, positions, powers, agent, floor))
}

/// Same as [`true_arss`] without the arity contract; zero for a lone agent.
pub(crate) fn arss_sum(geometry: &GridGeometry, positions: &[Position], powers: &[f64], agent: usize, floor: f64) -> f64 {
    let own = positions[agent];
    let mut total = 0.0;
    for (j, &p) in positions.iter().enumerate() {
        if j != agent {
            let d = geometry.distance(own, p).max(floor);
            total += powers[j] / (d * d);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Coordinated,
    Uncoordinated,
}

impl Regime {
    pub fn from_flag(coordinated: bool) -> Self {
        if coordinated {
            Regime::Coordinated
        } else {
            Regime::Uncoordinated
        }
    }

    pub fn is_coordinated(self) -> bool {
        self == Regime::Coordinated
    }
}

/// ARSS measurement noise per regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArssNoise {
    pub sigma_c: f64,
    pub sigma_u: f64,
}

impl ArssNoise {
    pub fn std(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Coordinated => self.sigma_c,
            Regime::Uncoordinated => self.sigma_u,
        }
    }

    /// `true_value + n`, `n ~ N(0, sigma_regime^2)`.
    pub fn sample<R: Rng + ?Sized>(&self, true_value: f64, regime: Regime, rng: &mut R) -> f64 {
        let sd = self.std(regime);
        if sd == 0.0 {
            return true_value;
        }
        let n: f64 = Normal::new(0.0, sd).expect("finite std").sample(rng);
        true_value + n
    }
}

/// Equally spaced ARSS levels `I_min, I_min + Delta_I, ..., I_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArssLevels {
    pub min: f64,
    pub step: f64,
    pub count: usize,
}

impl ArssLevels {
    pub fn from_config(config: &WirelessConfig) -> Self {
        Self {
            min: config.arss_min,
            step: config.arss_step,
            count: config.n_levels(),
        }
    }

    pub fn max(&self) -> f64 {
        self.min + self.step * (self.count - 1) as f64
    }

    pub fn value(&self, level: usize) -> f64 {
        self.min + self.step * level as f64
    }

    /// Nearest level after clamping to `[I_min, I_max]`; exact midpoints go
    /// to the lower level.
    pub fn quantize(&self, value: f64) -> usize {
        if value.is_nan() || value <= self.min {
            return 0;
        }
        let k = (value - self.min) / self.step;
        let idx = (k - 0.5).ceil();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.count - 1)
        }
    }

    pub fn quantize_value(&self, value: f64) -> f64 {
        self.value(self.quantize(value))
    }

    /// Probability of each level for a reading `true_value + N(0, std^2)`.
    pub fn level_distribution(&self, true_value: f64, std: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.count];
        if std == 0.0 {
            out[self.quantize(true_value)] = 1.0;
            return out;
        }
        // level k collects readings in (lower_k, upper_k]
        for (k, p) in out.iter_mut().enumerate() {
            let lower = if k == 0 { f64::NEG_INFINITY } else { self.value(k) - 0.5 * self.step };
            let upper = if k + 1 == self.count { f64::INFINITY } else { self.value(k) + 0.5 * self.step };
            *p = (q_function((lower - true_value) / std) - q_function((upper - true_value) / std)).max(0.0);
        }
        let total: f64 = out.iter().sum();
        for p in &mut out {
            *p /= total;
        }
        out
    }
}

/// Three-term transmission cost: efficiency, reliability and fairness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub betas: [f64; 3],
    pub threshold: f64,
    /// Receiver noise std `sigma`.
    pub noise_std: f64,
    pub floor: f64,
}

impl CostModel {
    pub fn from_config(config: &WirelessConfig) -> Self {
        Self {
            betas: config.betas,
            threshold: config.arss_threshold,
            noise_std: config.cost_noise_std,
            floor: config.floor_distance(),
        }
    }

    pub fn snr(&self, power: f64, distance: f64, arss: f64, noise: f64) -> f64 {
        let d = distance.max(self.floor);
        power / (d * d * (noise + arss).max(SNR_DENOMINATOR_FLOOR))
    }

    /// Cost for a given noise realization `n`.
    pub fn evaluate(&self, power: f64, distance: f64, arss: f64, noise: f64) -> f64 {
        let snr = self.snr(power, distance, arss, noise);
        let [b1, b2, b3] = self.betas;
        let efficiency = power / (1.0 + snr).log2();
        let reliability = q_function(snr.sqrt());
        b1 * efficiency + b2 * reliability + b3 * self.fairness(arss)
    }

    /// `Q((I_thr - I) / sigma)`, which degenerates to a step at `sigma = 0`.
    pub fn fairness(&self, arss: f64) -> f64 {
        let gap = self.threshold - arss;
        if self.noise_std == 0.0 {
            if gap > 0.0 {
                0.0
            } else if gap < 0.0 {
                1.0
            } else {
                0.5
            }
        } else {
            q_function(gap / self.noise_std)
        }
    }

    /// Draws the receiver noise and evaluates the cost.
    pub fn sample<R: Rng + ?Sized>(&self, power: f64, distance: f64, arss: f64, rng: &mut R) -> f64 {
        let n = if self.noise_std == 0.0 {
            0.0
        } else {
            Normal::new(0.0, self.noise_std).expect("finite std").sample(rng)
        };
        self.evaluate(power, distance, arss, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridGeometry {
        GridGeometry {
            cell_size: 1.0,
            axis_points: 10,
        }
    }

    #[test]
    fn q_function_reference_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.0) / 0.158_655_253_931_457_05 - 1.0).abs() < 1e-12);
        assert!((q_function(-2.0) / 0.977_249_868_051_820_8 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_transmitters_at_unit_distance() {
        let g = grid();
        let pos = [Position::new(0, 0), Position::new(1, 0)];
        assert_eq!(true_arss(&g, &pos, &[1.0, 1.0], 0, 0.5).unwrap(), 1.0);
        assert_eq!(true_arss(&g, &pos, &[1.0, 1.0], 1, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn doubling_distance_quarters_arss() {
        let g = grid();
        let near = [Position::new(1, 1), Position::new(3, 2)];
        let far = [Position::new(2, 2), Position::new(6, 4)];
        let a = true_arss(&g, &near, &[1.0, 1.0], 0, 0.5).unwrap();
        let b = true_arss(&g, &far, &[1.0, 1.0], 0, 0.5).unwrap();
        assert!((a / b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn three_transmitters_hand_sum() {
        let g = grid();
        let pos = [Position::new(0, 0), Position::new(3, 4), Position::new(0, 2)];
        // 2/25 + 0.5/4
        let v = true_arss(&g, &pos, &[1.0, 2.0, 0.5], 0, 0.5).unwrap();
        assert!((v - (2.0 / 25.0 + 0.5 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn colocated_transmitters_use_floor() {
        let g = grid();
        let pos = [Position::new(2, 2), Position::new(2, 2)];
        assert_eq!(true_arss(&g, &pos, &[1.0, 1.0], 0, 0.5).unwrap(), 4.0);
    }

    #[test]
    fn lone_transmitter_is_a_contract_error() {
        assert!(true_arss(&grid(), &[Position::new(0, 0)], &[1.0], 0, 0.5).is_err());
    }

    #[test]
    fn zero_noise_reading_is_identity() {
        let noise = ArssNoise {
            sigma_c: 0.0,
            sigma_u: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(noise.sample(0.37, Regime::Uncoordinated, &mut rng), 0.37);
    }

    #[test]
    fn reading_noise_moments() {
        let noise = ArssNoise {
            sigma_c: 0.1,
            sigma_u: 0.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (regime, sd) in [(Regime::Coordinated, 0.1), (Regime::Uncoordinated, 0.5)] {
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| noise.sample(2.0, regime, &mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - 2.0).abs() < 3.0 * sd / (n as f64).sqrt());
            assert!((var.sqrt() / sd - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn quantization_examples() {
        let q = ArssLevels {
            min: 0.0,
            step: 50.0,
            count: 5,
        };
        assert_eq!(q.quantize_value(100.0), 100.0);
        assert_eq!(q.quantize_value(1e9), 200.0);
        assert_eq!(q.quantize_value(-3.0), 0.0);
        assert_eq!(q.quantize_value(74.0), 50.0);
        assert_eq!(q.quantize_value(76.0), 100.0);
        assert_eq!(q.quantize_value(75.0), 50.0);
    }

    #[test]
    fn level_distribution_matches_quantized_draws() {
        let q = ArssLevels {
            min: 0.0,
            step: 1.0,
            count: 4,
        };
        let dist = q.level_distribution(1.3, 0.6);
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let noise = ArssNoise {
            sigma_c: 0.6,
            sigma_u: 3.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut counts = [0usize; 4];
        let n = 200_000;
        for _ in 0..n {
            counts[q.quantize(noise.sample(1.3, Regime::Coordinated, &mut rng))] += 1;
        }
        for k in 0..4 {
            assert!((counts[k] as f64 / n as f64 - dist[k]).abs() < 0.005);
        }
        assert_eq!(q.level_distribution(1.3, 0.0), vec![0.0, 1.0, 0.0, 0.0]);
    }

    fn model() -> CostModel {
        CostModel {
            betas: [1.0 / 3.0; 3],
            threshold: 0.5,
            noise_std: 0.0,
            floor: 0.5,
        }
    }

    #[test]
    fn fairness_at_threshold_is_half_weight() {
        let m = CostModel {
            noise_std: 0.2,
            ..model()
        };
        let c = m.evaluate(1.0, 1.0, 0.5, 0.0);
        let snr: f64 = 1.0 / 0.5;
        let expected = (1.0 / (1.0 + snr).log2() + q_function(snr.sqrt()) + 0.5) / 3.0;
        assert!((c - expected).abs() < 1e-15);
        assert_eq!(model().fairness(0.5), 0.5);
    }

    #[test]
    fn noiseless_hand_evaluation() {
        // P = 2, d = 2, I = 0.1: SNR = 2 / (4 * 0.1) = 5; I below threshold
        let c = model().evaluate(2.0, 2.0, 0.1, 0.0);
        let expected = (2.0 / 6f64.log2() + q_function(5f64.sqrt()) + 0.0) / 3.0;
        assert!((c - expected).abs() < 1e-15);
        assert!((model().snr(2.0, 2.0, 0.1, 0.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn negative_noise_clamps_snr() {
        let m = model();
        let c = m.evaluate(1.0, 1.0, 0.1, -5.0);
        assert!(c.is_finite() && c >= 0.0);
        assert_eq!(m.snr(1.0, 1.0, 0.1, -5.0), 1.0 / SNR_DENOMINATOR_FLOOR);
    }

    #[test]
    fn efficiency_only_cost_decreases_with_snr() {
        let m = CostModel {
            betas: [1.0, 0.0, 0.0],
            ..model()
        };
        let mut last = f64::INFINITY;
        for k in 1..200 {
            let arss = 10.0 / k as f64;
            let c = m.evaluate(1.0, 1.0, arss, 0.0);
            assert!(c < last);
            last = c;
        }
    }
}
