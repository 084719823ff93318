use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step size `alpha_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    /// `1 / (1 + t / scale)`
    Harmonic { scale: f64 },
    Constant { value: f64 },
}

impl LearningRate {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            LearningRate::Harmonic { scale } => 1.0 / (1.0 + t as f64 / scale),
            LearningRate::Constant { value } => value,
        }
    }
}

/// Exploration probability `zeta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    /// `max(base^t, floor)`
    Decay { base: f64, floor: f64 },
    Constant { value: f64 },
}

impl Exploration {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            Exploration::Decay { base, floor } => base.powf(t as f64).max(floor),
            Exploration::Constant { value } => value,
        }
    }
}

/// Ensemble update ratio `u_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateRatio {
    Constant { value: f64 },
    /// `1 - exp(-t / scale)`
    Saturating { scale: f64 },
}

impl UpdateRatio {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            UpdateRatio::Constant { value } => value,
            UpdateRatio::Saturating { scale } => 1.0 - (-(t as f64) / scale).exp(),
        }
    }

    /// The constant ratio, if this schedule is constant.
    pub fn constant(&self) -> Option<f64> {
        match *self {
            UpdateRatio::Constant { value } => Some(value),
            UpdateRatio::Saturating { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub learning_rate: LearningRate,
    pub exploration: Exploration,
    pub update_ratio: UpdateRatio,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::Harmonic { scale: 1000.0 },
            exploration: Exploration::Decay {
                base: 0.99,
                floor: 0.01,
            },
            update_ratio: UpdateRatio::Saturating { scale: 1000.0 },
        }
    }
}

impl Schedules {
    pub fn validate(&self) -> Result<()> {
        match self.learning_rate {
            LearningRate::Harmonic { scale } if scale <= 0.0 => {
                return Err(Error::Config("learning-rate scale must be positive".into()))
            }
            LearningRate::Constant { value } if !(value > 0.0 && value <= 1.0) => {
                return Err(Error::Config("constant learning rate must be in (0,1]".into()))
            }
            _ => {}
        }
        match self.exploration {
            Exploration::Decay { base, floor } if !(0.0..=1.0).contains(&base) || !(0.0..=1.0).contains(&floor) => {
                return Err(Error::Config("exploration base/floor must be in [0,1]".into()))
            }
            Exploration::Constant { value } if !(0.0..=1.0).contains(&value) => {
                return Err(Error::Config("exploration rate must be in [0,1]".into()))
            }
            _ => {}
        }
        match self.update_ratio {
            UpdateRatio::Constant { value } if !(0.0..1.0).contains(&value) => {
                Err(Error::Config("update ratio must be in [0,1)".into()))
            }
            UpdateRatio::Saturating { scale } if scale <= 0.0 => {
                Err(Error::Config("update-ratio scale must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedules_match_reference_parameters() {
        let s = Schedules::default();
        assert!((s.learning_rate.at(1000) - 0.5).abs() < 1e-15);
        assert!((s.exploration.at(10) - 0.99f64.powi(10)).abs() < 1e-15);
        assert_eq!(s.exploration.at(100_000), 0.01);
        assert_eq!(s.update_ratio.at(0), 0.0);
        assert!((s.update_ratio.at(1000) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }
}
