use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Explicit base-station placement, in lattice indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStationSpec {
    pub x: u16,
    pub y: u16,
    pub radius: f64,
}

/// Physical and cost parameters of the grid network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WirelessConfig {
    /// Side length `L` of the square area.
    pub grid_size: f64,
    /// Lattice spacing `Delta_L`.
    pub cell_size: f64,
    pub n_agents: usize,
    pub n_base_stations: usize,
    /// Bounds of the uniform draw for each coverage radius `r_j`.
    pub coverage_radius: [f64; 2],
    /// Minimum pairwise base-station distance; defaults to `2 * cell_size`.
    pub bs_min_separation: Option<f64>,
    /// Reject layouts that leave some lattice point uncovered.
    pub require_full_coverage: bool,
    /// Fixed layout; overrides the random draw when present.
    pub base_stations: Option<Vec<BaseStationSpec>>,
    pub arss_min: f64,
    pub arss_max: f64,
    pub arss_step: f64,
    pub arss_threshold: f64,
    /// Std of the receiver noise inside the cost (`sigma`).
    pub cost_noise_std: f64,
    /// ARSS measurement noise std in coordinated states.
    pub sigma_c: f64,
    /// ARSS measurement noise std in uncoordinated states.
    pub sigma_u: f64,
    /// Transmit powers; a single value is broadcast to all agents.
    pub powers: Vec<f64>,
    /// Communication radii used for leader selection; empty means all equal.
    pub comm_radii: Vec<f64>,
    /// Per-agent mobility; empty means every agent can move.
    pub mobile: Vec<bool>,
    pub betas: [f64; 3],
    /// Path-loss distance floor; defaults to `cell_size / 2`.
    pub path_loss_floor: Option<f64>,
    /// Largest per-agent state space the enumeration oracle accepts.
    pub enumeration_cap: usize,
}

impl Default for WirelessConfig {
    fn default() -> Self {
        Self {
            grid_size: 14.0,
            cell_size: 2.0,
            n_agents: 2,
            n_base_stations: 2,
            coverage_radius: [9.0, 12.0],
            bs_min_separation: None,
            require_full_coverage: true,
            base_stations: None,
            arss_min: 0.01,
            arss_max: 0.1,
            arss_step: 0.045,
            arss_threshold: 0.075,
            cost_noise_std: 0.0,
            sigma_c: 0.002,
            sigma_u: 0.01,
            powers: vec![1.0],
            comm_radii: Vec::new(),
            mobile: Vec::new(),
            betas: [1.0 / 3.0; 3],
            path_loss_floor: None,
            enumeration_cap: 5000,
        }
    }
}

impl WirelessConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.cell_size > 0.0 && self.grid_size > 0.0) {
            return bad("grid_size and cell_size must be positive".into());
        }
        let ratio = self.grid_size / self.cell_size;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!("grid_size {} is not a multiple of cell_size {}", self.grid_size, self.cell_size));
        }
        if ratio.round() > u16::MAX as f64 - 1.0 {
            return bad("grid too large".into());
        }
        if self.n_agents == 0 {
            return bad("n_agents must be at least 1".into());
        }
        if self.n_base_stations == 0 {
            return bad("n_base_stations must be at least 1".into());
        }
        if !(self.coverage_radius[0] > 0.0 && self.coverage_radius[0] <= self.coverage_radius[1]) {
            return bad("coverage_radius must be an increasing positive pair".into());
        }
        if let Some(bs) = &self.base_stations {
            if bs.len() != self.n_base_stations {
                return bad(format!("{} base stations listed, n_base_stations = {}", bs.len(), self.n_base_stations));
            }
            let n = self.axis_points() as u16;
            if bs.iter().any(|b| b.x >= n || b.y >= n || b.radius <= 0.0) {
                return bad("listed base station off the lattice or with non-positive radius".into());
            }
        }
        if !(self.arss_step > 0.0 && self.arss_min < self.arss_max) {
            return bad("need arss_step > 0 and arss_min < arss_max".into());
        }
        let levels = (self.arss_max - self.arss_min) / self.arss_step;
        if (levels - levels.round()).abs() > 1e-6 {
            return bad("arss range is not a whole number of arss_step".into());
        }
        if self.cost_noise_std < 0.0 || self.sigma_c < 0.0 || self.sigma_u < 0.0 {
            return bad("noise standard deviations must be non-negative".into());
        }
        if self.sigma_u < 5.0 * self.sigma_c {
            return bad(format!("sigma_u = {} must be at least 5 * sigma_c = {}", self.sigma_u, 5.0 * self.sigma_c));
        }
        if self.powers.is_empty() || (self.powers.len() != 1 && self.powers.len() != self.n_agents) {
            return bad("powers must have one entry or one per agent".into());
        }
        if self.powers.iter().any(|&p| !(p > 0.0)) {
            return bad("powers must be positive".into());
        }
        if !self.comm_radii.is_empty() && self.comm_radii.len() != self.n_agents {
            return bad("comm_radii must be empty or one per agent".into());
        }
        if !self.mobile.is_empty() && self.mobile.len() != self.n_agents {
            return bad("mobile must be empty or one per agent".into());
        }
        if self.betas.iter().any(|&b| b < 0.0) || (self.betas.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("cost weights must be non-negative and sum to 1".into());
        }
        if let Some(f) = self.path_loss_floor {
            if !(f > 0.0) {
                return bad("path_loss_floor must be positive".into());
            }
        }
        Ok(())
    }

    /// Lattice points per axis, `L / Delta_L + 1`.
    pub fn axis_points(&self) -> usize {
        (self.grid_size / self.cell_size).round() as usize + 1
    }

    pub fn n_levels(&self) -> usize {
        ((self.arss_max - self.arss_min) / self.arss_step).round() as usize + 1
    }

    pub fn power(&self, agent: usize) -> f64 {
        if self.powers.len() == 1 {
            self.powers[0]
        } else {
            self.powers[agent]
        }
    }

    pub fn is_mobile(&self, agent: usize) -> bool {
        self.mobile.get(agent).copied().unwrap_or(true)
    }

    pub fn min_separation(&self) -> f64 {
        self.bs_min_separation.unwrap_or(2.0 * self.cell_size)
    }

    pub fn floor_distance(&self) -> f64 {
        self.path_loss_floor.unwrap_or(self.cell_size / 2.0)
    }

    /// Agent with the largest communication radius, ties to the lowest id.
    pub fn leader(&self) -> usize {
        let mut best = 0;
        for (i, &r) in self.comm_radii.iter().enumerate() {
            if r > self.comm_radii[best] {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = WirelessConfig::default();
        c.validate().unwrap();
        assert_eq!(c.axis_points(), 8);
        assert_eq!(c.n_levels(), 3);
    }

    #[test]
    fn rejects_weak_uncoordinated_noise() {
        let c = WirelessConfig {
            sigma_c: 0.01,
            sigma_u: 0.02,
            ..WirelessConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_unnormalized_weights() {
        let c = WirelessConfig {
            betas: [0.5, 0.5, 0.5],
            ..WirelessConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn leader_is_widest_radius_lowest_id() {
        let c = WirelessConfig {
            n_agents: 3,
            comm_radii: vec![1.0, 3.0, 3.0],
            ..WirelessConfig::default()
        };
        assert_eq!(c.leader(), 1);
        assert_eq!(WirelessConfig::default().leader(), 0);
    }
}
