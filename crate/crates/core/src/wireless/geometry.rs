use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WirelessConfig;
use crate::error::{Error, Result};

/// A lattice point, in lattice indices (multiply by the cell size for
/// distance units).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: u16,
    pub y: u16,
}

impl Position {
    pub fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }
}

/// One step of the random walk. `Up` increases `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Right,
    Down,
    Left,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Right, Move::Down, Move::Left, Move::Stay];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub cell_size: f64,
    /// Lattice points per axis.
    pub axis_points: usize,
}

impl GridGeometry {
    pub fn from_config(config: &WirelessConfig) -> Self {
        Self {
            cell_size: config.cell_size,
            axis_points: config.axis_points(),
        }
    }

    pub fn n_positions(&self) -> usize {
        self.axis_points * self.axis_points
    }

    pub fn position_index(&self, p: Position) -> usize {
        p.y as usize * self.axis_points + p.x as usize
    }

    pub fn position_at(&self, index: usize) -> Position {
        Position::new((index % self.axis_points) as u16, (index / self.axis_points) as u16)
    }

    pub fn contains(&self, p: Position) -> bool {
        (p.x as usize) < self.axis_points && (p.y as usize) < self.axis_points
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.n_positions()).map(|i| self.position_at(i))
    }

    /// Euclidean distance in physical units.
    pub fn distance(&self, a: Position, b: Position) -> f64 {
        let dx = (a.x as f64 - b.x as f64) * self.cell_size;
        let dy = (a.y as f64 - b.y as f64) * self.cell_size;
        dx.hypot(dy)
    }

    /// Applies a move; moves that would leave the lattice resolve to staying.
    pub fn apply(&self, p: Position, m: Move) -> Position {
        let last = (self.axis_points - 1) as u16;
        match m {
            Move::Up if p.y < last => Position::new(p.x, p.y + 1),
            Move::Right if p.x < last => Position::new(p.x + 1, p.y),
            Move::Down if p.y > 0 => Position::new(p.x, p.y - 1),
            Move::Left if p.x > 0 => Position::new(p.x - 1, p.y),
            _ => p,
        }
    }

    /// Distribution of the next position under one uniform random-walk step,
    /// with off-grid moves merged into `p` itself. Sorted by position index.
    pub fn walk_distribution(&self, p: Position) -> Vec<(Position, f64)> {
        let mut out: Vec<(Position, f64)> = Vec::with_capacity(5);
        for m in Move::ALL {
            let q = self.apply(p, m);
            match out.iter_mut().find(|(r, _)| *r == q) {
                Some((_, w)) => *w += 0.2,
                None => out.push((q, 0.2)),
            }
        }
        out.sort_by_key(|(q, _)| self.position_index(*q));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    /// 1-based id, matching the action encoding.
    pub id: usize,
    pub position: Position,
    pub radius: f64,
}

/// Base stations and the per-position coverage lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct BsLayout {
    pub stations: Vec<BaseStation>,
    geometry: GridGeometry,
    /// `covered[pos * n_bs + (b-1)]`
    covered: Vec<bool>,
}

const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;

impl BsLayout {
    pub fn new(geometry: GridGeometry, stations: Vec<BaseStation>) -> Self {
        let n_bs = stations.len();
        let mut covered = vec![false; geometry.n_positions() * n_bs];
        for (pi, p) in geometry.positions().enumerate() {
            for (j, bs) in stations.iter().enumerate() {
                covered[pi * n_bs + j] = geometry.distance(p, bs.position) <= bs.radius + 1e-9;
            }
        }
        Self {
            stations,
            geometry,
            covered,
        }
    }

    /// Uses the configured layout if given, else draws positions uniformly
    /// over the lattice with rejection for the minimum separation (and full
    /// coverage when required). Radii are uniform within the configured
    /// bounds.
    pub fn place<R: Rng + ?Sized>(config: &WirelessConfig, rng: &mut R) -> Result<Self> {
        let geometry = GridGeometry::from_config(config);
        if let Some(specs) = &config.base_stations {
            let stations = specs
                .iter()
                .enumerate()
                .map(|(j, s)| BaseStation {
                    id: j + 1,
                    position: Position::new(s.x, s.y),
                    radius: s.radius,
                })
                .collect();
            return Ok(Self::new(geometry, stations));
        }
        let [r_lo, r_hi] = config.coverage_radius;
        let sep = config.min_separation();
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let mut stations: Vec<BaseStation> = Vec::with_capacity(config.n_base_stations);
            let mut ok = true;
            for j in 0..config.n_base_stations {
                let p = geometry.position_at(rng.random_range(0..geometry.n_positions()));
                if stations.iter().any(|b| geometry.distance(b.position, p) < sep - 1e-9) {
                    ok = false;
                    break;
                }
                let radius = if r_hi > r_lo { rng.random_range(r_lo..=r_hi) } else { r_lo };
                stations.push(BaseStation {
                    id: j + 1,
                    position: p,
                    radius,
                });
            }
            if !ok {
                continue;
            }
            let layout = Self::new(geometry, stations);
            if !config.require_full_coverage || layout.fully_covered() {
                return Ok(layout);
            }
        }
        Err(Error::Config(format!(
            "no base-station layout with separation {sep} and full coverage after {MAX_PLACEMENT_ATTEMPTS} draws"
        )))
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    /// Whether BS `b` (1-based) covers `p`.
    pub fn covers(&self, b: usize, p: Position) -> bool {
        b >= 1 && b <= self.stations.len() && self.covered[self.geometry.position_index(p) * self.stations.len() + b - 1]
    }

    pub fn fully_covered(&self) -> bool {
        self.geometry.positions().all(|p| (1..=self.stations.len()).any(|b| self.covers(b, p)))
    }

    pub fn distance_to(&self, b: usize, p: Position) -> f64 {
        self.geometry.distance(p, self.stations[b - 1].position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> GridGeometry {
        GridGeometry {
            cell_size: 2.0,
            axis_points: n,
        }
    }

    #[test]
    fn corner_walk_merges_off_grid_moves_into_stay() {
        let g = grid(3);
        let d = g.walk_distribution(Position::new(0, 0));
        assert_eq!(d.len(), 3);
        let stay = d.iter().find(|(p, _)| *p == Position::new(0, 0)).unwrap().1;
        assert!((stay - 0.6).abs() < 1e-12);
        assert!((d.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn position_index_round_trips() {
        let g = grid(5);
        for i in 0..g.n_positions() {
            assert_eq!(g.position_index(g.position_at(i)), i);
        }
    }

    #[test]
    fn placement_respects_separation_and_coverage() {
        let config = WirelessConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let layout = BsLayout::place(&config, &mut rng).unwrap();
            assert!(layout.fully_covered());
            let s = &layout.stations;
            let g = GridGeometry::from_config(&config);
            assert!(g.distance(s[0].position, s[1].position) >= config.min_separation());
        }
    }
}
