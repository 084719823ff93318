use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coordination::MmemqConfig;
use crate::error::{Error, Result};
use crate::wireless::WirelessConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(rename = "m_memq", alias = "mmemq")]
    MMemq,
    Centralized,
    Independent,
    Hysteretic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::MMemq,
        Algorithm::Centralized,
        Algorithm::Independent,
        Algorithm::Hysteretic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::MMemq => "m_memq",
            Algorithm::Centralized => "centralized",
            Algorithm::Independent => "independent",
            Algorithm::Hysteretic => "hysteretic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "m_memq" | "mmemq" => Ok(Algorithm::MMemq),
            "centralized" => Ok(Algorithm::Centralized),
            "independent" => Ok(Algorithm::Independent),
            "hysteretic" => Ok(Algorithm::Hysteretic),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Iteration budget, seeds and evaluation cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Learning iterations `T`; each is one trajectory of
    /// `learner.trajectory_length` environment steps.
    pub iterations: u64,
    pub seeds: Vec<u64>,
    /// Seed of the base-station layout; `None` draws it from each run seed.
    pub layout_seed: Option<u64>,
    /// Iterations between metric snapshots.
    pub snapshot_interval: u64,
    /// Hysteretic slow-rate factor `alpha' / alpha`.
    pub hysteretic_ratio: f64,
    /// AQD level for the sample-to-threshold index.
    pub aqd_threshold: f64,
    /// Value-iteration tolerance of the joint oracle.
    pub oracle_tolerance: f64,
    /// Keep the per-iteration log in the run record.
    pub trace: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            seeds: vec![1],
            layout_seed: Some(0),
            snapshot_interval: 1000,
            hysteretic_ratio: 0.1,
            aqd_threshold: 1.0,
            oracle_tolerance: 1e-6,
            trace: false,
        }
    }
}

/// One sweep dimension: a dotted config key and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

/// Sizes of the acceptance suite. Defaults are the desk-scale values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceSettings {
    /// Seeds `1..=seeds` for the multi-seed checks.
    pub seeds: u64,
    /// Seeds that must pass in the multi-seed checks.
    pub required_passes: u64,
    /// Uncoordinated pairs compared with the per-agent oracles.
    pub oracle_pairs: usize,
    pub oracle_iterations: u64,
    /// Constant update ratio of the variance, beta and stabilization runs.
    pub constant_update_ratio: f64,
    /// Iterations of the prefix run that picks the tracked pairs.
    pub pilot_iterations: u64,
    pub mc_trials: u64,
    pub grid_points: usize,
    /// Position profiles sampled to size the coordinated class.
    pub geometry_samples: usize,
    /// Agents in the many-agent misdetection snapshot.
    pub many_agents: usize,
    pub threshold_snapshots: usize,
    pub betas: Vec<f64>,
    pub stabilization_iterations: u64,
    pub window: usize,
    pub windows: usize,
    pub comms_agents: Vec<usize>,
    pub comms_iterations: u64,
    /// Belief support cap for the comms runs; payload does not depend on it.
    pub comms_support_cap: usize,
    pub memq_states: usize,
    pub memq_actions: usize,
    pub memq_branching: usize,
    pub memq_horizon: u64,
    pub fuzz_cases: u64,
    /// Iterations of the repeated runs in the determinism check.
    pub determinism_iterations: u64,
}

impl Default for AcceptanceSettings {
    fn default() -> Self {
        Self {
            seeds: 20,
            required_passes: 18,
            oracle_pairs: 5,
            oracle_iterations: 50_000,
            constant_update_ratio: 0.5,
            pilot_iterations: 500,
            mc_trials: 100_000,
            grid_points: 20,
            geometry_samples: 20_000,
            many_agents: 5,
            threshold_snapshots: 3,
            betas: vec![0.5, 0.1, 0.02],
            stabilization_iterations: 10_000,
            window: 1000,
            windows: 5,
            comms_agents: vec![2, 3, 4, 5],
            comms_iterations: 1000,
            comms_support_cap: 20_000,
            memq_states: 20,
            memq_actions: 4,
            memq_branching: 4,
            memq_horizon: 300_000,
            fuzz_cases: 100_000,
            determinism_iterations: 200,
        }
    }
}

impl AcceptanceSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("acceptance: {m}")));
        if self.seeds == 0 || self.required_passes > self.seeds {
            return bad("need seeds > 0 and required_passes <= seeds");
        }
        if !(self.constant_update_ratio > 0.0 && self.constant_update_ratio < 1.0) {
            return bad("constant_update_ratio must be in (0,1)");
        }
        if self.grid_points < 2 || self.mc_trials == 0 || self.geometry_samples == 0 {
            return bad("need grid_points >= 2 and positive mc_trials, geometry_samples");
        }
        if self.window == 0 || self.windows < 2 {
            return bad("need window > 0 and at least two windows");
        }
        if (self.window * self.windows) as u64 > self.stabilization_iterations {
            return bad("stabilization_iterations shorter than the windows");
        }
        if self.comms_agents.len() < 2 || self.comms_agents.iter().any(|&n| n < 2) {
            return bad("comms_agents needs two or more entries, each at least 2");
        }
        if self.comms_support_cap == 0 {
            return bad("comms_support_cap must be positive");
        }
        if self.many_agents < 2 || self.betas.iter().any(|&b| !(b > 0.0)) {
            return bad("many_agents must be >= 2 and betas positive");
        }
        if self.memq_states == 0 || self.memq_actions == 0 || self.memq_branching == 0 {
            return bad("empty single-agent problem");
        }
        Ok(())
    }
}

/// Everything needed to reproduce a run or a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub run: RunSettings,
    pub wireless: WirelessConfig,
    pub learner: MmemqConfig,
    pub sweep: Vec<SweepAxis>,
    pub output: OutputConfig,
    pub acceptance: AcceptanceSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::MMemq,
            run: RunSettings::default(),
            wireless: WirelessConfig::default(),
            learner: MmemqConfig::default(),
            sweep: Vec::new(),
            output: OutputConfig::default(),
            acceptance: AcceptanceSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.run.snapshot_interval == 0 {
            return Err(Error::Config("snapshot interval must be positive".into()));
        }
        if !(self.run.hysteretic_ratio > 0.0 && self.run.hysteretic_ratio <= 1.0) {
            return Err(Error::Config("hysteretic ratio must be in (0,1]".into()));
        }
        self.wireless.validate()?;
        self.learner.validate()?;
        self.acceptance.validate()?;
        for axis in &self.sweep {
            if axis.values.is_empty() {
                return Err(Error::Config(format!("sweep axis `{}` has no values", axis.key)));
            }
            self.with_override(&axis.key, axis.values[0].clone())?;
        }
        Ok(())
    }

    /// Copy with one dotted key replaced, e.g. `wireless.arss_step`.
    ///
    /// The key must already exist in the fully populated config; the result
    /// is re-validated.
    pub fn with_override(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut tree = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields one part");
        let unknown = || Error::Config(format!("unknown config key `{key}`"));
        let mut node = &mut tree;
        for part in parents {
            node = node.get_mut(*part).filter(|v| v.is_table()).ok_or_else(unknown)?;
        }
        let slot = node.get_mut(*last).ok_or_else(unknown)?;
        *slot = coerce(slot, value);
        let mut out: Self = tree.try_into().map_err(|e: toml::de::Error| Error::Config(format!("`{key}`: {e}")))?;
        out.sweep.clear();
        out.wireless.validate()?;
        out.learner.validate()?;
        out.sweep = self.sweep.clone();
        Ok(out)
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Integers given for float-valued keys are widened.
fn coerce(existing: &toml::Value, value: toml::Value) -> toml::Value {
    match (existing, &value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(*i as f64),
        _ => value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = ExperimentConfig::from_toml_str("algorithm = \"independent\"\n[run]\niterations = 10\n").unwrap();
        assert_eq!(c.algorithm, Algorithm::Independent);
        assert_eq!(c.run.iterations, 10);
        assert_eq!(c.wireless, WirelessConfig::default());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml_str("[run]\niterations = 0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[run]\nseeds = []\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[run]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("algorithm = \"dqn\"\n").is_err());
    }

    #[test]
    fn overrides_follow_dotted_keys() {
        let c = ExperimentConfig::default();
        let d = c.with_override("wireless.arss_threshold", toml::Value::Float(0.05)).unwrap();
        assert_eq!(d.wireless.arss_threshold, 0.05);
        let e = c.with_override("wireless.n_agents", toml::Value::Integer(3)).unwrap();
        assert_eq!(e.wireless.n_agents, 3);
        let f = c.with_override("learner.gamma", toml::Value::Integer(0)).unwrap();
        assert_eq!(f.learner.gamma, 0.0);
        assert!(c.with_override("wireless.nope", toml::Value::Integer(1)).is_err());
        assert!(c.with_override("learner.gamma", toml::Value::Float(1.5)).is_err());
    }

    #[test]
    fn sweep_axes_must_name_existing_keys() {
        let bad = "[[sweep]]\nkey = \"wireless.size\"\nvalues = [1]\n";
        assert!(ExperimentConfig::from_toml_str(bad).is_err());
        let good = "[[sweep]]\nkey = \"wireless.n_agents\"\nvalues = [2, 3]\n";
        assert_eq!(ExperimentConfig::from_toml_str(good).unwrap().sweep.len(), 1);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.run.iterations += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
