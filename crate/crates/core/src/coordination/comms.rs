use serde::{Deserialize, Serialize};

/// Counts of messages and scalar payload units exchanged with the leader.
///
/// One unit is one scalar (a Q-value, a cost, a flag, a confidence or an
/// encoded state/action index).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommsLedger {
    pub to_leader: u64,
    pub from_leader: u64,
    pub payload: u64,
    current: u64,
    per_iteration: Vec<u64>,
    keep_log: bool,
}

impl CommsLedger {
    pub fn new(keep_log: bool) -> Self {
        Self {
            keep_log,
            ..Self::default()
        }
    }

    /// `messages` messages to the leader carrying `units` scalars in total.
    pub fn send_to_leader(&mut self, messages: u64, units: u64) {
        self.to_leader += messages;
        self.charge(units);
    }

    pub fn send_from_leader(&mut self, messages: u64, units: u64) {
        self.from_leader += messages;
        self.charge(units);
    }

    pub fn end_iteration(&mut self) {
        if self.keep_log {
            self.per_iteration.push(self.current);
        }
        self.current = 0;
    }

    /// Units charged per completed iteration, when logging is enabled.
    pub fn per_iteration(&self) -> &[u64] {
        &self.per_iteration
    }

    fn charge(&mut self, units: u64) {
        self.payload += units;
        self.current += units;
    }
}

/// Measured payload against the `N_T * max(T, |S_i| |A_i|)` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommsCost {
    pub payload: u64,
    pub scale: f64,
    /// `payload / scale`.
    pub ratio: f64,
}

impl CommsCost {
    /// Whether the payload is within `constant * scale`.
    pub fn conforms(&self, constant: f64) -> bool {
        self.payload as f64 <= constant * self.scale * (1.0 + 1e-12)
    }
}

pub fn comms_cost(ledger: &CommsLedger, iterations: u64, n_agents: usize, n_states: usize, n_actions: usize) -> CommsCost {
    let scale = n_agents as f64 * (iterations as f64).max((n_states * n_actions) as f64);
    CommsCost {
        payload: ledger.payload,
        scale,
        ratio: ledger.payload as f64 / scale,
    }
}

/// Smallest constant under which every calibration run conforms.
pub fn fit_comms_constant(costs: &[CommsCost]) -> f64 {
    costs.iter().map(|c| c.ratio).fold(0.0, f64::max)
}
