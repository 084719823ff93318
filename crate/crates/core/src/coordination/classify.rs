use crate::wireless::Regime;

/// Coordinated iff some agent's reading exceeds the threshold.
pub fn classify_state(readings: &[f64], threshold: f64) -> Regime {
    Regime::from_flag(readings.iter().any(|&r| r > threshold))
}
