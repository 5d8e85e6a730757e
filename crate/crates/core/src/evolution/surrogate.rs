use crate::metric::{PerScale, ScaleStats};
use crate::policy::{encode_policy, Genome, Policy, GENOME_LEN};

use super::{Evaluator, EvaluatorError};

const AP_BEFORE: PerScale<f64> = PerScale {
    small: 0.30,
    middle: 0.45,
    large: 0.55,
};

/// Deterministic stand-in for training: stats degrade with the Hamming
/// distance to a hidden target genome, and the metric is zero only at the
/// target.
#[derive(Clone, Debug)]
pub struct SurrogateEvaluator {
    target: Genome,
}

impl SurrogateEvaluator {
    pub fn new(target: Genome) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &Genome {
        &self.target
    }

    /// Stats for a normalized distance `d` in `[0, 1]`.
    pub fn stats_for_distance(d: f64) -> ScaleStats {
        ScaleStats {
            losses: PerScale::new(1.0 + d, 1.0, 1.0 - 0.5 * d),
            ap_before: AP_BEFORE,
            ap_after: PerScale::new(AP_BEFORE.small * (1.0 - 0.5 * d), AP_BEFORE.middle, AP_BEFORE.large),
            overall_ap_after: None,
        }
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, policy: &Policy) -> Result<ScaleStats, EvaluatorError> {
        let genome = encode_policy(policy).map_err(|e| EvaluatorError::Other(e.to_string()))?;
        let d = genome.hamming(&self.target) as f64 / GENOME_LEN as f64;
        Ok(Self::stats_for_distance(d))
    }
}
