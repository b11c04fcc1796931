use crate::error::{Error, Result};

use super::overlap::MetricsReport;

/// Weights of the challenge score. LFPR enters as `1 − lfpr`. The defaults
/// follow the public lesion segmentation challenge this score comes from,
/// not a value fixed by the network method itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreWeights {
    pub dice: f64,
    pub ppv: f64,
    pub lfpr: f64,
    pub ltpr: f64,
    pub volume_correlation: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            dice: 0.125,
            ppv: 0.125,
            lfpr: 0.25,
            ltpr: 0.25,
            volume_correlation: 0.25,
        }
    }
}

impl ScoreWeights {
    fn as_array(&self) -> [f64; 5] {
        [self.dice, self.ppv, self.lfpr, self.ltpr, self.volume_correlation]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid(format!("score weights must be non-negative: {w:?}")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("score weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// `100 · Σ wᵢ · metricᵢ`. Without a cohort volume correlation its weight
/// is dropped and the remaining weights are rescaled to sum to one.
/// Negative correlations contribute zero.
pub fn challenge_score(report: &MetricsReport, weights: &ScoreWeights, volume_correlation: Option<f64>) -> Result<f64> {
    weights.validate()?;
    let mut total = weights.dice * report.dice
        + weights.ppv * report.ppv
        + weights.lfpr * (1.0 - report.lfpr)
        + weights.ltpr * report.ltpr;
    let norm = match volume_correlation {
        Some(r) => {
            total += weights.volume_correlation * r.clamp(0.0, 1.0);
            1.0
        }
        None => 1.0 - weights.volume_correlation,
    };
    if norm <= 0.0 {
        return Err(Error::invalid("score weights put everything on volume correlation, which is unavailable"));
    }
    Ok(100.0 * total / norm)
}
