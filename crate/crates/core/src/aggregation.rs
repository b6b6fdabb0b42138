//! Combining per-reference metric scores into one score per hypothesis and
//! reference set: max, mean, or a metric's native multi-reference path.

use serde::{Deserialize, Serialize};

use crate::corpus::ReferenceSet;
use crate::metrics::{MetricScore, Scorer};
use crate::{Error, Result};

/// How per-reference scores are (or were) combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Ground-truth reference only; the single-reference baseline.
    Single,
    Max,
    Mean,
    Builtin,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Single => "single",
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
            Aggregation::Builtin => "builtin",
        }
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(Aggregation::Single),
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            "builtin" => Ok(Aggregation::Builtin),
            other => Err(Error::config(format!("unknown aggregation '{other}'"))),
        }
    }
}

/// Combine per-reference scores. Only max and mean operate on score lists;
/// builtin lives inside the metrics and single is the one-element case.
pub fn aggregate(per_reference: &[f64], strategy: Aggregation) -> Result<f64> {
    if per_reference.is_empty() {
        return Err(Error::data("cannot aggregate an empty score list"));
    }
    match strategy {
        Aggregation::Max => Ok(per_reference.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Aggregation::Mean => Ok(per_reference.iter().sum::<f64>() / per_reference.len() as f64),
        other => Err(Error::config(format!(
            "aggregate() supports max and mean, not '{other}'"
        ))),
    }
}

/// Score a hypothesis against a full reference set (ground truth always
/// included as reference 0).
pub fn score_with_refset(
    scorer: &Scorer,
    hypothesis: &str,
    refset: &ReferenceSet,
    strategy: Aggregation,
    drop_filtered: bool,
) -> Result<MetricScore> {
    let texts = refset.reference_texts(drop_filtered);
    match strategy {
        Aggregation::Single => {
            let value = scorer.score_single(hypothesis, &refset.ground_truth)?;
            Ok(MetricScore {
                metric_id: scorer.metric_id(),
                value,
                per_reference: Some(vec![value]),
                aggregation_used: Aggregation::Single,
            })
        }
        Aggregation::Max | Aggregation::Mean => {
            let per_reference: Vec<f64> = texts
                .iter()
                .map(|text| scorer.score_single(hypothesis, text))
                .collect::<Result<_>>()?;
            let value = aggregate(&per_reference, strategy)?;
            Ok(MetricScore {
                metric_id: scorer.metric_id(),
                value,
                per_reference: Some(per_reference),
                aggregation_used: strategy,
            })
        }
        Aggregation::Builtin => {
            let value = scorer.score_builtin(hypothesis, &texts)?;
            Ok(MetricScore {
                metric_id: scorer.metric_id(),
                value,
                per_reference: None,
                aggregation_used: Aggregation::Builtin,
            })
        }
    }
}

/// System-level score: arithmetic mean of aggregated segment scores.
pub fn system_score(segment_scores: &[f64]) -> Result<f64> {
    if segment_scores.is_empty() {
        return Err(Error::data("system score needs at least one segment score"));
    }
    Ok(segment_scores.iter().sum::<f64>() / segment_scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_and_mean() {
        assert_eq!(aggregate(&[0.2, 0.5, 0.3], Aggregation::Max).unwrap(), 0.5);
        assert!((aggregate(&[0.2, 0.4], Aggregation::Mean).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_element_reduces_to_identity() {
        for strategy in [Aggregation::Max, Aggregation::Mean] {
            assert_eq!(aggregate(&[0.7], strategy).unwrap(), 0.7);
        }
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(aggregate(&[], Aggregation::Max).is_err());
    }

    #[test]
    fn unsupported_strategies_rejected() {
        assert!(aggregate(&[0.1], Aggregation::Builtin).is_err());
        assert!(aggregate(&[0.1], Aggregation::Single).is_err());
    }

    #[test]
    fn roundtrip_names() {
        for a in [
            Aggregation::Single,
            Aggregation::Max,
            Aggregation::Mean,
            Aggregation::Builtin,
        ] {
            assert_eq!(a.as_str().parse::<Aggregation>().unwrap(), a);
        }
    }
}
