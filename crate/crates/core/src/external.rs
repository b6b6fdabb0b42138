//! Adapter for per-reference scores produced outside the toolkit (neural or
//! LLM metrics), so aggregation and meta-evaluation apply uniformly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate, Aggregation};
use crate::corpus::Benchmark;
use crate::metrics::ScoreRecord;
use crate::{Error, Result};

/// One externally computed score for one (metric, system, segment,
/// reference) tuple. `reference_index` 0 is the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScoreRecord {
    pub metric_id: String,
    pub system_id: String,
    pub segment_id: String,
    pub reference_index: u32,
    pub value: f64,
}

impl ExternalScoreRecord {
    fn key(&self) -> (String, String, String, u32) {
        (
            self.metric_id.clone(),
            self.system_id.clone(),
            self.segment_id.clone(),
            self.reference_index,
        )
    }
}

/// Load line-delimited external score records and validate them against the
/// benchmark: ids must resolve, reference indexes must be in range, keys
/// must be unique.
pub fn load_external_scores(
    path: impl AsRef<Path>,
    benchmark: &Benchmark,
) -> Result<Vec<ExternalScoreRecord>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let systems: std::collections::HashSet<&str> = benchmark.systems().into_iter().collect();
    let mut seen: std::collections::HashSet<(String, String, String, u32)> =
        std::collections::HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExternalScoreRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let refset = benchmark.reference_set(&record.segment_id).ok_or_else(|| {
            Error::data(format!(
                "{}:{line_no}: unknown segment '{}'",
                path.display(),
                record.segment_id
            ))
        })?;
        if !systems.contains(record.system_id.as_str()) {
            return Err(Error::data(format!(
                "{}:{line_no}: unknown system '{}'",
                path.display(),
                record.system_id
            )));
        }
        let n_refs = 1 + refset.diversified.len();
        if record.reference_index as usize >= n_refs {
            return Err(Error::data(format!(
                "{}:{line_no}: reference_index {} out of range for segment '{}' with {} reference(s)",
                path.display(),
                record.reference_index,
                record.segment_id,
                n_refs
            )));
        }
        if !seen.insert(record.key()) {
            return Err(Error::data(format!(
                "{}:{line_no}: duplicate record for ({}, {}, {}, {})",
                path.display(),
                record.metric_id,
                record.system_id,
                record.segment_id,
                record.reference_index
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Aggregate external per-reference scores into score dumps with the same
/// semantics and format as internal ones. External metrics have no native
/// multi-reference mode, so only max and mean apply; every key needs its
/// ground-truth (index 0) record.
pub fn aggregate_external(
    records: &[ExternalScoreRecord],
    strategy: Aggregation,
) -> Result<Vec<ScoreRecord>> {
    if !matches!(strategy, Aggregation::Max | Aggregation::Mean) {
        return Err(Error::config(format!(
            "external metrics support max and mean aggregation, not '{strategy}'"
        )));
    }
    let mut grouped: BTreeMap<(String, String, String), Vec<(u32, f64)>> = BTreeMap::new();
    for record in records {
        grouped
            .entry((
                record.metric_id.clone(),
                record.system_id.clone(),
                record.segment_id.clone(),
            ))
            .or_default()
            .push((record.reference_index, record.value));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for ((metric, system, segment), mut values) in grouped {
        values.sort_by_key(|(idx, _)| *idx);
        if values[0].0 != 0 {
            return Err(Error::data(format!(
                "({metric}, {system}, {segment}) lacks the ground-truth record (reference_index 0)"
            )));
        }
        let per_reference: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
        let value = aggregate(&per_reference, strategy)?;
        out.push(ScoreRecord {
            metric,
            system,
            segment,
            value,
            per_reference: Some(per_reference),
            aggregation: strategy,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(metric: &str, system: &str, segment: &str, idx: u32, value: f64) -> ExternalScoreRecord {
        ExternalScoreRecord {
            metric_id: metric.into(),
            system_id: system.into(),
            segment_id: segment.into(),
            reference_index: idx,
            value,
        }
    }

    #[test]
    fn aggregates_max_and_mean() {
        let records = vec![
            record("bertscore", "sysA", "s1", 0, 0.9),
            record("bertscore", "sysA", "s1", 1, 0.95),
            record("bertscore", "sysA", "s1", 2, 0.92),
        ];
        let max = aggregate_external(&records, Aggregation::Max).unwrap();
        assert_eq!(max.len(), 1);
        assert!((max[0].value - 0.95).abs() < 1e-12);
        assert_eq!(max[0].per_reference.as_ref().unwrap().len(), 3);
        let mean = aggregate_external(&records, Aggregation::Mean).unwrap();
        assert!((mean[0].value - (0.9 + 0.95 + 0.92) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_reference_is_identity() {
        let records = vec![record("comet", "sysA", "s1", 0, 0.77)];
        let out = aggregate_external(&records, Aggregation::Max).unwrap();
        assert_eq!(out[0].value, 0.77);
    }

    #[test]
    fn missing_ground_truth_is_an_error() {
        let records = vec![record("comet", "sysA", "s1", 1, 0.5)];
        let err = aggregate_external(&records, Aggregation::Max).unwrap_err();
        assert!(err.to_string().contains("ground-truth record"));
    }

    #[test]
    fn builtin_is_rejected_for_external_metrics() {
        let records = vec![record("comet", "sysA", "s1", 0, 0.5)];
        assert!(aggregate_external(&records, Aggregation::Builtin).is_err());
    }
}
