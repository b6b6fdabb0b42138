//! Correlation of metric scores with human judgments: segment-level Kendall
//! tau-b, sample-level Spearman, system-level pairwise accuracy and
//! preference accuracy.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Benchmark, JudgmentKind};
use crate::metrics::ScoreRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    KendallTauB,
    Spearman,
    PairwiseAccuracy,
    PreferenceAccuracy,
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Statistic::KendallTauB => "kendall_tau_b",
            Statistic::Spearman => "spearman",
            Statistic::PairwiseAccuracy => "pairwise_accuracy",
            Statistic::PreferenceAccuracy => "preference_accuracy",
        })
    }
}

/// One correlation/accuracy measurement of one metric in one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub metric_id: String,
    pub setting: String,
    pub statistic: Statistic,
    pub value: f64,
    pub n_items: usize,
    pub n_excluded: usize,
}

fn check_paired(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::data(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::data("need at least 2 paired observations"));
    }
    let all_tied = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    if all_tied(x) || all_tied(y) {
        return Err(Error::data("degenerate input: one variable is all ties"));
    }
    Ok(())
}

fn tie_pair_count(sorted: &[f64]) -> f64 {
    let mut pairs = 0.0f64;
    let mut run = 1.0f64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
        } else {
            pairs += run * (run - 1.0) / 2.0;
            run = 1.0;
        }
    }
    pairs + run * (run - 1.0) / 2.0
}

/// Merge sort counting the swaps needed to order by the second component;
/// equal keys are not swapped.
fn sort_counting_swaps(pairs: &mut Vec<(f64, f64)>) -> f64 {
    let n = pairs.len();
    let mut buffer: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut swaps = 0.0f64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        buffer.clear();
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j) = (start, mid);
            while i < mid || j < end {
                if i < mid && (j >= end || pairs[i].1 <= pairs[j].1) {
                    buffer.push(pairs[i]);
                    i += 1;
                } else {
                    swaps += (mid - i) as f64;
                    buffer.push(pairs[j]);
                    j += 1;
                }
            }
            start = end;
        }
        pairs.copy_from_slice(&buffer);
        width *= 2;
    }
    swaps
}

/// Kendall tau-b: (C - D) / sqrt((P - Tx)(P - Ty)) with P = n(n-1)/2 and
/// tie corrections in both variables.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y)?;
    let n = x.len();
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let total_pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tied_x = tie_pair_count(&xs);
    // pairs tied in both: count runs of identical (x, y)
    let mut tied_xy = 0.0f64;
    let mut run = 1.0f64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
        } else {
            tied_xy += run * (run - 1.0) / 2.0;
            run = 1.0;
        }
    }
    tied_xy += run * (run - 1.0) / 2.0;

    let swaps = sort_counting_swaps(&mut pairs);
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let tied_y = tie_pair_count(&ys);

    // C - D = P - Tx - Ty + Txy - 2 * swaps
    let concordant_minus_discordant = total_pairs - tied_x - tied_y + tied_xy - 2.0 * swaps;
    let denominator = ((total_pairs - tied_x) * (total_pairs - tied_y)).sqrt();
    if denominator == 0.0 {
        return Err(Error::data("degenerate input: one variable is all ties"));
    }
    Ok((concordant_minus_discordant / denominator).clamp(-1.0, 1.0))
}

/// Mid-ranks (average rank across ties), 1-based.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let average = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = average;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mean_x) * (b - mean_y);
        var_x += (a - mean_x).powi(2);
        var_y += (b - mean_y).powi(2);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::data("degenerate input: zero variance"));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman: Pearson correlation of mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y)?;
    pearson(&midranks(x), &midranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseOutcome {
    pub accuracy: f64,
    pub n_pairs: usize,
    pub n_excluded: usize,
}

/// Over all unordered system pairs with a nonzero human delta: the fraction
/// where the metric delta has the same sign. Metric ties count as incorrect;
/// human ties are excluded (reported in `n_excluded`).
pub fn pairwise_system_accuracy(
    metric_scores: &BTreeMap<String, f64>,
    human_scores: &BTreeMap<String, f64>,
) -> Result<PairwiseOutcome> {
    if metric_scores.len() != human_scores.len()
        || !metric_scores.keys().eq(human_scores.keys())
    {
        return Err(Error::data("metric and human system sets differ"));
    }
    if metric_scores.len() < 2 {
        return Err(Error::data("need at least 2 systems"));
    }
    let systems: Vec<&String> = metric_scores.keys().collect();
    let mut correct = 0usize;
    let mut evaluable = 0usize;
    let mut excluded = 0usize;
    for i in 0..systems.len() {
        for j in (i + 1)..systems.len() {
            let human_delta = human_scores[systems[i]] - human_scores[systems[j]];
            if human_delta == 0.0 {
                excluded += 1;
                continue;
            }
            evaluable += 1;
            let metric_delta = metric_scores[systems[i]] - metric_scores[systems[j]];
            if metric_delta != 0.0 && metric_delta.signum() == human_delta.signum() {
                correct += 1;
            }
        }
    }
    if evaluable == 0 {
        return Err(Error::data("zero evaluable pairs: all human scores tied"));
    }
    Ok(PairwiseOutcome {
        accuracy: correct as f64 / evaluable as f64,
        n_pairs: evaluable,
        n_excluded: excluded,
    })
}

/// One scored preference instance: candidate scores and the human choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceInstance {
    pub score_a: f64,
    pub score_b: f64,
    pub preferred_index: u8,
}

/// Fraction of instances where the preferred candidate scores strictly
/// higher; score ties count as incorrect.
pub fn preference_accuracy(instances: &[PreferenceInstance]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::data("no preference instances for this setting"));
    }
    let correct = instances
        .iter()
        .filter(|inst| {
            let (preferred, other) = if inst.preferred_index == 0 {
                (inst.score_a, inst.score_b)
            } else {
                (inst.score_b, inst.score_a)
            };
            preferred > other
        })
        .count();
    Ok(correct as f64 / instances.len() as f64)
}

/// Evaluation level of `correlation_suite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLevel {
    Segment,
    System,
    Sample,
    Preference,
}

impl std::str::FromStr for EvalLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "segment" => Ok(EvalLevel::Segment),
            "system" => Ok(EvalLevel::System),
            "sample" => Ok(EvalLevel::Sample),
            "preference" => Ok(EvalLevel::Preference),
            other => Err(Error::config(format!("unknown evaluation level '{other}'"))),
        }
    }
}

/// How segment-level scores are grouped before tau: pooled over all
/// (system, segment) pairs per language pair (default), or tau per system
/// then averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentGrouping {
    #[default]
    Pooled,
    PerSystemAverage,
}

struct ScoreTable<'a> {
    by_key: HashMap<(&'a str, &'a str, &'a str), f64>,
    metrics: Vec<&'a str>,
}

impl<'a> ScoreTable<'a> {
    fn build(dumps: &'a [ScoreRecord]) -> Self {
        let mut by_key = HashMap::new();
        let mut metrics = BTreeSet::new();
        for record in dumps {
            metrics.insert(record.metric.as_str());
            by_key.insert(
                (
                    record.metric.as_str(),
                    record.system.as_str(),
                    record.segment.as_str(),
                ),
                record.value,
            );
        }
        ScoreTable {
            by_key,
            metrics: metrics.into_iter().collect(),
        }
    }

    fn get(&self, metric: &str, system: &str, segment: &str) -> Option<f64> {
        self.by_key.get(&(metric, system, segment)).copied()
    }
}

/// One correlation report per (metric, setting, statistic). Coverage gaps
/// (judged items without a score) are an error listing the missing keys.
pub fn correlation_suite(
    benchmark: &Benchmark,
    dumps: &[ScoreRecord],
    level: EvalLevel,
    grouping: SegmentGrouping,
) -> Result<Vec<CorrelationReport>> {
    let table = ScoreTable::build(dumps);
    if table.metrics.is_empty() {
        return Err(Error::data("no score records given"));
    }
    let lp_of_segment: HashMap<&str, &str> = benchmark
        .segments
        .iter()
        .map(|s| (s.id.as_str(), s.language_pair.as_str()))
        .collect();

    let mut reports: Vec<CorrelationReport> = table
        .metrics
        .par_iter()
        .map(|&metric| metric_reports(benchmark, &table, &lp_of_segment, metric, level, grouping))
        .collect::<Result<Vec<Vec<CorrelationReport>>>>()?
        .into_iter()
        .flatten()
        .collect();
    reports.sort_by(|a, b| {
        (&a.metric_id, &a.setting, a.statistic).cmp(&(&b.metric_id, &b.setting, b.statistic))
    });
    Ok(reports)
}

fn missing_error(metric: &str, missing: &[String]) -> Error {
    let shown: Vec<&String> = missing.iter().take(5).collect();
    Error::data(format!(
        "coverage gap: metric '{metric}' lacks scores for {} judged item(s), e.g. {shown:?}",
        missing.len()
    ))
}

fn metric_reports(
    benchmark: &Benchmark,
    table: &ScoreTable<'_>,
    lp_of_segment: &HashMap<&str, &str>,
    metric: &str,
    level: EvalLevel,
    grouping: SegmentGrouping,
) -> Result<Vec<CorrelationReport>> {
    let mut reports = Vec::new();
    match level {
        EvalLevel::Segment | EvalLevel::System => {
            // (lp, system) -> (metric scores, human scores) pooled over segments
            let mut pooled: BTreeMap<(&str, &str), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            let mut missing: Vec<String> = Vec::new();
            for judgment in &benchmark.human_judgments {
                if judgment.kind != JudgmentKind::SegmentScore {
                    continue;
                }
                let (Some(segment), Some(system), Some(human)) = (
                    judgment.segment_id.as_deref(),
                    judgment.system_id.as_deref(),
                    judgment.value,
                ) else {
                    continue;
                };
                let lp = lp_of_segment.get(segment).copied().unwrap_or("");
                match table.get(metric, system, segment) {
                    Some(score) => {
                        let entry = pooled.entry((lp, system)).or_default();
                        entry.0.push(score);
                        entry.1.push(human);
                    }
                    None => missing.push(format!("{system}:{segment}")),
                }
            }
            if !missing.is_empty() {
                return Err(missing_error(metric, &missing));
            }
            if pooled.is_empty() {
                return Ok(reports);
            }
            let lps: BTreeSet<&str> = pooled.keys().map(|(lp, _)| *lp).collect();
            for lp in lps {
                let groups: Vec<(&(&str, &str), &(Vec<f64>, Vec<f64>))> =
                    pooled.iter().filter(|((l, _), _)| *l == lp).collect();
                match level {
                    EvalLevel::Segment => {
                        let report = match grouping {
                            SegmentGrouping::Pooled => {
                                let mut xs = Vec::new();
                                let mut ys = Vec::new();
                                for (_, (m, h)) in &groups {
                                    xs.extend_from_slice(m);
                                    ys.extend_from_slice(h);
                                }
                                CorrelationReport {
                                    metric_id: metric.to_string(),
                                    setting: lp.to_string(),
                                    statistic: Statistic::KendallTauB,
                                    value: kendall_tau_b(&xs, &ys)?,
                                    n_items: xs.len(),
                                    n_excluded: 0,
                                }
                            }
                            SegmentGrouping::PerSystemAverage => {
                                let mut taus = Vec::new();
                                let mut n_items = 0;
                                for (_, (m, h)) in &groups {
                                    taus.push(kendall_tau_b(m, h)?);
                                    n_items += m.len();
                                }
                                CorrelationReport {
                                    metric_id: metric.to_string(),
                                    setting: lp.to_string(),
                                    statistic: Statistic::KendallTauB,
                                    value: taus.iter().sum::<f64>() / taus.len() as f64,
                                    n_items,
                                    n_excluded: 0,
                                }
                            }
                        };
                        reports.push(report);
                    }
                    EvalLevel::System => {
                        let mut metric_sys: BTreeMap<String, f64> = BTreeMap::new();
                        let mut human_sys: BTreeMap<String, f64> = BTreeMap::new();
                        for ((_, system), (m, h)) in &groups {
                            metric_sys.insert(
                                system.to_string(),
                                m.iter().sum::<f64>() / m.len() as f64,
                            );
                            human_sys.insert(
                                system.to_string(),
                                h.iter().sum::<f64>() / h.len() as f64,
                            );
                        }
                        let outcome = pairwise_system_accuracy(&metric_sys, &human_sys)?;
                        reports.push(CorrelationReport {
                            metric_id: metric.to_string(),
                            setting: lp.to_string(),
                            statistic: Statistic::PairwiseAccuracy,
                            value: outcome.accuracy,
                            n_items: outcome.n_pairs,
                            n_excluded: outcome.n_excluded,
                        });
                    }
                    _ => unreachable!(),
                }
            }
        }
        EvalLevel::Sample => {
            let mut by_aspect: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            let mut missing: Vec<String> = Vec::new();
            for judgment in &benchmark.human_judgments {
                if judgment.kind != JudgmentKind::AspectScore {
                    continue;
                }
                let (Some(segment), Some(system), Some(human), Some(aspect)) = (
                    judgment.segment_id.as_deref(),
                    judgment.system_id.as_deref(),
                    judgment.value,
                    judgment.aspect,
                ) else {
                    continue;
                };
                match table.get(metric, system, segment) {
                    Some(score) => {
                        let entry = by_aspect.entry(aspect.to_string()).or_default();
                        entry.0.push(score);
                        entry.1.push(human);
                    }
                    None => missing.push(format!("{system}:{segment}")),
                }
            }
            if !missing.is_empty() {
                return Err(missing_error(metric, &missing));
            }
            for (aspect, (xs, ys)) in by_aspect {
                reports.push(CorrelationReport {
                    metric_id: metric.to_string(),
                    setting: aspect,
                    statistic: Statistic::Spearman,
                    value: spearman(&xs, &ys)?,
                    n_items: xs.len(),
                    n_excluded: 0,
                });
            }
        }
        EvalLevel::Preference => {
            let mut by_setting: BTreeMap<String, Vec<PreferenceInstance>> = BTreeMap::new();
            let mut missing: Vec<String> = Vec::new();
            for judgment in &benchmark.human_judgments {
                if judgment.kind != JudgmentKind::PairwisePreference {
                    continue;
                }
                let (Some(segment), Some(preferred), Some([sys_a, sys_b])) = (
                    judgment.segment_id.as_deref(),
                    judgment.preferred_index,
                    judgment.candidate_systems.as_ref(),
                ) else {
                    continue;
                };
                let setting = judgment
                    .setting
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "all".to_string());
                match (
                    table.get(metric, sys_a, segment),
                    table.get(metric, sys_b, segment),
                ) {
                    (Some(score_a), Some(score_b)) => {
                        by_setting.entry(setting).or_default().push(PreferenceInstance {
                            score_a,
                            score_b,
                            preferred_index: preferred,
                        });
                    }
                    _ => missing.push(format!("{sys_a}/{sys_b}:{segment}")),
                }
            }
            if !missing.is_empty() {
                return Err(missing_error(metric, &missing));
            }
            for (setting, instances) in by_setting {
                reports.push(CorrelationReport {
                    metric_id: metric.to_string(),
                    setting,
                    statistic: Statistic::PreferenceAccuracy,
                    value: preference_accuracy(&instances)?,
                    n_items: instances.len(),
                    n_excluded: 0,
                });
            }
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_known_values() {
        assert!((kendall_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(
            (kendall_tau_b(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12
        );
        // C - D = 5 - 1 = 4, P = 6
        let tau = kendall_tau_b(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((tau - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn tau_rejects_degenerate_inputs() {
        assert!(kendall_tau_b(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau_b(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(kendall_tau_b(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // frozen from the explicit mid-rank + Pearson computation
        let rho = spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.948683298051).abs() < 1e-9, "got {rho}");
    }

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn pairwise_accuracy_counts_pairs() {
        let metric: BTreeMap<String, f64> =
            [("a", 3.0), ("b", 1.0), ("c", 2.0)].map(|(k, v)| (k.to_string(), v)).into();
        let human: BTreeMap<String, f64> =
            [("a", 3.0), ("b", 2.0), ("c", 1.0)].map(|(k, v)| (k.to_string(), v)).into();
        // (a,b) correct, (a,c) correct, (b,c) wrong -> 2/3
        let outcome = pairwise_system_accuracy(&metric, &human).unwrap();
        assert!((outcome.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(outcome.n_pairs, 3);
        assert_eq!(outcome.n_excluded, 0);
    }

    #[test]
    fn metric_ties_count_as_incorrect_and_human_ties_excluded() {
        let metric: BTreeMap<String, f64> =
            [("a", 1.0), ("b", 1.0), ("c", 0.0)].map(|(k, v)| (k.to_string(), v)).into();
        let human: BTreeMap<String, f64> =
            [("a", 2.0), ("b", 1.0), ("c", 1.0)].map(|(k, v)| (k.to_string(), v)).into();
        // (a,b): human delta 1, metric tie -> wrong; (a,c): correct;
        // (b,c): human tie -> excluded
        let outcome = pairwise_system_accuracy(&metric, &human).unwrap();
        assert!((outcome.accuracy - 0.5).abs() < 1e-12);
        assert_eq!(outcome.n_pairs, 2);
        assert_eq!(outcome.n_excluded, 1);
    }

    #[test]
    fn all_human_ties_is_an_error() {
        let metric: BTreeMap<String, f64> =
            [("a", 1.0), ("b", 2.0)].map(|(k, v)| (k.to_string(), v)).into();
        let human: BTreeMap<String, f64> =
            [("a", 1.0), ("b", 1.0)].map(|(k, v)| (k.to_string(), v)).into();
        let err = pairwise_system_accuracy(&metric, &human).unwrap_err();
        assert!(err.to_string().contains("zero evaluable pairs"));
    }

    #[test]
    fn preference_accuracy_tie_rule() {
        let instances = [
            PreferenceInstance { score_a: 0.9, score_b: 0.1, preferred_index: 0 }, // correct
            PreferenceInstance { score_a: 0.5, score_b: 0.5, preferred_index: 0 }, // tie -> wrong
            PreferenceInstance { score_a: 0.2, score_b: 0.7, preferred_index: 1 }, // correct
            PreferenceInstance { score_a: 0.9, score_b: 0.2, preferred_index: 1 }, // wrong
        ];
        assert!((preference_accuracy(&instances).unwrap() - 0.5).abs() < 1e-12);
        let ties = [PreferenceInstance { score_a: 0.5, score_b: 0.5, preferred_index: 1 }];
        assert_eq!(preference_accuracy(&ties).unwrap(), 0.0);
        assert!(preference_accuracy(&[]).is_err());
    }
}
