//! From-scratch lexical metric kernels: sentence BLEU, ChrF, ROUGE-1/2/L,
//! METEOR (exact + Porter stem) and CIDEr-D, over a shared tokenizer and
//! n-gram machinery.

pub mod bleu;
pub mod chrf;
pub mod cider;
pub mod meteor;
mod ngram;
pub mod porter;
pub mod rouge;

pub use ngram::NGramProfile;

use serde::{Deserialize, Serialize};

use crate::aggregation::Aggregation;
use crate::text::TokenizerConfig;
use crate::{Error, Result};

/// Identifier of a built-in lexical metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "bleu")]
    Bleu,
    #[serde(rename = "chrf")]
    Chrf,
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "meteor")]
    Meteor,
    #[serde(rename = "cider")]
    Cider,
}

impl MetricId {
    pub const ALL: [MetricId; 7] = [
        MetricId::Bleu,
        MetricId::Chrf,
        MetricId::Rouge1,
        MetricId::Rouge2,
        MetricId::RougeL,
        MetricId::Meteor,
        MetricId::Cider,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Bleu => "bleu",
            MetricId::Chrf => "chrf",
            MetricId::Rouge1 => "rouge1",
            MetricId::Rouge2 => "rouge2",
            MetricId::RougeL => "rougeL",
            MetricId::Meteor => "meteor",
            MetricId::Cider => "cider",
        }
    }

    /// Value bounds in the metric's defining scale.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            MetricId::Chrf => (0.0, 100.0),
            MetricId::Cider => (0.0, 10.0),
            _ => (0.0, 1.0),
        }
    }

    /// Whether the metric has a native multi-reference path (the
    /// `builtin` aggregation).
    pub fn supports_builtin(self) -> bool {
        matches!(self, MetricId::Bleu | MetricId::Chrf)
    }
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown metric '{s}'")))
    }
}

/// Output scale for regular unit-interval metrics. ChrF's defining scale is
/// percent; CIDEr-D's defining scale is [0, 10] and is kept as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Unit,
    Percent,
}

/// Tunable metric parameters, defaulted to the documented configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub bleu_max_order: usize,
    pub chrf_char_order: usize,
    pub chrf_beta: f64,
    pub meteor_alpha: f64,
    pub meteor_beta: f64,
    pub meteor_gamma: f64,
    pub cider_max_order: usize,
    pub cider_sigma: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            bleu_max_order: 4,
            chrf_char_order: 6,
            chrf_beta: 2.0,
            meteor_alpha: 0.9,
            meteor_beta: 3.0,
            meteor_gamma: 0.5,
            cider_max_order: 4,
            cider_sigma: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub metric_id: MetricId,
    /// None keeps the metric's defining scale.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(default)]
    pub parameters: MetricParams,
}

impl MetricConfig {
    pub fn new(metric_id: MetricId) -> Self {
        MetricConfig {
            metric_id,
            scale: None,
            parameters: MetricParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.parameters;
        if p.bleu_max_order < 1 || p.cider_max_order < 1 || p.chrf_char_order < 1 {
            return Err(Error::config("n-gram orders must be >= 1"));
        }
        if p.chrf_beta <= 0.0 {
            return Err(Error::config("chrf beta must be > 0"));
        }
        if !(0.0..=1.0).contains(&p.meteor_alpha) || !(0.0..=1.0).contains(&p.meteor_gamma) {
            return Err(Error::config("meteor alpha/gamma must lie in [0, 1]"));
        }
        if p.cider_sigma <= 0.0 {
            return Err(Error::config("cider sigma must be > 0"));
        }
        Ok(())
    }

    /// Bounds of the emitted value after scale conversion.
    pub fn bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.metric_id.bounds();
        match self.scale {
            None => (lo, hi),
            Some(Scale::Unit) => (0.0, 1.0),
            Some(Scale::Percent) => (0.0, 100.0),
        }
    }

    fn rescale(&self, value: f64) -> f64 {
        let (_, hi) = self.metric_id.bounds();
        match self.scale {
            None => value,
            Some(Scale::Unit) => value / hi,
            Some(Scale::Percent) => value / hi * 100.0,
        }
    }
}

/// One metric value, with the per-reference breakdown when the score was
/// assembled from single-reference calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric_id: MetricId,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_reference: Option<Vec<f64>>,
    pub aggregation_used: Aggregation,
}

/// One line of a score dump: a metric value for a (system, segment) pair.
/// The metric name is free-form so externally computed metrics share the
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub metric: String,
    pub system: String,
    pub segment: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_reference: Option<Vec<f64>>,
    pub aggregation: Aggregation,
}

impl ScoreRecord {
    pub fn from_score(system: &str, segment: &str, score: &MetricScore) -> Self {
        ScoreRecord {
            metric: score.metric_id.to_string(),
            system: system.to_string(),
            segment: segment.to_string(),
            value: score.value,
            per_reference: score.per_reference.clone(),
            aggregation: score.aggregation_used,
        }
    }
}

/// Read a line-delimited score dump.
pub fn read_score_records(path: impl AsRef<std::path::Path>) -> Result<Vec<ScoreRecord>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Write a line-delimited score dump.
pub fn write_score_records(
    path: impl AsRef<std::path::Path>,
    records: &[ScoreRecord],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("score records serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A configured metric ready to score hypothesis/reference pairs.
///
/// Scoring is a pure function of the inputs; a `Scorer` is safe to share
/// across threads. CIDEr additionally needs a corpus-level idf table, built
/// once via [`Scorer::fit_cider`] and read-only afterwards.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub config: MetricConfig,
    pub tokenizer: TokenizerConfig,
    cider: Option<cider::CiderScorer>,
}

impl Scorer {
    pub fn new(config: MetricConfig, tokenizer: TokenizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Scorer {
            config,
            tokenizer,
            cider: None,
        })
    }

    pub fn metric_id(&self) -> MetricId {
        self.config.metric_id
    }

    /// Build CIDEr's idf table from the corpus ground-truth references.
    /// Required before scoring with [`MetricId::Cider`]; a no-op otherwise.
    pub fn fit_cider<S: AsRef<str>>(&mut self, ground_truths: &[S]) -> Result<()> {
        if self.config.metric_id == MetricId::Cider {
            self.cider = Some(cider::CiderScorer::fit(
                ground_truths,
                &self.tokenizer,
                &self.config.parameters,
            )?);
        }
        Ok(())
    }

    /// Score against a single reference, in the configured output scale.
    pub fn score_single(&self, hypothesis: &str, reference: &str) -> Result<f64> {
        let refs = [reference];
        self.score_refs(hypothesis, &refs)
    }

    /// Score with the metric's native multi-reference path. Errors for
    /// metrics without one.
    pub fn score_builtin(&self, hypothesis: &str, references: &[&str]) -> Result<f64> {
        if !self.config.metric_id.supports_builtin() {
            return Err(Error::config(format!(
                "metric '{}' has no built-in multi-reference aggregation",
                self.config.metric_id
            )));
        }
        self.score_refs(hypothesis, references)
    }

    fn score_refs(&self, hypothesis: &str, references: &[&str]) -> Result<f64> {
        if references.is_empty() {
            return Err(Error::data("reference list must be non-empty"));
        }
        let p = &self.config.parameters;
        let raw = match self.config.metric_id {
            MetricId::Bleu => {
                bleu::bleu_texts(hypothesis, references, &self.tokenizer, p.bleu_max_order)
            }
            MetricId::Chrf => chrf::chrf_texts(
                hypothesis,
                references,
                self.tokenizer.lowercase,
                p.chrf_char_order,
                p.chrf_beta,
            ),
            MetricId::Rouge1 => {
                rouge::rouge_n_texts(hypothesis, references, 1, &self.tokenizer).0
            }
            MetricId::Rouge2 => {
                rouge::rouge_n_texts(hypothesis, references, 2, &self.tokenizer).0
            }
            MetricId::RougeL => rouge::rouge_l_texts(hypothesis, references, &self.tokenizer).0,
            MetricId::Meteor => meteor::meteor_texts(hypothesis, references, &self.tokenizer, p).0,
            MetricId::Cider => {
                let scorer = self.cider.as_ref().ok_or_else(|| {
                    Error::config("cider requires a corpus idf table; call fit_cider first")
                })?;
                scorer.score(hypothesis, references)
            }
        };
        Ok(self.config.rescale(raw))
    }
}
