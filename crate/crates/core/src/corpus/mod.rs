//! Benchmark data model and ingestion for the three benchmark shapes:
//! translation (segment scores per system), summarization (aspect scores per
//! sample) and caption preference (pairwise choices).
//!
//! Loading is single-threaded per file; a loaded `Benchmark` is immutable
//! and safe to share across threads.

mod formats;

pub use formats::{load_benchmark, write_benchmark, BenchmarkFormat};

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::diversifier::{DiversifiedRecord, PromptId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Translation,
    Summarization,
    Caption,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Translation => "translation",
            Task::Summarization => "summarization",
            Task::Caption => "caption",
        })
    }
}

/// One benchmark instance: the input text plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub source_text: String,
    #[serde(default)]
    pub language_pair: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<String>,
}

/// Where a diversified reference came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Llm {
        prompt_id: PromptId,
        sample_index: u32,
        model_id: String,
    },
}

impl Provenance {
    /// Sort key: human entries first, then LLM generations by prompt,
    /// sample index and model.
    fn sort_key(&self) -> (u8, usize, u32, &str) {
        match self {
            Provenance::Human => (0, 0, 0, ""),
            Provenance::Llm {
                prompt_id,
                sample_index,
                model_id,
            } => (1, prompt_id.order(), *sample_index, model_id.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversifiedEntry {
    pub text: String,
    pub provenance: Provenance,
}

/// The ground-truth reference of a segment plus its diversified expansions,
/// kept in a stable provenance-sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub segment_id: String,
    pub ground_truth: String,
    #[serde(default)]
    pub diversified: Vec<DiversifiedEntry>,
    /// Per-entry subpar flag from judge filtering (true = flagged), parallel
    /// to `diversified`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered_flags: Option<Vec<bool>>,
}

impl ReferenceSet {
    pub fn new(segment_id: impl Into<String>, ground_truth: impl Into<String>) -> Self {
        ReferenceSet {
            segment_id: segment_id.into(),
            ground_truth: ground_truth.into(),
            diversified: Vec::new(),
            filtered_flags: None,
        }
    }

    /// All reference texts with the ground truth first. With
    /// `drop_filtered`, entries flagged subpar are omitted.
    pub fn reference_texts(&self, drop_filtered: bool) -> Vec<&str> {
        let mut texts = Vec::with_capacity(1 + self.diversified.len());
        texts.push(self.ground_truth.as_str());
        for (idx, entry) in self.diversified.iter().enumerate() {
            let flagged = drop_filtered
                && self
                    .filtered_flags
                    .as_ref()
                    .is_some_and(|flags| flags.get(idx).copied().unwrap_or(false));
            if !flagged {
                texts.push(entry.text.as_str());
            }
        }
        texts
    }

    /// Copy with only the first `n` diversified entries (provenance order);
    /// prefix semantics for reference-count sweeps.
    pub fn truncated(&self, n: usize) -> ReferenceSet {
        ReferenceSet {
            segment_id: self.segment_id.clone(),
            ground_truth: self.ground_truth.clone(),
            diversified: self.diversified.iter().take(n).cloned().collect(),
            filtered_flags: self
                .filtered_flags
                .as_ref()
                .map(|flags| flags.iter().take(n).copied().collect()),
        }
    }

    fn sort_by_provenance(&mut self) {
        let flags = self
            .filtered_flags
            .take()
            .unwrap_or_else(|| vec![false; self.diversified.len()]);
        let mut entries: Vec<(DiversifiedEntry, bool)> =
            self.diversified.drain(..).zip(flags).collect();
        entries.sort_by(|(a, _), (b, _)| {
            a.provenance
                .sort_key()
                .cmp(&b.provenance.sort_key())
                .then_with(|| a.text.cmp(&b.text))
        });
        let any_flag = entries.iter().any(|(_, f)| *f);
        let (diversified, flags): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        self.diversified = diversified;
        self.filtered_flags = any_flag.then_some(flags);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub system_id: String,
    pub segment_id: String,
    /// May be empty; empty hypotheses are scored (as 0), not rejected.
    pub hypothesis: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentKind {
    SegmentScore,
    SystemScore,
    AspectScore,
    PairwisePreference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aspect {
    Coherence,
    Consistency,
    Fluency,
    Relevance,
}

impl std::fmt::Display for Aspect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Aspect::Coherence => "coherence",
            Aspect::Consistency => "consistency",
            Aspect::Fluency => "fluency",
            Aspect::Relevance => "relevance",
        })
    }
}

/// PASCAL-50S pairing regime: human/human correct (HC), human correct vs
/// human irrelevant (HI), human vs model (HM), model vs model (MM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PreferenceSetting {
    HC,
    HI,
    HM,
    MM,
}

impl std::fmt::Display for PreferenceSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One observed human rating. Exactly the fields implied by `kind` are
/// present; `validate` enforces this.
///
/// The Rust field is `kind`; it serializes as `judgment_kind` because native
/// records already use `kind` as the record discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanJudgment {
    #[serde(rename = "judgment_kind")]
    pub kind: JudgmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_index: Option<u8>,
    /// The two candidate systems of a pairwise preference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_systems: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<Aspect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<PreferenceSetting>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub task: Task,
    pub segments: Vec<Segment>,
    pub reference_sets: Vec<ReferenceSet>,
    pub system_outputs: Vec<SystemOutput>,
    pub human_judgments: Vec<HumanJudgment>,
}

impl Benchmark {
    pub fn new(name: impl Into<String>, task: Task) -> Self {
        Benchmark {
            name: name.into(),
            task,
            segments: Vec::new(),
            reference_sets: Vec::new(),
            system_outputs: Vec::new(),
            human_judgments: Vec::new(),
        }
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn reference_set(&self, segment_id: &str) -> Option<&ReferenceSet> {
        self.reference_sets.iter().find(|r| r.segment_id == segment_id)
    }

    /// Sorted distinct system ids.
    pub fn systems(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .system_outputs
            .iter()
            .map(|o| o.system_id.as_str())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Sorted distinct language pairs.
    pub fn language_pairs(&self) -> Vec<&str> {
        let mut pairs: Vec<&str> = self
            .segments
            .iter()
            .map(|s| s.language_pair.as_str())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        pairs.sort_unstable();
        pairs
    }

    /// Hypothesis of `(system, segment)` if present.
    pub fn hypothesis(&self, system_id: &str, segment_id: &str) -> Option<&str> {
        self.system_outputs
            .iter()
            .find(|o| o.system_id == system_id && o.segment_id == segment_id)
            .map(|o| o.hypothesis.as_str())
    }

    /// Extend reference sets with diversified generations. Idempotent:
    /// an entry already present (same text and provenance) is not added
    /// again; entries end up provenance-sorted.
    pub fn merge_diversified(mut self, records: &[DiversifiedRecord]) -> Result<Benchmark> {
        let mut by_segment: HashMap<String, usize> = HashMap::new();
        for (idx, refset) in self.reference_sets.iter().enumerate() {
            by_segment.insert(refset.segment_id.clone(), idx);
        }
        let mut touched: HashSet<usize> = HashSet::new();
        for record in records {
            let &idx = by_segment.get(record.segment_id.as_str()).ok_or_else(|| {
                Error::data(format!(
                    "diversified record references unknown segment '{}'",
                    record.segment_id
                ))
            })?;
            let refset = &mut self.reference_sets[idx];
            let entry = DiversifiedEntry {
                text: record.text.clone(),
                provenance: Provenance::Llm {
                    prompt_id: record.prompt_id,
                    sample_index: record.sample_index,
                    model_id: record.model_id.clone(),
                },
            };
            let exists = refset
                .diversified
                .iter()
                .any(|e| e.text == entry.text && e.provenance == entry.provenance);
            if exists {
                continue;
            }
            refset.diversified.push(entry);
            if let Some(flags) = refset.filtered_flags.as_mut() {
                flags.push(record.filtered.unwrap_or(false));
            } else if record.filtered == Some(true) {
                let mut flags = vec![false; refset.diversified.len()];
                flags[refset.diversified.len() - 1] = true;
                refset.filtered_flags = Some(flags);
            }
            touched.insert(idx);
        }
        for idx in touched {
            self.reference_sets[idx].sort_by_provenance();
        }
        Ok(self)
    }

    /// Check every type invariant; returns human-readable violations
    /// (violations are data, not errors).
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();

        let mut segment_ids: HashSet<&str> = HashSet::new();
        for segment in &self.segments {
            if !segment_ids.insert(segment.id.as_str()) {
                violations.push(format!("duplicate segment id '{}'", segment.id));
            }
            if segment.source_text.is_empty() && self.task != Task::Caption {
                violations.push(format!(
                    "segment '{}' has an empty source_text in a non-caption benchmark",
                    segment.id
                ));
            }
        }

        let mut refset_segments: HashSet<&str> = HashSet::new();
        for refset in &self.reference_sets {
            if !segment_ids.contains(refset.segment_id.as_str()) {
                violations.push(format!(
                    "reference set references unknown segment '{}'",
                    refset.segment_id
                ));
            }
            if !refset_segments.insert(refset.segment_id.as_str()) {
                violations.push(format!(
                    "duplicate reference set for segment '{}'",
                    refset.segment_id
                ));
            }
            if refset.ground_truth.is_empty() {
                violations.push(format!(
                    "reference set for segment '{}' has an empty ground truth",
                    refset.segment_id
                ));
            }
            for entry in &refset.diversified {
                if entry.text.is_empty() {
                    violations.push(format!(
                        "reference set for segment '{}' contains an empty diversified entry",
                        refset.segment_id
                    ));
                }
            }
            if let Some(flags) = &refset.filtered_flags {
                if flags.len() != refset.diversified.len() {
                    violations.push(format!(
                        "reference set for segment '{}' has {} filtered flags for {} entries",
                        refset.segment_id,
                        flags.len(),
                        refset.diversified.len()
                    ));
                }
            }
        }
        for id in &segment_ids {
            if !refset_segments.contains(id) {
                violations.push(format!("segment '{id}' has no reference set"));
            }
        }

        let mut output_keys: HashSet<(&str, &str)> = HashSet::new();
        let mut system_ids: HashSet<&str> = HashSet::new();
        for output in &self.system_outputs {
            system_ids.insert(output.system_id.as_str());
            if !segment_ids.contains(output.segment_id.as_str()) {
                violations.push(format!(
                    "output of system '{}' references unknown segment '{}'",
                    output.system_id, output.segment_id
                ));
            }
            if !output_keys.insert((output.system_id.as_str(), output.segment_id.as_str())) {
                violations.push(format!(
                    "duplicate output for system '{}' on segment '{}'",
                    output.system_id, output.segment_id
                ));
            }
        }

        for (idx, judgment) in self.human_judgments.iter().enumerate() {
            violations.extend(
                judgment_violations(judgment, &segment_ids, &system_ids)
                    .into_iter()
                    .map(|v| format!("judgment #{idx}: {v}")),
            );
        }

        violations
    }
}

fn judgment_violations(
    judgment: &HumanJudgment,
    segment_ids: &HashSet<&str>,
    system_ids: &HashSet<&str>,
) -> Vec<String> {
    let mut violations = Vec::new();
    let mut check_segment = |required: bool| {
        match &judgment.segment_id {
            Some(id) if !segment_ids.contains(id.as_str()) => {
                violations.push(format!("unknown segment '{id}'"));
            }
            None if required => violations.push("missing segment_id".to_string()),
            _ => {}
        }
    };
    match judgment.kind {
        JudgmentKind::SegmentScore | JudgmentKind::AspectScore => {
            check_segment(true);
            match &judgment.system_id {
                Some(id) if !system_ids.contains(id.as_str()) => {
                    violations.push(format!("unknown system '{id}'"));
                }
                None => violations.push("missing system_id".to_string()),
                _ => {}
            }
            if judgment.value.is_none() {
                violations.push("missing value".to_string());
            }
            if judgment.kind == JudgmentKind::AspectScore && judgment.aspect.is_none() {
                violations.push("aspect_score without an aspect".to_string());
            }
            if judgment.preferred_index.is_some() || judgment.candidate_systems.is_some() {
                violations.push("score judgment carries preference fields".to_string());
            }
        }
        JudgmentKind::SystemScore => {
            match &judgment.system_id {
                Some(id) if !system_ids.contains(id.as_str()) => {
                    violations.push(format!("unknown system '{id}'"));
                }
                None => violations.push("missing system_id".to_string()),
                _ => {}
            }
            if judgment.value.is_none() {
                violations.push("missing value".to_string());
            }
        }
        JudgmentKind::PairwisePreference => {
            check_segment(true);
            match judgment.preferred_index {
                Some(0) | Some(1) => {}
                Some(other) => violations.push(format!("preferred_index {other} not in {{0, 1}}")),
                None => violations.push("missing preferred_index".to_string()),
            }
            match &judgment.candidate_systems {
                Some([a, b]) => {
                    for id in [a, b] {
                        if !system_ids.contains(id.as_str()) {
                            violations.push(format!("unknown candidate system '{id}'"));
                        }
                    }
                }
                None => violations.push("preference requires two candidates".to_string()),
            }
            if judgment.value.is_some() {
                violations.push("preference judgment carries a score value".to_string());
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_benchmark() -> Benchmark {
        let mut b = Benchmark::new("tiny", Task::Translation);
        b.segments.push(Segment {
            id: "s1".into(),
            source_text: "x".into(),
            language_pair: "zh-en".into(),
            domain_tag: None,
        });
        b.reference_sets.push(ReferenceSet::new("s1", "the cat"));
        b.system_outputs.push(SystemOutput {
            system_id: "sysA".into(),
            segment_id: "s1".into(),
            hypothesis: "a cat".into(),
        });
        b
    }

    fn record(prompt: PromptId, sample: u32, text: &str) -> DiversifiedRecord {
        DiversifiedRecord {
            segment_id: "s1".into(),
            prompt_id: prompt,
            sample_index: sample,
            model_id: "m".into(),
            text: text.into(),
            created_at: 0,
            params_digest: "d".into(),
            filtered: None,
        }
    }

    #[test]
    fn valid_benchmark_has_no_violations() {
        assert!(tiny_benchmark().validate().is_empty());
    }

    #[test]
    fn empty_ground_truth_is_a_violation() {
        let mut b = tiny_benchmark();
        b.reference_sets[0].ground_truth.clear();
        let v = b.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("empty ground truth"));
    }

    #[test]
    fn unknown_system_in_judgment_is_a_violation() {
        let mut b = tiny_benchmark();
        b.human_judgments.push(HumanJudgment {
            kind: JudgmentKind::SegmentScore,
            segment_id: Some("s1".into()),
            system_id: Some("ghost".into()),
            value: Some(1.0),
            preferred_index: None,
            candidate_systems: None,
            aspect: None,
            setting: None,
        });
        let v = b.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("unknown system 'ghost'"));
    }

    #[test]
    fn merge_is_idempotent_and_sorted() {
        let records = vec![
            record(PromptId::P3, 0, "cat three"),
            record(PromptId::P1, 0, "cat one"),
        ];
        let merged = tiny_benchmark().merge_diversified(&records).unwrap();
        let again = merged.clone().merge_diversified(&records).unwrap();
        assert_eq!(merged, again);
        let texts = merged.reference_sets[0].reference_texts(false);
        assert_eq!(texts, vec!["the cat", "cat one", "cat three"]);
    }

    #[test]
    fn merge_order_insensitive_up_to_sort() {
        let a = vec![record(PromptId::P1, 0, "one"), record(PromptId::P2, 0, "two")];
        let b = vec![record(PromptId::P2, 0, "two"), record(PromptId::P1, 0, "one")];
        let m1 = tiny_benchmark().merge_diversified(&a).unwrap();
        let m2 = tiny_benchmark().merge_diversified(&b).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn merge_rejects_unknown_segment() {
        let mut r = record(PromptId::P1, 0, "x");
        r.segment_id = "ghost".into();
        assert!(tiny_benchmark().merge_diversified(&[r]).is_err());
    }

    #[test]
    fn ten_records_give_ten_entries() {
        let records: Vec<DiversifiedRecord> = PromptId::DIVERSE
            .iter()
            .map(|&p| record(p, 0, &format!("text {}", p.as_str())))
            .collect();
        let merged = tiny_benchmark().merge_diversified(&records).unwrap();
        assert_eq!(merged.reference_sets[0].diversified.len(), 10);
    }

    #[test]
    fn truncated_takes_prefix() {
        let records = vec![record(PromptId::P1, 0, "one"), record(PromptId::P2, 0, "two")];
        let merged = tiny_benchmark().merge_diversified(&records).unwrap();
        let t = merged.reference_sets[0].truncated(1);
        assert_eq!(t.reference_texts(false), vec!["the cat", "one"]);
    }
}
