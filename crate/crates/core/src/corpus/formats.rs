//! Benchmark file formats: the native line-delimited record format plus
//! flattened import adapters for WMT-style MQM exports, SummEval-style
//! aspect ratings and PASCAL-50S-style caption preferences.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Aspect, Benchmark, HumanJudgment, JudgmentKind, PreferenceSetting, ReferenceSet, Segment,
    SystemOutput, Task,
};
use crate::text::nfc;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkFormat {
    Native,
    Wmt,
    Summeval,
    Pascal50s,
}

impl std::str::FromStr for BenchmarkFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "native" => Ok(BenchmarkFormat::Native),
            "wmt" => Ok(BenchmarkFormat::Wmt),
            "summeval" => Ok(BenchmarkFormat::Summeval),
            "pascal50s" => Ok(BenchmarkFormat::Pascal50s),
            other => Err(Error::config(format!("unknown benchmark format '{other}'"))),
        }
    }
}

/// One line of the native format, discriminated by `kind`. The optional
/// `benchmark` header names the benchmark and its task; without it the file
/// stem and `translation` are assumed.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum NativeRecord {
    Benchmark { name: String, task: Task },
    Segment(Segment),
    Reference(ReferenceSet),
    Output(SystemOutput),
    Judgment(HumanJudgment),
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn default_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".to_string())
}

/// Load a benchmark, NFC-normalizing every text field. The result satisfies
/// all type invariants or an error is returned.
pub fn load_benchmark(path: impl AsRef<Path>, format: BenchmarkFormat) -> Result<Benchmark> {
    let path = path.as_ref();
    let content = read_to_string(path)?;
    let benchmark = match format {
        BenchmarkFormat::Native => parse_native(path, &content)?,
        BenchmarkFormat::Wmt => parse_wmt(path, &content)?,
        BenchmarkFormat::Summeval => parse_summeval(path, &content)?,
        BenchmarkFormat::Pascal50s => parse_pascal50s(path, &content)?,
    };
    let violations = benchmark.validate();
    if !violations.is_empty() {
        return Err(Error::data(format!(
            "benchmark '{}' violates invariants: {}",
            benchmark.name,
            violations.join("; ")
        )));
    }
    Ok(benchmark)
}

/// Write a benchmark in the native format. `load(write(b)) == b`.
pub fn write_benchmark(benchmark: &Benchmark, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, benchmark_to_native(benchmark)).map_err(|e| Error::io(path, e))
}

pub(crate) fn benchmark_to_native(benchmark: &Benchmark) -> String {
    let mut out = String::new();
    let mut push = |record: &NativeRecord| {
        out.push_str(&serde_json::to_string(record).expect("native records serialize"));
        out.push('\n');
    };
    push(&NativeRecord::Benchmark {
        name: benchmark.name.clone(),
        task: benchmark.task,
    });
    for segment in &benchmark.segments {
        push(&NativeRecord::Segment(segment.clone()));
    }
    for refset in &benchmark.reference_sets {
        push(&NativeRecord::Reference(refset.clone()));
    }
    for output in &benchmark.system_outputs {
        push(&NativeRecord::Output(output.clone()));
    }
    for judgment in &benchmark.human_judgments {
        push(&NativeRecord::Judgment(judgment.clone()));
    }
    out
}

fn normalize_segment(mut segment: Segment) -> Segment {
    segment.source_text = nfc(&segment.source_text);
    segment
}

fn normalize_refset(mut refset: ReferenceSet) -> ReferenceSet {
    refset.ground_truth = nfc(&refset.ground_truth);
    for entry in &mut refset.diversified {
        entry.text = nfc(&entry.text);
    }
    refset
}

fn parse_native(path: &Path, content: &str) -> Result<Benchmark> {
    let mut benchmark = Benchmark::new(default_name(path), Task::Translation);
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: NativeRecord = serde_json::from_str(line)
            .map_err(|e| parse_error(path, line_no, e.to_string()))?;
        match record {
            NativeRecord::Benchmark { name, task } => {
                benchmark.name = name;
                benchmark.task = task;
            }
            NativeRecord::Segment(segment) => {
                if benchmark.segments.iter().any(|s| s.id == segment.id) {
                    return Err(parse_error(
                        path,
                        line_no,
                        format!("duplicate segment id '{}'", segment.id),
                    ));
                }
                benchmark.segments.push(normalize_segment(segment));
            }
            NativeRecord::Reference(refset) => {
                if benchmark
                    .reference_sets
                    .iter()
                    .any(|r| r.segment_id == refset.segment_id)
                {
                    return Err(parse_error(
                        path,
                        line_no,
                        format!("duplicate reference set for segment '{}'", refset.segment_id),
                    ));
                }
                benchmark.reference_sets.push(normalize_refset(refset));
            }
            NativeRecord::Output(mut output) => {
                output.hypothesis = nfc(&output.hypothesis);
                benchmark.system_outputs.push(output);
            }
            NativeRecord::Judgment(judgment) => benchmark.human_judgments.push(judgment),
        }
    }
    Ok(benchmark)
}

/// Flattened WMT-style export: tab-separated with columns
/// `lp  segment_id  system_id  source  reference  hypothesis  score`.
/// A header row naming the first column `lp` is skipped. Segment ids are
/// namespaced by language pair.
fn parse_wmt(path: &Path, content: &str) -> Result<Benchmark> {
    let mut benchmark = Benchmark::new(default_name(path), Task::Translation);
    let mut seen_segments: HashMap<String, String> = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || (idx == 0 && line.starts_with("lp\t")) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected 7 tab-separated fields, got {}", fields.len()),
            ));
        }
        let (lp, seg, system, source, reference, hypothesis, score) = (
            fields[0], fields[1], fields[2], fields[3], fields[4], fields[5], fields[6],
        );
        let segment_id = format!("{lp}:{seg}");
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("bad score '{score}'")))?;
        let reference = nfc(reference);
        match seen_segments.get(&segment_id) {
            None => {
                seen_segments.insert(segment_id.clone(), reference.clone());
                benchmark.segments.push(Segment {
                    id: segment_id.clone(),
                    source_text: nfc(source),
                    language_pair: lp.to_string(),
                    domain_tag: None,
                });
                benchmark
                    .reference_sets
                    .push(ReferenceSet::new(segment_id.clone(), reference));
            }
            Some(existing) if *existing != reference => {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("segment '{segment_id}' re-appears with a different reference"),
                ));
            }
            Some(_) => {}
        }
        if benchmark
            .system_outputs
            .iter()
            .any(|o| o.system_id == system && o.segment_id == segment_id)
        {
            return Err(parse_error(
                path,
                line_no,
                format!("duplicate output for system '{system}' on segment '{segment_id}'"),
            ));
        }
        benchmark.system_outputs.push(SystemOutput {
            system_id: system.to_string(),
            segment_id: segment_id.clone(),
            hypothesis: nfc(hypothesis),
        });
        benchmark.human_judgments.push(HumanJudgment {
            kind: JudgmentKind::SegmentScore,
            segment_id: Some(segment_id),
            system_id: Some(system.to_string()),
            value: Some(score),
            preferred_index: None,
            candidate_systems: None,
            aspect: None,
            setting: None,
        });
    }
    Ok(benchmark)
}

#[derive(Deserialize)]
struct SummevalRow {
    sample_id: String,
    source: String,
    references: Vec<String>,
    system: String,
    summary: String,
    #[serde(default)]
    coherence: Option<f64>,
    #[serde(default)]
    consistency: Option<f64>,
    #[serde(default)]
    fluency: Option<f64>,
    #[serde(default)]
    relevance: Option<f64>,
}

/// SummEval-style export: one JSON object per line with a sample, a system
/// summary and up to four aspect ratings. Pre-existing extra references are
/// kept as human-provenance diversified entries.
fn parse_summeval(path: &Path, content: &str) -> Result<Benchmark> {
    let mut benchmark = Benchmark::new(default_name(path), Task::Summarization);
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: SummevalRow = serde_json::from_str(line)
            .map_err(|e| parse_error(path, line_no, e.to_string()))?;
        if row.references.is_empty() {
            return Err(parse_error(
                path,
                line_no,
                format!("sample '{}' has no references", row.sample_id),
            ));
        }
        if benchmark.segment(&row.sample_id).is_none() {
            benchmark.segments.push(Segment {
                id: row.sample_id.clone(),
                source_text: nfc(&row.source),
                language_pair: "en".to_string(),
                domain_tag: None,
            });
            let mut refset = ReferenceSet::new(row.sample_id.clone(), nfc(&row.references[0]));
            for extra in &row.references[1..] {
                refset.diversified.push(super::DiversifiedEntry {
                    text: nfc(extra),
                    provenance: super::Provenance::Human,
                });
            }
            benchmark.reference_sets.push(refset);
        }
        if benchmark
            .system_outputs
            .iter()
            .any(|o| o.system_id == row.system && o.segment_id == row.sample_id)
        {
            return Err(parse_error(
                path,
                line_no,
                format!(
                    "duplicate summary for system '{}' on sample '{}'",
                    row.system, row.sample_id
                ),
            ));
        }
        benchmark.system_outputs.push(SystemOutput {
            system_id: row.system.clone(),
            segment_id: row.sample_id.clone(),
            hypothesis: nfc(&row.summary),
        });
        let aspects = [
            (Aspect::Coherence, row.coherence),
            (Aspect::Consistency, row.consistency),
            (Aspect::Fluency, row.fluency),
            (Aspect::Relevance, row.relevance),
        ];
        for (aspect, value) in aspects {
            if let Some(value) = value {
                benchmark.human_judgments.push(HumanJudgment {
                    kind: JudgmentKind::AspectScore,
                    segment_id: Some(row.sample_id.clone()),
                    system_id: Some(row.system.clone()),
                    value: Some(value),
                    preferred_index: None,
                    candidate_systems: None,
                    aspect: Some(aspect),
                    setting: None,
                });
            }
        }
    }
    Ok(benchmark)
}

#[derive(Deserialize)]
struct Pascal50sRow {
    id: String,
    #[serde(default)]
    reference: Option<String>,
    #[serde(default)]
    references: Vec<String>,
    #[serde(default)]
    candidate_a: Option<String>,
    #[serde(default)]
    candidate_b: Option<String>,
    preferred: u8,
    setting: PreferenceSetting,
}

/// PASCAL-50S-style export: one JSON object per line with reference(s), two
/// candidate captions, the human preference and the pairing setting.
fn parse_pascal50s(path: &Path, content: &str) -> Result<Benchmark> {
    let mut benchmark = Benchmark::new(default_name(path), Task::Caption);
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: Pascal50sRow = serde_json::from_str(line)
            .map_err(|e| parse_error(path, line_no, e.to_string()))?;
        let (Some(candidate_a), Some(candidate_b)) = (&row.candidate_a, &row.candidate_b) else {
            return Err(parse_error(
                path,
                line_no,
                format!("instance '{}': preference requires two candidates", row.id),
            ));
        };
        let mut references = row.references.clone();
        if let Some(single) = &row.reference {
            references.insert(0, single.clone());
        }
        if references.is_empty() {
            return Err(parse_error(
                path,
                line_no,
                format!("instance '{}' has no reference", row.id),
            ));
        }
        if benchmark.segment(&row.id).is_some() {
            return Err(parse_error(
                path,
                line_no,
                format!("duplicate instance id '{}'", row.id),
            ));
        }
        benchmark.segments.push(Segment {
            id: row.id.clone(),
            source_text: String::new(),
            language_pair: "en".to_string(),
            domain_tag: None,
        });
        let mut refset = ReferenceSet::new(row.id.clone(), nfc(&references[0]));
        for extra in &references[1..] {
            refset.diversified.push(super::DiversifiedEntry {
                text: nfc(extra),
                provenance: super::Provenance::Human,
            });
        }
        benchmark.reference_sets.push(refset);
        for (slot, text) in [("candidate_a", candidate_a), ("candidate_b", candidate_b)] {
            benchmark.system_outputs.push(SystemOutput {
                system_id: slot.to_string(),
                segment_id: row.id.clone(),
                hypothesis: nfc(text),
            });
        }
        benchmark.human_judgments.push(HumanJudgment {
            kind: JudgmentKind::PairwisePreference,
            segment_id: Some(row.id.clone()),
            system_id: None,
            value: None,
            preferred_index: Some(row.preferred),
            candidate_systems: Some(["candidate_a".to_string(), "candidate_b".to_string()]),
            aspect: None,
            setting: Some(row.setting),
        });
    }
    Ok(benchmark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const NATIVE: &str = r#"{"kind":"benchmark","name":"demo","task":"translation"}
{"kind":"segment","id":"s1","source_text":"src1","language_pair":"zh-en"}
{"kind":"segment","id":"s2","source_text":"src2","language_pair":"zh-en"}
{"kind":"reference","segment_id":"s1","ground_truth":"the cat sat"}
{"kind":"reference","segment_id":"s2","ground_truth":"a dog ran"}
{"kind":"output","system_id":"sysA","segment_id":"s1","hypothesis":"the cat sat"}
{"kind":"output","system_id":"sysA","segment_id":"s2","hypothesis":"a dog ran"}
{"kind":"output","system_id":"sysB","segment_id":"s1","hypothesis":"cat"}
{"kind":"output","system_id":"sysB","segment_id":"s2","hypothesis":"dog"}
{"kind":"judgment","judgment_kind":"segment_score","segment_id":"s1","system_id":"sysA","value":3.0}
"#;

    #[test]
    fn native_counts_preserved() {
        let f = write_temp(NATIVE);
        let b = load_benchmark(f.path(), BenchmarkFormat::Native).unwrap();
        assert_eq!(b.name, "demo");
        assert_eq!(b.segments.len(), 2);
        assert_eq!(b.system_outputs.len(), 4);
        assert_eq!(b.human_judgments.len(), 1);
    }

    #[test]
    fn native_roundtrip_is_equal() {
        let f = write_temp(NATIVE);
        let b = load_benchmark(f.path(), BenchmarkFormat::Native).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_benchmark(&b, out.path()).unwrap();
        let b2 = load_benchmark(out.path(), BenchmarkFormat::Native).unwrap();
        assert_eq!(b, b2);
    }

    #[test]
    fn duplicate_segment_id_names_the_id() {
        let f = write_temp(
            r#"{"kind":"segment","id":"dup","source_text":"a"}
{"kind":"segment","id":"dup","source_text":"b"}
"#,
        );
        let err = load_benchmark(f.path(), BenchmarkFormat::Native).unwrap_err();
        assert!(err.to_string().contains("duplicate segment id 'dup'"), "{err}");
        assert!(err.to_string().contains(":2:"), "line number missing: {err}");
    }

    #[test]
    fn text_fields_are_nfc_normalized() {
        let f = write_temp(
            "{\"kind\":\"benchmark\",\"name\":\"n\",\"task\":\"translation\"}\n\
             {\"kind\":\"segment\",\"id\":\"s1\",\"source_text\":\"Cafe\\u0301\",\"language_pair\":\"x\"}\n\
             {\"kind\":\"reference\",\"segment_id\":\"s1\",\"ground_truth\":\"Cafe\\u0301\"}\n",
        );
        let b = load_benchmark(f.path(), BenchmarkFormat::Native).unwrap();
        assert_eq!(b.segments[0].source_text, "Café");
        assert_eq!(b.reference_sets[0].ground_truth, "Café");
    }

    #[test]
    fn wmt_adapter_builds_judgments() {
        let f = write_temp(
            "lp\tsegment_id\tsystem_id\tsource\treference\thypothesis\tscore\n\
             zh-en\t1\tsysA\tsrc\tthe cat\tcat\t-5.0\n\
             zh-en\t1\tsysB\tsrc\tthe cat\tthe cat\t0.0\n",
        );
        let b = load_benchmark(f.path(), BenchmarkFormat::Wmt).unwrap();
        assert_eq!(b.segments.len(), 1);
        assert_eq!(b.segments[0].id, "zh-en:1");
        assert_eq!(b.system_outputs.len(), 2);
        assert_eq!(b.human_judgments.len(), 2);
        assert_eq!(b.task, Task::Translation);
    }

    #[test]
    fn pascal_missing_candidate_is_an_error() {
        let f = write_temp(
            r#"{"id":"i1","reference":"a cat","candidate_a":"one cat","preferred":0,"setting":"HC"}
"#,
        );
        let err = load_benchmark(f.path(), BenchmarkFormat::Pascal50s).unwrap_err();
        assert!(
            err.to_string().contains("preference requires two candidates"),
            "{err}"
        );
    }

    #[test]
    fn summeval_keeps_extra_references_as_human() {
        let f = write_temp(
            r#"{"sample_id":"d1","source":"article","references":["ref one","ref two"],"system":"m1","summary":"sum","coherence":4.0,"relevance":3.0}
"#,
        );
        let b = load_benchmark(f.path(), BenchmarkFormat::Summeval).unwrap();
        assert_eq!(b.task, Task::Summarization);
        assert_eq!(b.reference_sets[0].diversified.len(), 1);
        assert_eq!(
            b.reference_sets[0].diversified[0].provenance,
            super::super::Provenance::Human
        );
        assert_eq!(b.human_judgments.len(), 2);
    }
}
