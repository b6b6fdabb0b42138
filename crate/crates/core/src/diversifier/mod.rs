//! Reference diversification: prompt templates, generation records, the
//! generation cache, deduplication and judge-based filtering.
//!
//! All nondeterminism is confined to provider calls; everything downstream
//! of the cache is deterministic.

mod cache;
mod provider;

pub use cache::GenerationCache;
pub use provider::{
    complete_with_retry, CompletionProvider, EmbeddingProvider, HttpProvider, ProviderConfig,
};

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Benchmark;
use crate::{Error, Result};

/// The ten diversifying instructions plus the basic paraphrase prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptId {
    Basic,
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
    P9,
    P10,
}

impl PromptId {
    pub const DIVERSE: [PromptId; 10] = [
        PromptId::P1,
        PromptId::P2,
        PromptId::P3,
        PromptId::P4,
        PromptId::P5,
        PromptId::P6,
        PromptId::P7,
        PromptId::P8,
        PromptId::P9,
        PromptId::P10,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptId::Basic => "basic",
            PromptId::P1 => "p1",
            PromptId::P2 => "p2",
            PromptId::P3 => "p3",
            PromptId::P4 => "p4",
            PromptId::P5 => "p5",
            PromptId::P6 => "p6",
            PromptId::P7 => "p7",
            PromptId::P8 => "p8",
            PromptId::P9 => "p9",
            PromptId::P10 => "p10",
        }
    }

    /// Ordering used by the provenance sort: basic, then p1..p10.
    pub fn order(self) -> usize {
        match self {
            PromptId::Basic => 0,
            PromptId::P1 => 1,
            PromptId::P2 => 2,
            PromptId::P3 => 3,
            PromptId::P4 => 4,
            PromptId::P5 => 5,
            PromptId::P6 => 6,
            PromptId::P7 => 7,
            PromptId::P8 => 8,
            PromptId::P9 => 9,
            PromptId::P10 => 10,
        }
    }
}

impl std::fmt::Display for PromptId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

const DIVERSE_INSTRUCTIONS: [&str; 10] = [
    "Change the order of the sentences:",
    "Change the structure of the sentences:",
    "Change the voice of the sentences:",
    "Change the tense of the sentences:",
    "Alter the tone of the sentences:",
    "Alter the style of the sentences:",
    "Rephrase the sentences while retaining the original meaning:",
    "Use synonyms or related words to express the sentences with the same meaning:",
    "Use more formal language to change the level of formality of the sentences:",
    "Use less formal language to change the level of formality of the sentences:",
];

const BASIC_INSTRUCTION: &str = "Paraphrase the sentences: {reference}";

const DIVERSE_INSTRUCTIONS_DE: [&str; 10] = [
    "Ändere die Reihenfolge der Sätze:",
    "Ändere die Struktur der Sätze:",
    "Wechsle zwischen Aktiv und Passiv in den Sätzen:",
    "Ändere die Zeitform der Sätze:",
    "Verändere den Ton der Sätze:",
    "Verändere den Stil der Sätze:",
    "Formuliere die Sätze um, ohne die ursprüngliche Bedeutung zu verändern:",
    "Verwende Synonyme oder verwandte Wörter, um die Sätze mit derselben Bedeutung auszudrücken:",
    "Verwende formellere Sprache, um das Formalitätsniveau der Sätze zu ändern:",
    "Verwende weniger formelle Sprache, um das Formalitätsniveau der Sätze zu ändern:",
];

const DIVERSE_INSTRUCTIONS_RU: [&str; 10] = [
    "Измените порядок предложений:",
    "Измените структуру предложений:",
    "Измените залог предложений:",
    "Измените время глаголов в предложениях:",
    "Измените тон предложений:",
    "Измените стиль предложений:",
    "Перефразируйте предложения, сохранив исходный смысл:",
    "Используйте синонимы или близкие по смыслу слова, чтобы выразить предложения с тем же значением:",
    "Используйте более формальный язык, чтобы изменить уровень формальности предложений:",
    "Используйте менее формальный язык, чтобы изменить уровень формальности предложений:",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: PromptId,
    pub instruction: String,
}

impl PromptTemplate {
    pub fn basic() -> Self {
        PromptTemplate {
            id: PromptId::Basic,
            instruction: BASIC_INSTRUCTION.to_string(),
        }
    }

    /// The ten diversifying instructions, in English.
    pub fn diverse() -> Vec<PromptTemplate> {
        PromptId::DIVERSE
            .iter()
            .zip(DIVERSE_INSTRUCTIONS)
            .map(|(&id, instruction)| PromptTemplate {
                id,
                instruction: instruction.to_string(),
            })
            .collect()
    }

    /// The ten instructions translated into the reference language; bundled
    /// translations exist for German and Russian, other languages fall back
    /// to the English instructions.
    pub fn diverse_for_language(language: &str) -> Vec<PromptTemplate> {
        let set: &[&str; 10] = match language {
            "de" => &DIVERSE_INSTRUCTIONS_DE,
            "ru" => &DIVERSE_INSTRUCTIONS_RU,
            _ => &DIVERSE_INSTRUCTIONS,
        };
        PromptId::DIVERSE
            .iter()
            .zip(set)
            .map(|(&id, instruction)| PromptTemplate {
                id,
                instruction: instruction.to_string(),
            })
            .collect()
    }
}

/// Which instruction family drives generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSet {
    Diverse,
    Basic,
    Multilingual,
}

impl std::str::FromStr for PromptSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diverse" => Ok(PromptSet::Diverse),
            "basic" => Ok(PromptSet::Basic),
            "multilingual" => Ok(PromptSet::Multilingual),
            other => Err(Error::config(format!("unknown prompt set '{other}'"))),
        }
    }
}

/// Expand a template with the reference text: the `{reference}` slot is
/// substituted once, or the reference is appended after the instruction.
pub fn build_prompt(template: &PromptTemplate, reference: &str) -> Result<String> {
    if reference.is_empty() {
        return Err(Error::data("cannot build a prompt from an empty reference"));
    }
    if template.instruction.contains("{reference}") {
        Ok(template.instruction.replacen("{reference}", reference, 1))
    } else {
        Ok(format!("{} {}", template.instruction, reference))
    }
}

/// Sampling parameters of a generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub model_id: String,
    pub max_attempts: u32,
    pub per_prompt_count: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 1.0,
            top_p: 0.9,
            model_id: "gpt-3.5-turbo-instruct".to_string(),
            max_attempts: 5,
            per_prompt_count: 1,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts < 1 {
            return Err(Error::config("max_attempts must be >= 1"));
        }
        Ok(())
    }

    /// Digest of the sampling-relevant parameters; part of the cache key.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(format!(
            "model_id={}\ntemperature={:?}\ntop_p={:?}",
            self.model_id, self.temperature, self.top_p
        ));
        hex::encode(&hasher.finalize()[..8])
    }
}

/// One cached generation. `(segment_id, prompt_id, sample_index, model_id,
/// params_digest)` is the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversifiedRecord {
    pub segment_id: String,
    pub prompt_id: PromptId,
    pub sample_index: u32,
    pub model_id: String,
    pub text: String,
    pub created_at: u64,
    pub params_digest: String,
    /// Judge verdict: Some(true) = flagged subpar, Some(false) = kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered: Option<bool>,
}

impl DiversifiedRecord {
    pub fn cache_key(&self) -> String {
        cache_key(
            &self.segment_id,
            self.prompt_id,
            self.sample_index,
            &self.model_id,
            &self.params_digest,
        )
    }
}

pub(crate) fn cache_key(
    segment_id: &str,
    prompt_id: PromptId,
    sample_index: u32,
    model_id: &str,
    params_digest: &str,
) -> String {
    format!("{segment_id}\u{1f}{prompt_id}\u{1f}{sample_index}\u{1f}{model_id}\u{1f}{params_digest}")
}

/// Read line-delimited records.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<DiversifiedRecord>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DiversifiedRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Write line-delimited records.
pub fn write_records(path: impl AsRef<Path>, records: &[DiversifiedRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record).expect("records serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Strip surrounding whitespace and one layer of enclosing quotes.
pub fn postprocess_response(raw: &str) -> String {
    let trimmed = raw.trim();
    let unquoted = [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')]
        .iter()
        .find_map(|&(open, close)| {
            let inner = trimmed.strip_prefix(open)?.strip_suffix(close)?;
            (!inner.is_empty()).then_some(inner)
        })
        .unwrap_or(trimmed);
    unquoted.trim().to_string()
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct GenerationRequest {
    segment_id: String,
    prompt_id: PromptId,
    sample_index: u32,
    prompt: String,
}

/// Target language of a segment: the part after `-` in its language pair.
fn target_language(language_pair: &str) -> &str {
    language_pair
        .split_once('-')
        .map_or(language_pair, |(_, tgt)| tgt)
}

/// Generate `n` diversified references per segment.
///
/// With the diverse prompt set, generation `k` uses instruction
/// `p{k % 10 + 1}` with sample index `k / 10`, so n <= 10 yields one
/// generation for each of the first n instructions. Cached generations are
/// never re-requested; fresh ones are appended to the cache before being
/// returned. On provider failure the successful part is persisted and the
/// error lists the missing keys.
pub fn generate_diversified(
    benchmark: &Benchmark,
    prompt_set: PromptSet,
    n: u32,
    params: &GenerationParams,
    provider: &dyn CompletionProvider,
    cache: &GenerationCache,
    max_concurrency: usize,
) -> Result<Vec<DiversifiedRecord>> {
    params.validate()?;
    let digest = params.digest();
    let english = PromptTemplate::diverse();
    let basic = PromptTemplate::basic();

    let mut records: Vec<DiversifiedRecord> = Vec::new();
    let mut requests: Vec<GenerationRequest> = Vec::new();
    for refset in &benchmark.reference_sets {
        let templates: Vec<PromptTemplate> = match prompt_set {
            PromptSet::Diverse => english.clone(),
            PromptSet::Basic => vec![basic.clone()],
            PromptSet::Multilingual => {
                let language = benchmark
                    .segment(&refset.segment_id)
                    .map(|s| target_language(&s.language_pair))
                    .unwrap_or("en");
                PromptTemplate::diverse_for_language(language)
            }
        };
        for k in 0..n {
            let (template, sample_index) = match prompt_set {
                PromptSet::Basic => (&templates[0], k),
                _ => (
                    &templates[k as usize % templates.len()],
                    k / templates.len() as u32,
                ),
            };
            let key = cache_key(
                &refset.segment_id,
                template.id,
                sample_index,
                &params.model_id,
                &digest,
            );
            if let Some(hit) = cache.get(&key) {
                records.push(hit);
                continue;
            }
            requests.push(GenerationRequest {
                segment_id: refset.segment_id.clone(),
                prompt_id: template.id,
                sample_index,
                prompt: build_prompt(template, &refset.ground_truth)?,
            });
        }
    }

    if !requests.is_empty() {
        let fresh = Mutex::new(Vec::<DiversifiedRecord>::new());
        let failures = Mutex::new(Vec::<String>::new());
        let next = std::sync::atomic::AtomicUsize::new(0);
        let workers = max_concurrency.max(1).min(requests.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(request) = requests.get(idx) else {
                        break;
                    };
                    match complete_with_retry(provider, &request.prompt, params) {
                        Ok(text) => {
                            let record = DiversifiedRecord {
                                segment_id: request.segment_id.clone(),
                                prompt_id: request.prompt_id,
                                sample_index: request.sample_index,
                                model_id: params.model_id.clone(),
                                text,
                                created_at: unix_now(),
                                params_digest: digest.clone(),
                                filtered: None,
                            };
                            if let Err(e) = cache.append(&record) {
                                failures.lock().unwrap().push(e.to_string());
                            }
                            fresh.lock().unwrap().push(record);
                        }
                        Err(e) => {
                            failures.lock().unwrap().push(format!(
                                "{}: {e}",
                                cache_key(
                                    &request.segment_id,
                                    request.prompt_id,
                                    request.sample_index,
                                    &params.model_id,
                                    &digest
                                )
                            ));
                        }
                    }
                });
            }
        });
        let failures = failures.into_inner().unwrap();
        records.extend(fresh.into_inner().unwrap());
        if !failures.is_empty() {
            return Err(Error::provider(format!(
                "{} generation(s) failed after {} attempt(s); partial results persisted to cache; missing: {}",
                failures.len(),
                params.max_attempts,
                failures.join("; ")
            )));
        }
    }

    records.sort_by(|a, b| {
        (a.segment_id.as_str(), a.prompt_id.order(), a.sample_index).cmp(&(
            b.segment_id.as_str(),
            b.prompt_id.order(),
            b.sample_index,
        ))
    });
    Ok(records)
}

/// Collapse exact-duplicate texts per segment, keeping the entry with the
/// lowest (prompt, sample index).
pub fn dedupe(records: Vec<DiversifiedRecord>) -> Vec<DiversifiedRecord> {
    let mut sorted = records;
    sorted.sort_by(|a, b| {
        (a.segment_id.as_str(), a.prompt_id.order(), a.sample_index).cmp(&(
            b.segment_id.as_str(),
            b.prompt_id.order(),
            b.sample_index,
        ))
    });
    let mut seen: HashSet<(String, String)> = HashSet::new();
    sorted.retain(|r| seen.insert((r.segment_id.clone(), r.text.clone())));
    sorted
}

/// The verbatim judge template.
pub fn judge_prompt(reference: &str, diversified: &str) -> String {
    format!(
        "Sentence 1: {reference}\nSentence 2: {diversified}\nDo sentence 1 and sentence 2 convey the same meaning?\n\n"
    )
}

/// Affirmative/negative parse of a judge answer; None when unparseable.
/// The earliest occurrence of "yes" or "no" wins.
pub fn parse_judge_answer(answer: &str) -> Option<bool> {
    let lower = answer.to_lowercase();
    let yes = lower.find("yes");
    // avoid matching the "no" inside words like "note"/"know" at the very
    // start only when "yes" is absent entirely? Keep it simple: substring
    // positions decide.
    let no = lower.find("no");
    match (yes, no) {
        (Some(y), Some(n)) => Some(y < n),
        (Some(_), None) => Some(true),
        (None, Some(_)) => Some(false),
        (None, None) => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterStats {
    pub kept: usize,
    pub flagged: usize,
    pub unparseable: usize,
}

/// Judge every record against its segment's ground truth. Affirmative
/// verdicts are kept, negative ones flagged; unparseable answers are kept
/// and counted as warnings.
pub fn filter_subpar(
    records: Vec<DiversifiedRecord>,
    ground_truths: &HashMap<String, String>,
    judge: &dyn CompletionProvider,
    judge_params: &GenerationParams,
    max_concurrency: usize,
) -> Result<(Vec<DiversifiedRecord>, FilterStats)> {
    judge_params.validate()?;
    for record in &records {
        if !ground_truths.contains_key(&record.segment_id) {
            return Err(Error::data(format!(
                "no ground truth for segment '{}'",
                record.segment_id
            )));
        }
    }
    let verdicts: Mutex<HashMap<usize, Option<bool>>> = Mutex::new(HashMap::new());
    let failures = Mutex::new(Vec::<String>::new());
    let next = std::sync::atomic::AtomicUsize::new(0);
    let workers = max_concurrency.max(1).min(records.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(record) = records.get(idx) else {
                    break;
                };
                let prompt = judge_prompt(&ground_truths[&record.segment_id], &record.text);
                match complete_with_retry(judge, &prompt, judge_params) {
                    Ok(answer) => {
                        verdicts
                            .lock()
                            .unwrap()
                            .insert(idx, parse_judge_answer(&answer));
                    }
                    Err(e) => failures
                        .lock()
                        .unwrap()
                        .push(format!("{}: {e}", record.cache_key())),
                }
            });
        }
    });
    let failures = failures.into_inner().unwrap();
    if !failures.is_empty() {
        return Err(Error::provider(format!(
            "judge failed for {} record(s): {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    let verdicts = verdicts.into_inner().unwrap();
    let mut stats = FilterStats::default();
    let mut records = records;
    for (idx, record) in records.iter_mut().enumerate() {
        match verdicts.get(&idx).copied().flatten() {
            Some(true) => {
                stats.kept += 1;
                record.filtered = Some(false);
            }
            Some(false) => {
                stats.flagged += 1;
                record.filtered = Some(true);
            }
            None => {
                stats.unparseable += 1;
                stats.kept += 1;
                record.filtered = Some(false);
            }
        }
    }
    Ok((records, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_prompt_expansion() {
        let p = build_prompt(&PromptTemplate::basic(), "Hello.").unwrap();
        assert_eq!(p, "Paraphrase the sentences: Hello.");
    }

    #[test]
    fn diverse_prompts_begin_with_their_instruction() {
        let prompts = PromptTemplate::diverse();
        let first = build_prompt(&prompts[0], "r").unwrap();
        assert!(first.starts_with("Change the order of the sentences:"));
        let last = build_prompt(&prompts[9], "r").unwrap();
        assert!(last.starts_with("Use less formal language"));
    }

    #[test]
    fn empty_reference_rejected() {
        assert!(build_prompt(&PromptTemplate::basic(), "").is_err());
    }

    #[test]
    fn instructions_match_the_published_list() {
        let expected = [
            "Change the order of the sentences:",
            "Change the structure of the sentences:",
            "Change the voice of the sentences:",
            "Change the tense of the sentences:",
            "Alter the tone of the sentences:",
            "Alter the style of the sentences:",
            "Rephrase the sentences while retaining the original meaning:",
            "Use synonyms or related words to express the sentences with the same meaning:",
            "Use more formal language to change the level of formality of the sentences:",
            "Use less formal language to change the level of formality of the sentences:",
        ];
        for (template, expected) in PromptTemplate::diverse().iter().zip(expected) {
            assert_eq!(template.instruction, expected);
        }
    }

    #[test]
    fn multilingual_fallback_is_english() {
        assert_eq!(
            PromptTemplate::diverse_for_language("fr"),
            PromptTemplate::diverse()
        );
        assert_ne!(
            PromptTemplate::diverse_for_language("de"),
            PromptTemplate::diverse()
        );
        assert_ne!(
            PromptTemplate::diverse_for_language("ru"),
            PromptTemplate::diverse()
        );
    }

    #[test]
    fn dedupe_collapses_per_segment_only() {
        let rec = |seg: &str, prompt: PromptId, text: &str| DiversifiedRecord {
            segment_id: seg.into(),
            prompt_id: prompt,
            sample_index: 0,
            model_id: "m".into(),
            text: text.into(),
            created_at: 0,
            params_digest: "d".into(),
            filtered: None,
        };
        let records = vec![
            rec("s1", PromptId::P2, "same"),
            rec("s1", PromptId::P1, "same"),
            rec("s2", PromptId::P1, "same"),
            rec("s1", PromptId::P3, "other"),
        ];
        let out = dedupe(records);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].prompt_id, PromptId::P1); // lowest prompt survives
        assert!(out.iter().any(|r| r.segment_id == "s2"));
    }

    #[test]
    fn judge_answers_parse() {
        assert_eq!(parse_judge_answer("Yes, they do."), Some(true));
        assert_eq!(parse_judge_answer(" NO."), Some(false));
        assert_eq!(parse_judge_answer("Unclear."), None);
        assert_eq!(parse_judge_answer("Yes and no"), Some(true));
    }

    #[test]
    fn postprocess_strips_quotes_once() {
        assert_eq!(postprocess_response("  \"hello\" "), "hello");
        assert_eq!(postprocess_response("\"\"x\"\""), "\"x\"");
        assert_eq!(postprocess_response("plain"), "plain");
        assert_eq!(postprocess_response("\u{201c}smart\u{201d}"), "smart");
    }

    #[test]
    fn params_digest_is_stable_and_sensitive() {
        let a = GenerationParams::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.temperature = 0.5;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn judge_template_is_verbatim() {
        assert_eq!(
            judge_prompt("A.", "B."),
            "Sentence 1: A.\nSentence 2: B.\nDo sentence 1 and sentence 2 convey the same meaning?\n\n"
        );
    }
}
