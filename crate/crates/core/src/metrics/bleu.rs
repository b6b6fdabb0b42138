//! Sentence-level BLEU with native multi-reference support.
//!
//! Modified n-gram precisions for orders 1..max_order (clipping against the
//! per-n-gram maximum reference count), geometric mean over the effective
//! orders, exponential smoothing of zero counts (the invariant count halves
//! at every zero-count order), and a brevity penalty against the closest
//! reference length (ties resolved toward the shorter reference).

use super::ngram::NGramProfile;
use super::{MetricId, MetricScore};
use crate::aggregation::Aggregation;
use crate::text::{tokenize, TokenizerConfig};
use crate::{Error, Result};

/// Per-order `(clipped matches, hypothesis n-gram total)` statistics.
pub fn clipped_counts(
    hyp_tokens: &[String],
    refs_tokens: &[Vec<String>],
    max_order: usize,
) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(max_order);
    for order in 1..=max_order {
        let hyp = NGramProfile::build(hyp_tokens, order);
        let refs: Vec<_> = refs_tokens
            .iter()
            .map(|r| NGramProfile::build(r, order))
            .collect();
        out.push((hyp.clipped_overlap_max(&refs), hyp.total()));
    }
    out
}

/// Closest reference length to the hypothesis length; ties prefer the
/// shorter reference.
pub fn closest_reference_length(hyp_len: usize, ref_lens: &[usize]) -> usize {
    ref_lens
        .iter()
        .copied()
        .min_by_key(|&len| (len.abs_diff(hyp_len), len))
        .unwrap_or(0)
}

pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// BLEU over token sequences. Empty hypothesis scores 0.
pub fn bleu_tokens(hyp_tokens: &[String], refs_tokens: &[Vec<String>], max_order: usize) -> f64 {
    if hyp_tokens.is_empty() {
        return 0.0;
    }
    let ref_lens: Vec<usize> = refs_tokens.iter().map(Vec::len).collect();
    let bp = brevity_penalty(
        hyp_tokens.len(),
        closest_reference_length(hyp_tokens.len(), &ref_lens),
    );

    let mut log_sum = 0.0;
    let mut effective_order = 0usize;
    let mut invariant = 1.0f64;
    for (matches, total) in clipped_counts(hyp_tokens, refs_tokens, max_order) {
        if total == 0 {
            break;
        }
        effective_order += 1;
        let precision = if matches == 0 {
            invariant *= 2.0;
            1.0 / (invariant * f64::from(total))
        } else {
            f64::from(matches) / f64::from(total)
        };
        log_sum += precision.ln();
    }
    if effective_order == 0 {
        return 0.0;
    }
    bp * (log_sum / effective_order as f64).exp()
}

pub(super) fn bleu_texts(
    hypothesis: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
    max_order: usize,
) -> f64 {
    let hyp = tokenize(hypothesis, tokenizer);
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r, tokenizer)).collect();
    bleu_tokens(&hyp, &refs, max_order)
}

/// Sentence BLEU of `hypothesis` against one or more references (native
/// multi-reference clipping when several are given).
pub fn sentence_bleu(
    hypothesis: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
) -> Result<MetricScore> {
    if references.is_empty() {
        return Err(Error::data("reference list must be non-empty"));
    }
    let value = bleu_texts(hypothesis, references, tokenizer, 4);
    Ok(MetricScore {
        metric_id: MetricId::Bleu,
        value,
        per_reference: None,
        aggregation_used: if references.len() == 1 {
            Aggregation::Single
        } else {
            Aggregation::Builtin
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1_HYP: &str = "My favorite fruit is apple, while hers beloved is banana.";
    const TABLE1_REFS: [&str; 4] = [
        "The apple is my most loved fruit but the banana is her most loved.",
        "Apples rank as my favorite fruit, but bananas hold that title for her.",
        "Apple is my favorite fruit, but banana is her most beloved.",
        "My most loved fruit is the apple, while her most loved is the banana.",
    ];

    fn cfg() -> TokenizerConfig {
        TokenizerConfig::default()
    }

    #[test]
    fn identity_scores_one() {
        let s = sentence_bleu("the cat sat", &["the cat sat"], &cfg()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let s = sentence_bleu("", &["the cat"], &cfg()).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn empty_reference_list_is_an_error() {
        assert!(sentence_bleu("x", &[], &cfg()).is_err());
    }

    #[test]
    fn clipping_limits_repeated_unigrams() {
        let hyp = tokenize("the the the the", &cfg());
        let refs = vec![tokenize("the cat", &cfg())];
        let counts = clipped_counts(&hyp, &refs, 4);
        assert_eq!(counts[0], (1, 4)); // unigram precision clipped to 1/4
        // full score; frozen from the direct-from-definition oracle
        let v = bleu_tokens(&hyp, &refs, 4);
        assert!((v - 0.159735776).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn table1_single_reference() {
        // Documented reproduction caveat: the default tokenizer with
        // exponential smoothing yields 0.0429 here, not the 0.014 some
        // toolkits report for this pair.
        let s = sentence_bleu(TABLE1_HYP, &TABLE1_REFS[..1], &cfg()).unwrap();
        assert!((s.value - 0.042899).abs() < 1e-6, "got {}", s.value);
    }

    #[test]
    fn table1_builtin_multi_reference() {
        let s = sentence_bleu(TABLE1_HYP, &TABLE1_REFS, &cfg()).unwrap();
        assert!((s.value - 0.251).abs() < 0.0005, "got {}", s.value);
        assert_eq!(s.aggregation_used, Aggregation::Builtin);
    }

    #[test]
    fn brevity_penalty_uses_closest_length_tie_to_shorter() {
        assert_eq!(closest_reference_length(5, &[7, 3]), 3); // tie -> shorter
        assert_eq!(closest_reference_length(5, &[6, 3]), 6);
        assert!((brevity_penalty(4, 2) - 1.0).abs() < 1e-12);
        assert!((brevity_penalty(2, 4) - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn short_hypothesis_uses_effective_order() {
        // 2-token identity: only orders 1..2 exist, still a perfect score.
        let s = sentence_bleu("the cat", &["the cat"], &cfg()).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }
}
