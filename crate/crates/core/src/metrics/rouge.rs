//! ROUGE-N (F1 of n-gram overlap) and ROUGE-L (F1 from the longest common
//! subsequence). Per-reference scores are exposed; the cross-reference value
//! reported here is the maximum, with max/mean left to the aggregation layer.

use super::ngram::NGramProfile;
use super::{MetricId, MetricScore};
use crate::aggregation::Aggregation;
use crate::text::{tokenize, TokenizerConfig};
use crate::{Error, Result};

fn f1(overlap: f64, hyp_total: f64, ref_total: f64) -> f64 {
    if hyp_total == 0.0 || ref_total == 0.0 {
        return 0.0;
    }
    let precision = overlap / hyp_total;
    let recall = overlap / ref_total;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// ROUGE-N F1 for one pair of token sequences.
pub fn rouge_n_tokens(hyp: &[String], reference: &[String], n: usize) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let hyp_profile = NGramProfile::build(hyp, n);
    let ref_profile = NGramProfile::build(reference, n);
    let overlap = hyp_profile.clipped_overlap(&ref_profile);
    f1(
        f64::from(overlap),
        f64::from(hyp_profile.total()),
        f64::from(ref_profile.total()),
    )
}

/// Longest common subsequence length via the classic DP table.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for item_a in a {
        for (j, item_b) in b.iter().enumerate() {
            current[j + 1] = if item_a == item_b {
                prev[j] + 1
            } else {
                current[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// ROUGE-L F1 for one pair of token sequences.
pub fn rouge_l_tokens(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(hyp, reference) as f64;
    f1(lcs, hyp.len() as f64, reference.len() as f64)
}

pub(super) fn rouge_n_texts(
    hypothesis: &str,
    references: &[&str],
    n: usize,
    tokenizer: &TokenizerConfig,
) -> (f64, Vec<f64>) {
    let hyp = tokenize(hypothesis, tokenizer);
    let per_reference: Vec<f64> = references
        .iter()
        .map(|r| rouge_n_tokens(&hyp, &tokenize(r, tokenizer), n))
        .collect();
    (per_reference.iter().copied().fold(0.0, f64::max), per_reference)
}

pub(super) fn rouge_l_texts(
    hypothesis: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
) -> (f64, Vec<f64>) {
    let hyp = tokenize(hypothesis, tokenizer);
    let per_reference: Vec<f64> = references
        .iter()
        .map(|r| rouge_l_tokens(&hyp, &tokenize(r, tokenizer)))
        .collect();
    (per_reference.iter().copied().fold(0.0, f64::max), per_reference)
}

fn assemble(
    metric_id: MetricId,
    (value, per_reference): (f64, Vec<f64>),
) -> MetricScore {
    let aggregation_used = if per_reference.len() == 1 {
        Aggregation::Single
    } else {
        Aggregation::Max
    };
    MetricScore {
        metric_id,
        value,
        per_reference: Some(per_reference),
        aggregation_used,
    }
}

/// ROUGE-N with n in {1, 2}.
pub fn rouge_n(
    hypothesis: &str,
    references: &[&str],
    n: usize,
    tokenizer: &TokenizerConfig,
) -> Result<MetricScore> {
    if references.is_empty() {
        return Err(Error::data("reference list must be non-empty"));
    }
    let metric_id = match n {
        1 => MetricId::Rouge1,
        2 => MetricId::Rouge2,
        _ => return Err(Error::config(format!("rouge-n supports n in {{1, 2}}, got {n}"))),
    };
    Ok(assemble(metric_id, rouge_n_texts(hypothesis, references, n, tokenizer)))
}

pub fn rouge_l(
    hypothesis: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
) -> Result<MetricScore> {
    if references.is_empty() {
        return Err(Error::data("reference list must be non-empty"));
    }
    Ok(assemble(MetricId::RougeL, rouge_l_texts(hypothesis, references, tokenizer)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, &TokenizerConfig::default())
    }

    #[test]
    fn identical_texts_score_one() {
        let cfg = TokenizerConfig::default();
        for n in [1, 2] {
            let s = rouge_n("a b c d", &["a b c d"], n, &cfg).unwrap();
            assert!((s.value - 1.0).abs() < 1e-12);
        }
        let s = rouge_l("a b c d", &["a b c d"], &cfg).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lcs_example() {
        // LCS("a b c d", "a c b d") = 3 -> P = R = F = 0.75
        assert_eq!(lcs_length(&toks("a b c d"), &toks("a c b d")), 3);
        let s = rouge_l("a b c d", &["a c b d"], &TokenizerConfig::default()).unwrap();
        assert!((s.value - 0.75).abs() < 1e-12);
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let cfg = TokenizerConfig::default();
        assert_eq!(rouge_n("a b", &["c d"], 1, &cfg).unwrap().value, 0.0);
        assert_eq!(rouge_l("a b", &["c d"], &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn f1_is_symmetric_in_arguments() {
        let (h, r) = ("the cat sat on the mat", "a cat lay on a mat");
        for n in [1, 2] {
            let a = rouge_n_tokens(&toks(h), &toks(r), n);
            let b = rouge_n_tokens(&toks(r), &toks(h), n);
            assert!((a - b).abs() < 1e-12);
        }
        let a = rouge_l_tokens(&toks(h), &toks(r));
        let b = rouge_l_tokens(&toks(r), &toks(h));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn per_reference_breakdown_exposed() {
        let s = rouge_n("a b", &["a b", "z z"], 1, &TokenizerConfig::default()).unwrap();
        let per = s.per_reference.unwrap();
        assert_eq!(per.len(), 2);
        assert!((per[0] - 1.0).abs() < 1e-12);
        assert_eq!(per[1], 0.0);
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let cfg = TokenizerConfig::default();
        assert_eq!(rouge_n("", &["a"], 1, &cfg).unwrap().value, 0.0);
        assert_eq!(rouge_l("", &["a"], &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn invalid_n_rejected() {
        assert!(rouge_n("a", &["a"], 3, &TokenizerConfig::default()).is_err());
    }
}
