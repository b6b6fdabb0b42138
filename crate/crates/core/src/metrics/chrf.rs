//! ChrF: character n-gram F-score, orders 1..6 over whitespace-stripped
//! text, F_beta (beta = 2) of the order-averaged precisions and recalls.
//! Orders where neither side has any n-gram are excluded from the average,
//! so identical texts score 100 regardless of length. The built-in
//! multi-reference score is the per-reference maximum.

use super::ngram::NGramProfile;
use super::{MetricId, MetricScore};
use crate::aggregation::Aggregation;
use crate::text::chrf_chars;
use crate::{Error, Result};

/// ChrF of one hypothesis/reference pair over char sequences, in [0, 100].
pub fn chrf_pair(hyp: &[char], reference: &[char], char_order: usize, beta: f64) -> f64 {
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut counted_orders = 0usize;
    for order in 1..=char_order {
        let hyp_profile = NGramProfile::build(hyp, order);
        let ref_profile = NGramProfile::build(reference, order);
        let hyp_total = hyp_profile.total();
        let ref_total = ref_profile.total();
        if hyp_total == 0 && ref_total == 0 {
            continue;
        }
        counted_orders += 1;
        let matches = hyp_profile.clipped_overlap(&ref_profile);
        if hyp_total > 0 {
            precision_sum += f64::from(matches) / f64::from(hyp_total);
        }
        if ref_total > 0 {
            recall_sum += f64::from(matches) / f64::from(ref_total);
        }
    }
    if counted_orders == 0 {
        return 0.0;
    }
    let precision = precision_sum / counted_orders as f64;
    let recall = recall_sum / counted_orders as f64;
    let beta_sq = beta * beta;
    let denominator = beta_sq * precision + recall;
    if denominator == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + beta_sq) * precision * recall / denominator
}

pub(super) fn chrf_texts(
    hypothesis: &str,
    references: &[&str],
    lowercase: bool,
    char_order: usize,
    beta: f64,
) -> f64 {
    let hyp = chrf_chars(hypothesis, lowercase);
    if hyp.is_empty() {
        return 0.0;
    }
    references
        .iter()
        .map(|r| chrf_pair(&hyp, &chrf_chars(r, lowercase), char_order, beta))
        .fold(0.0, f64::max)
}

/// Sentence ChrF in [0, 100]; with several references, the built-in
/// behavior takes the best-matching one.
pub fn chrf(
    hypothesis: &str,
    references: &[&str],
    lowercase: bool,
    char_order: usize,
    beta: f64,
) -> Result<MetricScore> {
    if references.is_empty() {
        return Err(Error::data("reference list must be non-empty"));
    }
    if beta <= 0.0 {
        return Err(Error::config("chrf beta must be > 0"));
    }
    let value = chrf_texts(hypothesis, references, lowercase, char_order, beta);
    Ok(MetricScore {
        metric_id: MetricId::Chrf,
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

    #[test]
    fn identity_scores_hundred() {
        for text in ["abc", "the cat sat on the mat", "x"] {
            let s = chrf(text, &[text], true, 6, 2.0).unwrap();
            assert!((s.value - 100.0).abs() < 1e-9, "{text}: {}", s.value);
        }
    }

    #[test]
    fn abc_abd_frozen_value() {
        // unigram P=R=2/3, bigram P=R=1/2, trigram P=R=0, orders 4..6 empty
        // on both sides and excluded; avg P = avg R = 7/18, F2 = avg.
        let s = chrf("abc", &["abd"], true, 6, 2.0).unwrap();
        assert!((s.value - 700.0 / 18.0).abs() < 1e-9, "got {}", s.value);
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let s = chrf("", &["anything"], true, 6, 2.0).unwrap();
        assert_eq!(s.value, 0.0);
        // whitespace-only collapses to empty as well
        let s = chrf("  \t ", &["anything"], true, 6, 2.0).unwrap();
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn whitespace_is_ignored() {
        let a = chrf("ab cd", &["abcd"], true, 6, 2.0).unwrap();
        assert!((a.value - 100.0).abs() < 1e-9);
    }

    #[test]
    fn multi_reference_takes_maximum() {
        let best = chrf("abc", &["zzz", "abc"], true, 6, 2.0).unwrap();
        assert!((best.value - 100.0).abs() < 1e-9);
        assert_eq!(best.aggregation_used, Aggregation::Builtin);
    }

    #[test]
    fn rejects_bad_beta_and_empty_refs() {
        assert!(chrf("a", &[], true, 6, 2.0).is_err());
        assert!(chrf("a", &["a"], true, 6, 0.0).is_err());
    }
}
