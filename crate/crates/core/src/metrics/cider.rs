//! CIDEr-D: tf-idf weighted n-gram cosine similarity with a Gaussian length
//! penalty, clipped against the reference counts, averaged over orders
//! 1..4 and scaled by 10.
//!
//! The idf table is frozen on the corpus ground-truth references only, never
//! on diversified ones, so scores stay comparable as reference sets grow.

use std::collections::HashMap;

use super::porter::stem;
use super::{MetricId, MetricParams, MetricScore};
use crate::aggregation::Aggregation;
use crate::text::{tokenize, TokenizerConfig};
use crate::{Error, Result};

type NGram = Vec<String>;

/// Corpus-fitted CIDEr-D scorer; the idf table is read-only after `fit`.
#[derive(Debug, Clone)]
pub struct CiderScorer {
    document_frequency: HashMap<NGram, f64>,
    corpus_size: usize,
    max_order: usize,
    sigma: f64,
    tokenizer: TokenizerConfig,
}

fn stemmed_tokens(text: &str, tokenizer: &TokenizerConfig) -> Vec<String> {
    tokenize(text, tokenizer)
        .into_iter()
        .map(|t| stem(&t))
        .collect()
}

fn ngram_counts(tokens: &[String], max_order: usize) -> Vec<HashMap<NGram, f64>> {
    (1..=max_order)
        .map(|order| {
            let mut counts: HashMap<NGram, f64> = HashMap::new();
            if tokens.len() >= order {
                for window in tokens.windows(order) {
                    *counts.entry(window.to_vec()).or_insert(0.0) += 1.0;
                }
            }
            counts
        })
        .collect()
}

impl CiderScorer {
    /// Build the idf table from one ground-truth reference per instance.
    /// Needs at least two instances for idf to be definable.
    pub fn fit<S: AsRef<str>>(
        ground_truths: &[S],
        tokenizer: &TokenizerConfig,
        params: &MetricParams,
    ) -> Result<Self> {
        if ground_truths.len() < 2 {
            return Err(Error::data(format!(
                "cider needs a corpus of at least 2 instances, got {}",
                ground_truths.len()
            )));
        }
        let mut document_frequency: HashMap<NGram, f64> = HashMap::new();
        for text in ground_truths {
            let tokens = stemmed_tokens(text.as_ref(), tokenizer);
            let mut seen: Vec<HashMap<NGram, f64>> = ngram_counts(&tokens, params.cider_max_order);
            for counts in seen.iter_mut() {
                for gram in counts.drain().map(|(g, _)| g) {
                    *document_frequency.entry(gram).or_insert(0.0) += 1.0;
                }
            }
        }
        Ok(CiderScorer {
            document_frequency,
            corpus_size: ground_truths.len(),
            max_order: params.cider_max_order,
            sigma: params.cider_sigma,
            tokenizer: *tokenizer,
        })
    }

    fn idf(&self, gram: &NGram) -> f64 {
        let df = self.document_frequency.get(gram).copied().unwrap_or(0.0);
        (self.corpus_size as f64 / df.max(1.0)).ln()
    }

    /// Per-order tf-idf vectors and their norms.
    fn vectorize(&self, text: &str) -> (Vec<HashMap<NGram, f64>>, Vec<f64>, usize) {
        let tokens = stemmed_tokens(text, &self.tokenizer);
        let length = tokens.len();
        let mut vectors = ngram_counts(&tokens, self.max_order);
        let mut norms = Vec::with_capacity(self.max_order);
        for counts in vectors.iter_mut() {
            let mut norm_sq = 0.0;
            for (gram, value) in counts.iter_mut() {
                *value *= self.idf(gram);
                norm_sq += *value * *value;
            }
            norms.push(norm_sq.sqrt());
        }
        (vectors, norms, length)
    }

    /// CIDEr-D of a hypothesis against its reference set, in [0, 10].
    /// The multi-reference behavior is the metric's own: a mean over
    /// per-reference similarities.
    pub fn score(&self, hypothesis: &str, references: &[&str]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let (hyp_vecs, hyp_norms, hyp_len) = self.vectorize(hypothesis);
        let mut order_sums = vec![0.0f64; self.max_order];
        for reference in references {
            let (ref_vecs, ref_norms, ref_len) = self.vectorize(reference);
            let delta = hyp_len as f64 - ref_len as f64;
            let length_penalty = (-delta * delta / (2.0 * self.sigma * self.sigma)).exp();
            for n in 0..self.max_order {
                if hyp_norms[n] == 0.0 || ref_norms[n] == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for (gram, &hyp_weight) in &hyp_vecs[n] {
                    if let Some(&ref_weight) = ref_vecs[n].get(gram) {
                        dot += hyp_weight.min(ref_weight) * ref_weight;
                    }
                }
                order_sums[n] += dot / (hyp_norms[n] * ref_norms[n]) * length_penalty;
            }
        }
        let refs = references.len() as f64;
        let mean_over_orders: f64 =
            order_sums.iter().map(|s| s / refs).sum::<f64>() / self.max_order as f64;
        10.0 * mean_over_orders
    }
}

/// Score every instance of a corpus. `references[0]` of each instance is its
/// ground truth and feeds the idf table.
pub fn cider(
    corpus: &[(String, Vec<String>)],
    tokenizer: &TokenizerConfig,
    params: &MetricParams,
) -> Result<Vec<MetricScore>> {
    for (idx, (_, refs)) in corpus.iter().enumerate() {
        if refs.is_empty() {
            return Err(Error::data(format!(
                "cider corpus instance {idx} has an empty reference list"
            )));
        }
    }
    let ground_truths: Vec<&str> = corpus.iter().map(|(_, refs)| refs[0].as_str()).collect();
    let scorer = CiderScorer::fit(&ground_truths, tokenizer, params)?;
    Ok(corpus
        .iter()
        .map(|(hyp, refs)| {
            let ref_slices: Vec<&str> = refs.iter().map(String::as_str).collect();
            MetricScore {
                metric_id: MetricId::Cider,
                value: scorer.score(hyp, &ref_slices),
                per_reference: None,
                aggregation_used: if refs.len() == 1 {
                    Aggregation::Single
                } else {
                    Aggregation::Builtin
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_pair() -> Vec<(String, Vec<String>)> {
        vec![
            (
                "the small cat sat on the mat".to_string(),
                vec!["the small cat sat on the mat".to_string()],
            ),
            (
                "dogs bark loudly near green parks".to_string(),
                vec!["dogs bark loudly near green parks".to_string()],
            ),
        ]
    }

    #[test]
    fn identity_with_disjoint_corpus_scores_ten() {
        let scores = cider(
            &corpus_pair(),
            &TokenizerConfig::default(),
            &MetricParams::default(),
        )
        .unwrap();
        for s in &scores {
            assert!((s.value - 10.0).abs() < 1e-9, "got {}", s.value);
        }
    }

    #[test]
    fn no_overlap_scores_zero() {
        let mut corpus = corpus_pair();
        corpus[0].0 = "zebras gallop across dusty plains".to_string();
        let scores = cider(
            &corpus,
            &TokenizerConfig::default(),
            &MetricParams::default(),
        )
        .unwrap();
        assert_eq!(scores[0].value, 0.0);
    }

    #[test]
    fn idf_invariant_under_corpus_doubling() {
        let corpus = corpus_pair();
        let mut doubled = corpus.clone();
        doubled.extend(corpus.clone());
        let tok = TokenizerConfig::default();
        let params = MetricParams::default();
        let base = cider(&corpus, &tok, &params).unwrap();
        let twice = cider(&doubled, &tok, &params).unwrap();
        for (a, b) in base.iter().zip(twice.iter()) {
            assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn corpus_of_one_is_rejected() {
        let corpus = vec![("a b".to_string(), vec!["a b".to_string()])];
        assert!(cider(&corpus, &TokenizerConfig::default(), &MetricParams::default()).is_err());
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let mut corpus = corpus_pair();
        corpus[0].0 = String::new();
        let scores = cider(
            &corpus,
            &TokenizerConfig::default(),
            &MetricParams::default(),
        )
        .unwrap();
        assert_eq!(scores[0].value, 0.0);
    }

    #[test]
    fn length_gap_is_penalized() {
        let tok = TokenizerConfig::default();
        let params = MetricParams::default();
        let gts = ["the cat sat on the mat", "dogs bark loudly near parks"];
        let scorer = CiderScorer::fit(&gts, &tok, &params).unwrap();
        let close = scorer.score("the cat sat on the mat", &["the cat sat on the mat"]);
        let padded = scorer.score(
            "the cat sat on the mat the cat sat on the mat",
            &["the cat sat on the mat"],
        );
        assert!(padded < close);
    }
}
