//! METEOR with exact and Porter-stem matcher stages.
//!
//! Matching maximizes the exact-stage cardinality first (per word, the
//! matched count is min of the two occurrence counts), then the stem-stage
//! cardinality on the leftovers. Among all alignments realizing those
//! cardinalities, the one with the fewest chunks is chosen; a chunk is a run
//! of matches contiguous in both the hypothesis and the reference.
//!
//! Score = F_mean * (1 - penalty), with F_mean = PR / (alpha*P + (1-alpha)*R)
//! and penalty = gamma * (chunks / matches)^beta. Several references are
//! handled by taking the maximum over per-reference scores.

use std::collections::HashMap;

use super::porter::stem;
use super::{MetricId, MetricParams, MetricScore};
use crate::aggregation::Aggregation;
use crate::text::{tokenize, TokenizerConfig};
use crate::{Error, Result};

/// Match count and minimum chunk count of the optimal alignment.
pub fn alignment_stats(hyp: &[String], reference: &[String]) -> (usize, usize) {
    if hyp.is_empty() || reference.is_empty() {
        return (0, 0);
    }
    let problem = AlignmentProblem::new(hyp, reference);
    let matches = problem.total_matches();
    if matches == 0 {
        return (0, 0);
    }
    (matches, problem.min_chunks())
}

/// METEOR for one token-sequence pair.
pub fn meteor_tokens(
    hyp: &[String],
    reference: &[String],
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> f64 {
    let (matches, chunks) = alignment_stats(hyp, reference);
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let precision = m / hyp.len() as f64;
    let recall = m / reference.len() as f64;
    let f_mean = precision * recall / (alpha * precision + (1.0 - alpha) * recall);
    let penalty = gamma * (chunks as f64 / m).powf(beta);
    f_mean * (1.0 - penalty)
}

pub(super) fn meteor_texts(
    hypothesis: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
    params: &MetricParams,
) -> (f64, Vec<f64>) {
    let hyp = tokenize(hypothesis, tokenizer);
    let per_reference: Vec<f64> = references
        .iter()
        .map(|r| {
            meteor_tokens(
                &hyp,
                &tokenize(r, tokenizer),
                params.meteor_alpha,
                params.meteor_beta,
                params.meteor_gamma,
            )
        })
        .collect();
    (per_reference.iter().copied().fold(0.0, f64::max), per_reference)
}

pub fn meteor(
    hypothesis: &str,
    references: &[&str],
    tokenizer: &TokenizerConfig,
    params: &MetricParams,
) -> Result<MetricScore> {
    if references.is_empty() {
        return Err(Error::data("reference list must be non-empty"));
    }
    let (value, per_reference) = meteor_texts(hypothesis, references, tokenizer, params);
    let aggregation_used = if references.len() == 1 {
        Aggregation::Single
    } else {
        Aggregation::Max
    };
    Ok(MetricScore {
        metric_id: MetricId::Meteor,
        value,
        per_reference: Some(per_reference),
        aggregation_used,
    })
}

/// Search budget; beyond it the best alignment found so far is used.
const NODE_BUDGET: u64 = 500_000;

struct AlignmentProblem {
    /// Word id of every hypothesis / reference position.
    hyp_words: Vec<usize>,
    ref_words: Vec<usize>,
    /// Stem id per word id.
    word_stem: Vec<usize>,
    words_by_stem: Vec<Vec<usize>>,
    /// Exact-match quota per word id and stem-match quota per stem id.
    need_exact: Vec<i64>,
    need_stem: Vec<i64>,
    ref_positions_by_word: Vec<Vec<usize>>,
    ref_positions_by_stem: Vec<Vec<usize>>,
}

impl AlignmentProblem {
    fn new(hyp: &[String], reference: &[String]) -> Self {
        let mut word_ids: HashMap<String, usize> = HashMap::new();
        let mut stem_ids: HashMap<String, usize> = HashMap::new();
        let mut word_stem: Vec<usize> = Vec::new();

        fn intern(
            token: &str,
            word_ids: &mut HashMap<String, usize>,
            stem_ids: &mut HashMap<String, usize>,
            word_stem: &mut Vec<usize>,
        ) -> usize {
            if let Some(&id) = word_ids.get(token) {
                return id;
            }
            let id = word_stem.len();
            word_ids.insert(token.to_string(), id);
            let next_stem_id = stem_ids.len();
            let sid = *stem_ids.entry(stem(token)).or_insert(next_stem_id);
            word_stem.push(sid);
            id
        }

        let hyp_words: Vec<usize> = hyp
            .iter()
            .map(|t| intern(t, &mut word_ids, &mut stem_ids, &mut word_stem))
            .collect();
        let ref_words: Vec<usize> = reference
            .iter()
            .map(|t| intern(t, &mut word_ids, &mut stem_ids, &mut word_stem))
            .collect();

        let n_words = word_stem.len();
        let n_stems = stem_ids.len();

        let mut hyp_count = vec![0i64; n_words];
        let mut ref_count = vec![0i64; n_words];
        for &w in &hyp_words {
            hyp_count[w] += 1;
        }
        for &w in &ref_words {
            ref_count[w] += 1;
        }

        let mut words_by_stem = vec![Vec::new(); n_stems];
        for (w, &s) in word_stem.iter().enumerate() {
            words_by_stem[s].push(w);
        }

        let mut need_exact = vec![0i64; n_words];
        let mut leftover_h = vec![0i64; n_stems];
        let mut leftover_r = vec![0i64; n_stems];
        for w in 0..n_words {
            need_exact[w] = hyp_count[w].min(ref_count[w]);
            leftover_h[word_stem[w]] += hyp_count[w] - need_exact[w];
            leftover_r[word_stem[w]] += ref_count[w] - need_exact[w];
        }
        let need_stem: Vec<i64> = (0..n_stems)
            .map(|s| leftover_h[s].min(leftover_r[s]))
            .collect();

        let mut ref_positions_by_word = vec![Vec::new(); n_words];
        let mut ref_positions_by_stem = vec![Vec::new(); n_stems];
        for (j, &w) in ref_words.iter().enumerate() {
            ref_positions_by_word[w].push(j);
            ref_positions_by_stem[word_stem[w]].push(j);
        }

        AlignmentProblem {
            hyp_words,
            ref_words,
            word_stem,
            words_by_stem,
            need_exact,
            need_stem,
            ref_positions_by_word,
            ref_positions_by_stem,
        }
    }

    fn total_matches(&self) -> usize {
        (self.need_exact.iter().sum::<i64>() + self.need_stem.iter().sum::<i64>()) as usize
    }

    /// Greedy in-order alignment respecting the quotas; used as the initial
    /// upper bound for the search.
    fn greedy_pairs(&self) -> Vec<(usize, usize)> {
        let mut need_exact = self.need_exact.clone();
        let mut need_stem = self.need_stem.clone();
        let mut ref_used = vec![false; self.ref_words.len()];
        let mut hyp_matched = vec![false; self.hyp_words.len()];
        let mut pairs: Vec<(usize, usize)> = Vec::new();

        for (i, &w) in self.hyp_words.iter().enumerate() {
            if need_exact[w] > 0 {
                if let Some(&j) = self.ref_positions_by_word[w].iter().find(|&&j| !ref_used[j]) {
                    ref_used[j] = true;
                    need_exact[w] -= 1;
                    hyp_matched[i] = true;
                    pairs.push((i, j));
                }
            }
        }
        for (i, &w) in self.hyp_words.iter().enumerate() {
            if hyp_matched[i] {
                continue;
            }
            let s = self.word_stem[w];
            if need_stem[s] <= 0 {
                continue;
            }
            // after the exact stage every exact quota is consumed, so any
            // free position of a different word in the class is a leftover
            let found = self.ref_positions_by_stem[s]
                .iter()
                .find(|&&j| !ref_used[j] && self.ref_words[j] != w)
                .copied();
            if let Some(j) = found {
                ref_used[j] = true;
                need_stem[s] -= 1;
                pairs.push((i, j));
            }
        }
        pairs.sort_unstable();
        pairs
    }

    fn chunk_count(pairs: &[(usize, usize)]) -> usize {
        let mut chunks = 0;
        let mut prev: Option<(usize, usize)> = None;
        for &(i, j) in pairs {
            if prev != Some((i.wrapping_sub(1), j.wrapping_sub(1))) {
                chunks += 1;
            }
            prev = Some((i, j));
        }
        chunks
    }

    fn min_chunks(&self) -> usize {
        let greedy = self.greedy_pairs();
        debug_assert_eq!(greedy.len(), self.total_matches());
        let mut search = Search {
            problem: self,
            ref_used: vec![false; self.ref_words.len()],
            need_exact: self.need_exact.clone(),
            need_stem: self.need_stem.clone(),
            rem_hyp: {
                let mut rem = vec![0i64; self.need_exact.len()];
                for &w in &self.hyp_words {
                    rem[w] += 1;
                }
                rem
            },
            free_ref: {
                let mut free = vec![0i64; self.need_exact.len()];
                for &w in &self.ref_words {
                    free[w] += 1;
                }
                free
            },
            best: Self::chunk_count(&greedy),
            nodes: 0,
        };
        if search.best > 1 {
            search.dfs(0, None, 0);
        }
        search.best
    }
}

struct Search<'a> {
    problem: &'a AlignmentProblem,
    ref_used: Vec<bool>,
    need_exact: Vec<i64>,
    need_stem: Vec<i64>,
    /// Hypothesis occurrences per word at positions not yet processed.
    /// Invariant: rem_hyp[w] >= need_exact[w] on every explored branch.
    rem_hyp: Vec<i64>,
    /// Unconsumed reference occurrences per word.
    free_ref: Vec<i64>,
    best: usize,
    nodes: u64,
}

impl Search<'_> {
    fn stem_surplus_ok(&self, s: usize) -> bool {
        let surplus: i64 = self.problem.words_by_stem[s]
            .iter()
            .map(|&w| self.rem_hyp[w] - self.need_exact[w])
            .sum();
        surplus >= self.need_stem[s]
    }

    fn dfs(&mut self, i: usize, prev: Option<(usize, usize)>, chunks: usize) {
        if chunks >= self.best || self.nodes > NODE_BUDGET {
            return;
        }
        self.nodes += 1;
        let p = self.problem;
        if i == p.hyp_words.len() {
            // feasibility maintenance guarantees all quotas are consumed
            self.best = chunks;
            return;
        }
        let w = p.hyp_words[i];
        let s = p.word_stem[w];

        // diagonal continuation extends the current chunk for free
        let diagonal = prev.and_then(|(pi, pj)| {
            (pi + 1 == i && pj + 1 < p.ref_words.len() && !self.ref_used[pj + 1])
                .then_some(pj + 1)
        });

        let try_match = |search: &mut Self, j: usize, next_chunks: usize| {
            let rw = search.problem.ref_words[j];
            if rw == w {
                if search.need_exact[w] == 0 {
                    return;
                }
                search.need_exact[w] -= 1;
            } else {
                // stem-stage match: both sides must keep enough positions
                // for the remaining exact quotas
                if search.problem.word_stem[rw] != s
                    || search.need_stem[s] == 0
                    || search.free_ref[rw] - 1 < search.need_exact[rw]
                    || search.rem_hyp[w] - 1 < search.need_exact[w]
                {
                    return;
                }
                search.need_stem[s] -= 1;
            }
            search.ref_used[j] = true;
            search.free_ref[rw] -= 1;
            search.rem_hyp[w] -= 1;

            search.dfs(i + 1, Some((i, j)), next_chunks);

            search.rem_hyp[w] += 1;
            search.free_ref[rw] += 1;
            search.ref_used[j] = false;
            if rw == w {
                search.need_exact[w] += 1;
            } else {
                search.need_stem[s] += 1;
            }
        };

        if let Some(j) = diagonal {
            try_match(self, j, chunks);
        }
        for &j in &p.ref_positions_by_word[w] {
            if !self.ref_used[j] && Some(j) != diagonal {
                try_match(self, j, chunks + 1);
            }
        }
        if self.need_stem[s] > 0 {
            for &j in &p.ref_positions_by_stem[s] {
                if !self.ref_used[j] && Some(j) != diagonal && p.ref_words[j] != w {
                    try_match(self, j, chunks + 1);
                }
            }
        }

        // skip this hypothesis position if the quotas stay satisfiable
        self.rem_hyp[w] -= 1;
        if self.rem_hyp[w] >= self.need_exact[w] && self.stem_surplus_ok(s) {
            self.dfs(i + 1, None, chunks);
        }
        self.rem_hyp[w] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, &TokenizerConfig::default())
    }

    fn score(h: &str, r: &str) -> f64 {
        meteor_tokens(&toks(h), &toks(r), 0.9, 3.0, 0.5)
    }

    #[test]
    fn single_word_identity_scores_half() {
        // one match, one chunk: penalty = 0.5 * (1/1)^3 = 0.5, F_mean = 1
        assert!((score("cat", "cat") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn five_word_identity() {
        // penalty = 0.5 * (1/5)^3 = 0.004 -> score 0.996
        assert!((score("the cat sat on mat", "the cat sat on mat") - 0.996).abs() < 1e-12);
    }

    #[test]
    fn disjoint_texts_score_zero() {
        assert_eq!(score("aa bb", "cc dd"), 0.0);
    }

    #[test]
    fn empty_sides_score_zero() {
        assert_eq!(score("", "x"), 0.0);
        assert_eq!(score("x", ""), 0.0);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let (m, chunks) = alignment_stats(&toks("running fast"), &toks("runs quickly"));
        assert_eq!(m, 1); // running ~ runs via the stem stage
        assert_eq!(chunks, 1);
    }

    #[test]
    fn chunks_minimized_over_equal_words() {
        // trivial diagonal, 1 chunk
        let (m, chunks) = alignment_stats(&toks("a b a"), &toks("a b a"));
        assert_eq!((m, chunks), (3, 1));
        // crossing forced: 2 matches, 2 chunks
        let (m, chunks) = alignment_stats(&toks("a b"), &toks("b a"));
        assert_eq!((m, chunks), (2, 2));
    }

    #[test]
    fn repeated_words_pick_chunk_minimal_assignment() {
        // optimal pairing keeps the "the cat" / "the dog" blocks together
        let (m, chunks) = alignment_stats(&toks("the cat the dog"), &toks("the dog the cat"));
        assert_eq!(m, 4);
        assert_eq!(chunks, 2);
    }

    #[test]
    fn exact_stage_has_priority_over_stems() {
        // both tokens must exact-match even though crossing costs chunks
        let (m, chunks) = alignment_stats(&toks("run runs"), &toks("runs run"));
        assert_eq!(m, 2);
        assert_eq!(chunks, 2);
    }

    #[test]
    fn stem_match_cannot_starve_an_exact_quota() {
        // "run" must stay available for its exact partner; the stem quota is
        // fed by the leftover "runs"
        let (m, chunks) = alignment_stats(&toks("run runs"), &toks("running run"));
        assert_eq!(m, 2);
        assert_eq!(chunks, 2);
    }

    #[test]
    fn long_repetitive_inputs_terminate() {
        let h: Vec<String> = std::iter::repeat("a".to_string()).take(40).collect();
        let r: Vec<String> = std::iter::repeat("a".to_string()).take(35).collect();
        let (m, chunks) = alignment_stats(&h, &r);
        assert_eq!((m, chunks), (35, 1));
    }

    #[test]
    fn multi_reference_takes_max() {
        let s = meteor(
            "the cat",
            &["entirely different", "the cat"],
            &TokenizerConfig::default(),
            &MetricParams::default(),
        )
        .unwrap();
        let per = s.per_reference.clone().unwrap();
        assert_eq!(per.len(), 2);
        assert!((s.value - per[1]).abs() < 1e-12);
        assert!(per[1] > per[0]);
    }
}
