//! N-gram counting shared by BLEU, ChrF, ROUGE and CIDEr.

use std::collections::HashMap;

/// Multiset of order-`order` n-grams of a token (or char) sequence, keyed by
/// slices borrowed from the underlying sequence.
#[derive(Debug, Clone)]
pub struct NGramProfile<'a, T> {
    pub order: usize,
    pub counts: HashMap<&'a [T], u32>,
    total: u32,
}

impl<'a, T: Eq + std::hash::Hash> NGramProfile<'a, T> {
    /// Count all order-`order` n-grams of `items`. Total count is
    /// `max(0, len - order + 1)`.
    pub fn build(items: &'a [T], order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be >= 1");
        let mut counts = HashMap::new();
        let mut total = 0u32;
        if items.len() >= order {
            for window in items.windows(order) {
                *counts.entry(window).or_insert(0) += 1;
                total += 1;
            }
        }
        NGramProfile {
            order,
            counts,
            total,
        }
    }

    /// Total number of n-grams (with multiplicity).
    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn count(&self, gram: &[T]) -> u32 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Sum over this profile's n-grams of `min(own count, other count)`.
    pub fn clipped_overlap(&self, other: &NGramProfile<'a, T>) -> u32 {
        self.counts
            .iter()
            .map(|(gram, &cnt)| cnt.min(other.count(gram)))
            .sum()
    }

    /// Clip each count by the maximum count the same n-gram attains in any
    /// profile of `others`, then sum. Multi-reference BLEU counting.
    pub fn clipped_overlap_max(&self, others: &[NGramProfile<'a, T>]) -> u32 {
        self.counts
            .iter()
            .map(|(gram, &cnt)| {
                let best = others.iter().map(|o| o.count(gram)).max().unwrap_or(0);
                cnt.min(best)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn total_matches_window_count() {
        let t = toks("a b c d");
        for order in 1..=5 {
            let p = NGramProfile::build(&t, order);
            assert_eq!(p.total() as usize, t.len().saturating_sub(order - 1));
        }
    }

    #[test]
    fn counts_with_multiplicity() {
        let t = toks("the the the the");
        let p = NGramProfile::build(&t, 1);
        assert_eq!(p.count(&[t[0].clone()]), 4);
        let p2 = NGramProfile::build(&t, 2);
        assert_eq!(p2.total(), 3);
    }

    #[test]
    fn clipped_overlap_clips() {
        let h = toks("the the the the");
        let r = toks("the cat");
        let hp = NGramProfile::build(&h, 1);
        let rp = NGramProfile::build(&r, 1);
        assert_eq!(hp.clipped_overlap(&rp), 1);
    }

    #[test]
    fn clipped_overlap_max_takes_best_reference() {
        let h = toks("a a b");
        let r1 = toks("a c");
        let r2 = toks("a a");
        let hp = NGramProfile::build(&h, 1);
        let refs = vec![NGramProfile::build(&r1, 1), NGramProfile::build(&r2, 1)];
        // "a" clipped to max(1, 2) = 2, "b" to 0
        assert_eq!(hp.clipped_overlap_max(&refs), 2);
    }
}
