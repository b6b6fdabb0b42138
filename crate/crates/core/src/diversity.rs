//! Semantic diversity of a set of rephrasings: mean pairwise embedding
//! cosine distance per instance, averaged over instances.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diversifier::{DiversifiedRecord, EmbeddingProvider};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// 1 - cos(a, b), in [0, 2].
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::data(format!(
            "embedding dimension mismatch: {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    if a.model_id != b.model_id {
        return Err(Error::data(format!(
            "embeddings from different models: '{}' vs '{}'",
            a.model_id, b.model_id
        )));
    }
    let (norm_a, norm_b) = (a.norm(), b.norm());
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::data("cosine distance of a zero-norm vector"));
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x * y)
        .sum();
    Ok((1.0 - dot / (norm_a * norm_b)).clamp(0.0, 2.0))
}

/// Mean cosine distance over all unordered pairs of one instance's
/// rephrasings; needs at least two.
pub fn instance_diversity(rephrasings: &[EmbeddingVector]) -> Result<f64> {
    if rephrasings.len() < 2 {
        return Err(Error::data(format!(
            "instance diversity needs >= 2 rephrasings, got {}",
            rephrasings.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..rephrasings.len() {
        for j in (i + 1)..rephrasings.len() {
            sum += cosine_distance(&rephrasings[i], &rephrasings[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Mean of instance diversities.
pub fn corpus_diversity(instances: &[Vec<EmbeddingVector>]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::data("corpus diversity of zero instances"));
    }
    let mut sum = 0.0;
    for instance in instances {
        sum += instance_diversity(instance)?;
    }
    Ok(sum / instances.len() as f64)
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingCacheLine {
    text_digest: String,
    model_id: String,
    values: Vec<f64>,
}

/// Line-delimited embedding cache keyed by (model, text digest); lets the
/// diversity scorer run offline on precomputed vectors.
pub struct EmbeddingCache {
    entries: HashMap<(String, String), Vec<f64>>,
}

impl EmbeddingCache {
    pub fn empty() -> Self {
        EmbeddingCache {
            entries: HashMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: EmbeddingCacheLine =
                serde_json::from_str(line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entries.insert((parsed.model_id, parsed.text_digest), parsed.values);
        }
        Ok(EmbeddingCache { entries })
    }

    pub fn get(&self, model_id: &str, text: &str) -> Option<EmbeddingVector> {
        self.entries
            .get(&(model_id.to_string(), text_digest(text)))
            .map(|values| EmbeddingVector {
                values: values.clone(),
                model_id: model_id.to_string(),
            })
    }

    pub fn insert(&mut self, model_id: &str, text: &str, values: Vec<f64>) {
        self.entries
            .insert((model_id.to_string(), text_digest(text)), values);
    }

    pub fn append_to_file(
        path: impl AsRef<Path>,
        model_id: &str,
        text: &str,
        values: &[f64],
    ) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let line = serde_json::to_string(&EmbeddingCacheLine {
            text_digest: text_digest(text),
            model_id: model_id.to_string(),
            values: values.to_vec(),
        })
        .expect("cache lines serialize");
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))
    }
}

/// Embeddings for `texts`, from the cache when possible, otherwise from the
/// provider (appending fetched vectors to `cache_path` when given). Without
/// a provider, every text must already be cached.
pub fn resolve_embeddings(
    texts: &[String],
    model_id: &str,
    cache: &mut EmbeddingCache,
    cache_path: Option<&Path>,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<Vec<EmbeddingVector>> {
    let missing: Vec<String> = {
        let mut seen = std::collections::HashSet::new();
        texts
            .iter()
            .filter(|t| cache.get(model_id, t).is_none() && seen.insert(t.as_str()))
            .cloned()
            .collect()
    };
    if !missing.is_empty() {
        let Some(provider) = provider else {
            return Err(Error::provider(format!(
                "offline and {} text(s) missing from the embedding cache (first digest: {})",
                missing.len(),
                text_digest(&missing[0])
            )));
        };
        let fetched = provider.embed(&missing)?;
        for (text, values) in missing.iter().zip(fetched) {
            if let Some(path) = cache_path {
                EmbeddingCache::append_to_file(path, model_id, text, &values)?;
            }
            cache.insert(model_id, text, values);
        }
    }
    texts
        .iter()
        .map(|t| {
            cache
                .get(model_id, t)
                .ok_or_else(|| Error::provider("embedding still missing after fetch".to_string()))
        })
        .collect()
}

/// Per-segment instance diversity of diversified records plus the corpus
/// mean. `ground_truths` maps segment id to its reference when the ground
/// truth participates in the pairs.
pub fn diversity_of_records(
    records: &[DiversifiedRecord],
    ground_truths: Option<&HashMap<String, String>>,
    model_id: &str,
    cache: &mut EmbeddingCache,
    cache_path: Option<&Path>,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<(Vec<(String, f64)>, f64)> {
    let mut by_segment: HashMap<&str, Vec<&str>> = HashMap::new();
    for record in records {
        by_segment
            .entry(record.segment_id.as_str())
            .or_default()
            .push(record.text.as_str());
    }
    let mut segment_ids: Vec<&str> = by_segment.keys().copied().collect();
    segment_ids.sort_unstable();

    let mut per_instance = Vec::with_capacity(segment_ids.len());
    let mut instances = Vec::with_capacity(segment_ids.len());
    for segment_id in segment_ids {
        let mut texts: Vec<String> = Vec::new();
        if let Some(gts) = ground_truths {
            let gt = gts.get(segment_id).ok_or_else(|| {
                Error::data(format!("no ground truth for segment '{segment_id}'"))
            })?;
            texts.push(gt.clone());
        }
        texts.extend(by_segment[segment_id].iter().map(|t| t.to_string()));
        let vectors = resolve_embeddings(&texts, model_id, cache, cache_path, provider)?;
        let value = instance_diversity(&vectors)?;
        per_instance.push((segment_id.to_string(), value));
        instances.push(vectors);
    }
    let corpus = corpus_diversity(&instances)?;
    Ok((per_instance, corpus))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector {
            values: values.to_vec(),
            model_id: "test".into(),
        }
    }

    #[test]
    fn identical_vectors_have_zero_distance() {
        let v = vector(&[0.3, 0.4]);
        assert!((cosine_distance(&v, &v).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_and_antipodal() {
        let a = vector(&[1.0, 0.0]);
        let b = vector(&[0.0, 1.0]);
        let c = vector(&[-1.0, 0.0]);
        assert!((cosine_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_distance(&a, &c).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let a = vector(&[0.2, 0.7, -0.1]);
        let mut scaled = a.clone();
        for x in &mut scaled.values {
            *x *= 3.5;
        }
        let b = vector(&[0.9, -0.3, 0.4]);
        let d1 = cosine_distance(&a, &b).unwrap();
        let d2 = cosine_distance(&scaled, &b).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_zero_norm_errors() {
        let a = vector(&[1.0, 0.0]);
        let b = vector(&[1.0, 0.0, 0.0]);
        assert!(cosine_distance(&a, &b).is_err());
        let zero = vector(&[0.0, 0.0]);
        assert!(cosine_distance(&a, &zero).is_err());
    }

    #[test]
    fn instance_diversity_means_pairs() {
        // three unit vectors with known pairwise distances
        let a = vector(&[1.0, 0.0]);
        let b = vector(&[0.0, 1.0]);
        let c = vector(&[-1.0, 0.0]);
        // d(a,b) = 1, d(a,c) = 2, d(b,c) = 1 -> mean 4/3
        let d = instance_diversity(&[a, b, c]).unwrap();
        assert!((d - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_identical_embeddings_have_zero_diversity() {
        let v = vector(&[0.5, 0.5]);
        let d = instance_diversity(&[v.clone(), v.clone(), v]).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn corpus_diversity_is_the_mean() {
        let a = vector(&[1.0, 0.0]);
        let b = vector(&[0.0, 1.0]);
        let inst1 = vec![a.clone(), a.clone()]; // diversity 0
        let inst2 = vec![a, b]; // diversity 1
        let d = corpus_diversity(&[inst1, inst2]).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn undersized_instance_is_an_error() {
        assert!(instance_diversity(&[vector(&[1.0])]).is_err());
        assert!(corpus_diversity(&[vec![vector(&[1.0])]]).is_err());
    }

    #[test]
    fn offline_resolution_requires_cache_hits() {
        let mut cache = EmbeddingCache::empty();
        cache.insert("m", "hello", vec![1.0, 0.0]);
        let ok = resolve_embeddings(&["hello".into()], "m", &mut cache, None, None).unwrap();
        assert_eq!(ok.len(), 1);
        let err = resolve_embeddings(&["missing".into()], "m", &mut cache, None, None);
        assert!(err.is_err());
    }
}
