//! Append-only generation cache: line-delimited records keyed by
//! (segment, prompt, sample index, model, params digest).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::DiversifiedRecord;
use crate::{Error, Result};

pub struct GenerationCache {
    path: PathBuf,
    inner: Mutex<CacheInner>,
}

struct CacheInner {
    records: HashMap<String, DiversifiedRecord>,
    file: File,
}

impl GenerationCache {
    /// Open (or create) a cache file and load its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut records = HashMap::new();
        if path.exists() {
            let content = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (idx, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: DiversifiedRecord =
                    serde_json::from_str(line).map_err(|e| Error::Parse {
                        path: path.clone(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                records.insert(record.cache_key(), record);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(GenerationCache {
            path,
            inner: Mutex::new(CacheInner { records, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<DiversifiedRecord> {
        self.inner.lock().unwrap().records.get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner.lock().unwrap().records.contains_key(key)
    }

    /// Persist a record (write-through, serialized) unless its key is
    /// already cached.
    pub fn append(&self, record: &DiversifiedRecord) -> Result<()> {
        let mut inner = self.inner.lock().unwrap();
        let key = record.cache_key();
        if inner.records.contains_key(&key) {
            return Ok(());
        }
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        inner
            .file
            .write_all(line.as_bytes())
            .and_then(|()| inner.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        inner.records.insert(key, record.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diversifier::PromptId;

    fn record(idx: u32) -> DiversifiedRecord {
        DiversifiedRecord {
            segment_id: "s1".into(),
            prompt_id: PromptId::P1,
            sample_index: idx,
            model_id: "m".into(),
            text: format!("text {idx}"),
            created_at: 7,
            params_digest: "d".into(),
            filtered: None,
        }
    }

    #[test]
    fn roundtrips_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = GenerationCache::open(&path).unwrap();
            cache.append(&record(0)).unwrap();
            cache.append(&record(1)).unwrap();
        }
        let cache = GenerationCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        let hit = cache.get(&record(0).cache_key()).unwrap();
        assert_eq!(hit, record(0));
    }

    #[test]
    fn duplicate_appends_do_not_grow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let cache = GenerationCache::open(&path).unwrap();
        cache.append(&record(0)).unwrap();
        let size_once = std::fs::metadata(&path).unwrap().len();
        cache.append(&record(0)).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), size_once);
    }
}
