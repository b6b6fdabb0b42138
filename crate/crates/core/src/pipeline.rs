//! End-to-end orchestration: ingest, diversify, score, meta-evaluate, plus
//! the reference-count sweep and report rendering.
//!
//! Given a warm generation cache a run is fully deterministic: score dumps,
//! reports and the manifest digests are byte-identical across reruns.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{score_with_refset, Aggregation};
use crate::corpus::{load_benchmark, Benchmark, BenchmarkFormat, Task};
use crate::diversifier::{
    generate_diversified, CompletionProvider, GenerationCache, GenerationParams, HttpProvider,
    PromptSet, ProviderConfig,
};
use crate::metaeval::{correlation_suite, CorrelationReport, EvalLevel, SegmentGrouping};
use crate::metrics::{
    write_score_records, MetricConfig, MetricId, ScoreRecord, Scorer,
};
use crate::{Error, Result};

/// Configuration of one pipeline run; parsed from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub benchmark: PathBuf,
    pub prompt_set: PromptSet,
    pub n_references: u32,
    pub metrics: Vec<String>,
    pub aggregation: Aggregation,
    pub provider_config: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Generation cache path; defaults to `<output_dir>/generations.jsonl`.
    pub cache: Option<PathBuf>,
    pub offline: bool,
    /// Worker threads for scoring; 0 uses the process default.
    pub jobs: usize,
    pub drop_filtered: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            benchmark: PathBuf::new(),
            prompt_set: PromptSet::Diverse,
            n_references: 0,
            metrics: vec!["bleu".to_string()],
            aggregation: Aggregation::Max,
            provider_config: None,
            output_dir: PathBuf::from("divref-out"),
            seed: 0,
            cache: None,
            offline: false,
            jobs: 0,
            drop_filtered: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = toml::from_str(&content)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_references > 100 {
            return Err(Error::config(format!(
                "n_references must lie in 0..=100, got {}",
                self.n_references
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::config("metrics list must be non-empty"));
        }
        for metric in &self.metrics {
            metric.parse::<MetricId>()?;
        }
        Ok(())
    }

    pub fn metric_ids(&self) -> Result<Vec<MetricId>> {
        self.metrics.iter().map(|m| m.parse()).collect()
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache
            .clone()
            .unwrap_or_else(|| self.output_dir.join("generations.jsonl"))
    }
}

/// Provider stand-in for offline runs; any request is an error, so a cache
/// miss surfaces as "insufficient cached generations".
pub struct OfflineProvider;

impl CompletionProvider for OfflineProvider {
    fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<String> {
        Err(Error::provider(
            "offline mode: generation not in cache and network is forbidden",
        ))
    }
}

/// Build scorers (with CIDEr fitted on the benchmark ground truths).
pub fn build_scorers(benchmark: &Benchmark, metric_ids: &[MetricId]) -> Result<Vec<Scorer>> {
    let ground_truths: Vec<&str> = benchmark
        .reference_sets
        .iter()
        .map(|r| r.ground_truth.as_str())
        .collect();
    metric_ids
        .iter()
        .map(|&id| {
            let mut scorer = Scorer::new(MetricConfig::new(id), Default::default())?;
            if id == MetricId::Cider {
                scorer.fit_cider(&ground_truths)?;
            }
            Ok(scorer)
        })
        .collect()
}

fn run_in_pool<T: Send>(jobs: usize, op: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        Ok(op())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::config(format!("cannot build a {jobs}-thread pool: {e}")))?;
        Ok(pool.install(op))
    }
}

/// Score every (metric, system, segment) triple of the benchmark. Output is
/// sorted by (metric, system, segment) regardless of thread schedule.
pub fn score_benchmark(
    benchmark: &Benchmark,
    scorers: &[Scorer],
    aggregation: Aggregation,
    jobs: usize,
    drop_filtered: bool,
) -> Result<Vec<ScoreRecord>> {
    let refsets: std::collections::HashMap<&str, &crate::corpus::ReferenceSet> = benchmark
        .reference_sets
        .iter()
        .map(|r| (r.segment_id.as_str(), r))
        .collect();
    let mut records = run_in_pool(jobs, || {
        scorers
            .par_iter()
            .map(|scorer| {
                benchmark
                    .system_outputs
                    .par_iter()
                    .map(|output| {
                        let refset = refsets.get(output.segment_id.as_str()).ok_or_else(|| {
                            Error::data(format!(
                                "no reference set for segment '{}'",
                                output.segment_id
                            ))
                        })?;
                        let score = score_with_refset(
                            scorer,
                            &output.hypothesis,
                            refset,
                            aggregation,
                            drop_filtered,
                        )?;
                        Ok(ScoreRecord::from_score(
                            &output.system_id,
                            &output.segment_id,
                            &score,
                        ))
                    })
                    .collect::<Result<Vec<ScoreRecord>>>()
            })
            .collect::<Result<Vec<Vec<ScoreRecord>>>>()
    })??;
    let mut flattened: Vec<ScoreRecord> = records.drain(..).flatten().collect();
    flattened.sort_by(|a, b| {
        (&a.metric, &a.system, &a.segment).cmp(&(&b.metric, &b.system, &b.segment))
    });
    Ok(flattened)
}

/// Natural meta-evaluation levels of a task.
pub fn levels_for_task(task: Task) -> &'static [EvalLevel] {
    match task {
        Task::Translation => &[EvalLevel::Segment, EvalLevel::System],
        Task::Summarization => &[EvalLevel::Sample],
        Task::Caption => &[EvalLevel::Preference],
    }
}

pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub benchmark: Benchmark,
    pub score_records: Vec<ScoreRecord>,
    pub reports: Vec<CorrelationReport>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a RunConfig,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// Run ingest -> diversify -> score -> metaeval, writing score dumps,
/// reports (line-delimited and a plain-text table) and a manifest of
/// configuration plus content digests. Stage failures name the stage;
/// partial outputs stay on disk.
pub fn run_pipeline(
    config: &RunConfig,
    provider: Option<&dyn CompletionProvider>,
) -> Result<RunArtifacts> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Error::io(&config.output_dir, e))?;

    // ingest
    let mut benchmark = load_benchmark(&config.benchmark, BenchmarkFormat::Native)
        .map_err(|e| e.in_stage("ingest"))?;
    let mut inputs = BTreeMap::new();
    inputs.insert(
        config.benchmark.display().to_string(),
        sha256_file(&config.benchmark).map_err(|e| e.in_stage("ingest"))?,
    );

    // diversify (cache-backed)
    if config.n_references > 0 {
        let cache_path = config.cache_path();
        let cache = GenerationCache::open(&cache_path).map_err(|e| e.in_stage("diversify"))?;
        let (params, http_provider);
        let provider_ref: &dyn CompletionProvider = match (provider, &config.provider_config) {
            (Some(p), _) => {
                params = GenerationParams::default();
                p
            }
            (None, Some(path)) if !config.offline => {
                let provider_config =
                    ProviderConfig::from_file(path).map_err(|e| e.in_stage("diversify"))?;
                params = provider_config.generation_params();
                http_provider =
                    HttpProvider::new(provider_config).map_err(|e| e.in_stage("diversify"))?;
                &http_provider
            }
            _ => {
                params = GenerationParams::default();
                &OfflineProvider
            }
        };
        let records = generate_diversified(
            &benchmark,
            config.prompt_set,
            config.n_references,
            &params,
            provider_ref,
            &cache,
            config.jobs.max(1),
        )
        .map_err(|e| e.in_stage("diversify"))?;
        benchmark = benchmark
            .merge_diversified(&records)
            .map_err(|e| e.in_stage("diversify"))?;
        if cache_path.exists() {
            inputs.insert(
                cache_path.display().to_string(),
                sha256_file(&cache_path).map_err(|e| e.in_stage("diversify"))?,
            );
        }
    }

    // score
    let metric_ids = config.metric_ids()?;
    let scorers = build_scorers(&benchmark, &metric_ids).map_err(|e| e.in_stage("score"))?;
    let aggregation = if config.n_references == 0 && config.aggregation != Aggregation::Builtin {
        Aggregation::Single
    } else {
        config.aggregation
    };
    let score_records = score_benchmark(
        &benchmark,
        &scorers,
        aggregation,
        config.jobs,
        config.drop_filtered,
    )
    .map_err(|e| e.in_stage("score"))?;
    let scores_path = config.output_dir.join("scores.jsonl");
    write_score_records(&scores_path, &score_records).map_err(|e| e.in_stage("score"))?;

    // metaeval
    let mut reports = Vec::new();
    for &level in levels_for_task(benchmark.task) {
        reports.extend(
            correlation_suite(&benchmark, &score_records, level, SegmentGrouping::Pooled)
                .map_err(|e| e.in_stage("metaeval"))?,
        );
    }
    let reports_path = config.output_dir.join("reports.jsonl");
    write_reports(&reports_path, &reports).map_err(|e| e.in_stage("metaeval"))?;
    let table_path = config.output_dir.join("report.txt");
    let label = if config.n_references == 0 {
        "Single-Ref"
    } else {
        "Div-Ref"
    };
    std::fs::write(&table_path, render_report_table(&[(label, &reports)]))
        .map_err(|e| Error::io(&table_path, e).in_stage("metaeval"))?;

    // manifest
    let mut outputs = BTreeMap::new();
    for path in [&scores_path, &reports_path, &table_path] {
        outputs.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            sha256_file(path)?,
        );
    }
    let manifest = Manifest {
        config,
        inputs,
        outputs,
    };
    let manifest_path = config.output_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(|e| Error::io(&manifest_path, e))?;

    Ok(RunArtifacts {
        output_dir: config.output_dir.clone(),
        benchmark,
        score_records,
        reports,
    })
}

pub fn write_reports(path: impl AsRef<Path>, reports: &[CorrelationReport]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for report in reports {
        out.push_str(&serde_json::to_string(report).expect("reports serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<CorrelationReport>> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reports = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(reports)
}

/// Plain-text table, one block per (setting, statistic), metrics as columns
/// and one row per labeled report set (e.g. Single-Ref vs Div-Ref).
pub fn render_report_table(rows: &[(&str, &[CorrelationReport])]) -> String {
    use std::collections::BTreeSet;
    let mut blocks: BTreeSet<(String, String)> = BTreeSet::new();
    let mut metrics: BTreeSet<String> = BTreeSet::new();
    for (_, reports) in rows {
        for report in *reports {
            blocks.insert((report.setting.clone(), report.statistic.to_string()));
            metrics.insert(report.metric_id.clone());
        }
    }
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .max()
        .unwrap_or(10)
        .max(10);
    let mut out = String::new();
    for (setting, statistic) in blocks {
        out.push_str(&format!("setting={setting} statistic={statistic}\n"));
        out.push_str(&format!("{:label_width$}", ""));
        for metric in &metrics {
            out.push_str(&format!(" {metric:>10}"));
        }
        out.push('\n');
        for (label, reports) in rows {
            out.push_str(&format!("{label:label_width$}"));
            for metric in &metrics {
                let cell = reports
                    .iter()
                    .find(|r| {
                        r.setting == setting
                            && r.statistic.to_string() == statistic
                            && &r.metric_id == metric
                    })
                    .map(|r| format!("{:.4}", r.value))
                    .unwrap_or_else(|| "-".to_string());
                out.push_str(&format!(" {cell:>10}"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// One sweep measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u32,
    pub metric: String,
    pub statistic: String,
    pub value: f64,
}

/// Reference-count sweep: for each n, keep the first n diversified entries
/// per segment (provenance order, so cached generations are reused across n
/// values), score with max aggregation and report the mean segment score
/// plus every correlation statistic.
pub fn sweep_reference_count(config: &RunConfig, n_values: &[u32]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    let base = load_benchmark(&config.benchmark, BenchmarkFormat::Native)
        .map_err(|e| e.in_stage("ingest"))?;

    let merged = if max_n > 0 {
        let cache =
            GenerationCache::open(config.cache_path()).map_err(|e| e.in_stage("diversify"))?;
        let records = generate_diversified(
            &base,
            config.prompt_set,
            max_n,
            &GenerationParams::default(),
            &OfflineProvider,
            &cache,
            1,
        )
        .map_err(|e| e.in_stage("diversify"))?;
        base.clone().merge_diversified(&records)?
    } else {
        base.clone()
    };

    let metric_ids = config.metric_ids()?;
    let scorers = build_scorers(&merged, &metric_ids)?;
    let mut rows = Vec::new();
    for &n in n_values {
        let mut benchmark_n = base.clone();
        benchmark_n.reference_sets = merged
            .reference_sets
            .iter()
            .map(|r| r.truncated(n as usize))
            .collect();
        let records = score_benchmark(
            &benchmark_n,
            &scorers,
            Aggregation::Max,
            config.jobs,
            config.drop_filtered,
        )?;
        for scorer in &scorers {
            let metric = scorer.metric_id().to_string();
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.metric == metric)
                .map(|r| r.value)
                .collect();
            if !values.is_empty() {
                rows.push(SweepRow {
                    n,
                    metric: metric.clone(),
                    statistic: "mean_segment_score".to_string(),
                    value: values.iter().sum::<f64>() / values.len() as f64,
                });
            }
        }
        for &level in levels_for_task(base.task) {
            for report in
                correlation_suite(&benchmark_n, &records, level, SegmentGrouping::Pooled)?
            {
                rows.push(SweepRow {
                    n,
                    metric: report.metric_id.clone(),
                    statistic: format!("{}:{}", report.statistic, report.setting),
                    value: report.value,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_rows(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("sweep rows serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
