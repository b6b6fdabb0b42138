//! `divref`: ingest benchmarks, diversify references through an LLM
//! provider, score hypotheses with lexical metrics, import external scores,
//! measure rephrasing diversity, correlate with human judgments, sweep the
//! reference count and render reports.
//!
//! Exit codes: 0 success, 1 usage/configuration, 2 data, 3 provider.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use divref_core::aggregation::Aggregation;
use divref_core::corpus::{load_benchmark, write_benchmark, BenchmarkFormat};
use divref_core::diversifier::{
    self, generate_diversified, GenerationCache, HttpProvider, PromptSet, ProviderConfig,
};
use divref_core::diversity::{diversity_of_records, EmbeddingCache};
use divref_core::external::{aggregate_external, load_external_scores};
use divref_core::metaeval::{correlation_suite, EvalLevel, SegmentGrouping};
use divref_core::metrics::{read_score_records, write_score_records, MetricId};
use divref_core::pipeline::{
    self, build_scorers, read_reports, render_report_table, run_pipeline, score_benchmark,
    sweep_reference_count, write_reports, write_sweep_rows, OfflineProvider, RunConfig,
};
use divref_core::{Error, Result};

#[derive(Parser)]
#[command(name = "divref", version, about = "Multi-reference NLG evaluation toolkit")]
struct Cli {
    /// Run configuration (TOML); required by `run` and `sweep`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Forbid network access; providers are replaced by cache-only lookups.
    #[arg(long, global = true)]
    offline: bool,
    /// Worker threads (0 = default).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProviderArgs {
    /// Provider configuration file (key=value).
    #[arg(long)]
    provider: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a benchmark export into the native format.
    Ingest {
        #[arg(long)]
        format: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate diversified references for every segment.
    Diversify {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value = "diverse")]
        prompts: String,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        out: PathBuf,
        /// Generation cache (defaults to `<out>.cache.jsonl`).
        #[arg(long)]
        cache: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Judge diversified references against the ground truth and flag
    /// the ones that drift in meaning.
    Filter {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Score every system output against its reference set.
    Score {
        #[arg(long)]
        metric: String,
        #[arg(long, default_value = "max")]
        agg: String,
        #[arg(long)]
        benchmark: PathBuf,
        /// Diversified records merged into the benchmark before scoring.
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Exclude judge-flagged references from scoring.
        #[arg(long)]
        drop_filtered: bool,
    },
    /// Import per-reference scores computed outside the toolkit and
    /// aggregate them into standard score dumps.
    ScoresImport {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long, default_value = "max")]
        agg: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Semantic diversity of diversified references (mean pairwise
    /// embedding cosine distance).
    Diversity {
        #[arg(long)]
        refs: PathBuf,
        /// Precomputed embedding cache; required when offline.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Embedding model id for cache lookups without a provider.
        #[arg(long, default_value = "text-embedding-ada-002")]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Correlate score dumps with human judgments.
    Metaeval {
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        level: String,
        #[arg(long)]
        out: PathBuf,
        /// Segment-level tau per system, then averaged (instead of pooled).
        #[arg(long)]
        per_system: bool,
    },
    /// Reference-count sweep (uses --config).
    Sweep {
        /// Comma-separated reference counts, e.g. 0,1,2,5,10.
        #[arg(long)]
        n_values: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline: ingest, diversify, score, metaeval
    /// (uses --config).
    Run,
    /// Render a plain-text table from correlation reports.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Baseline reports rendered as the Single-Ref row.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_run_config(path: Option<&PathBuf>, offline: bool, jobs: usize) -> Result<RunConfig> {
    let path = path.ok_or_else(|| Error::config("this subcommand needs --config <path>"))?;
    let mut config = RunConfig::from_toml_file(path)?;
    if offline {
        config.offline = true;
    }
    if jobs > 0 {
        config.jobs = jobs;
    }
    Ok(config)
}

fn open_provider(args: &ProviderArgs, offline: bool) -> Result<(Option<HttpProvider>, ProviderConfig)> {
    let Some(path) = &args.provider else {
        return Ok((None, ProviderConfig::default()));
    };
    let config = ProviderConfig::from_file(path)?;
    if offline {
        return Ok((None, config));
    }
    Ok((Some(HttpProvider::new(config.clone())?), config))
}

fn run(cli: Cli) -> Result<()> {
    let Cli {
        config: config_path,
        offline,
        jobs,
        command,
    } = cli;
    match command {
        Command::Ingest { format, input, out } => {
            let format: BenchmarkFormat = format.parse()?;
            let benchmark = load_benchmark(&input, format)?;
            write_benchmark(&benchmark, &out)?;
            eprintln!(
                "ingested '{}': {} segments, {} outputs, {} judgments -> {}",
                benchmark.name,
                benchmark.segments.len(),
                benchmark.system_outputs.len(),
                benchmark.human_judgments.len(),
                out.display()
            );
        }
        Command::Diversify {
            benchmark,
            prompts,
            n,
            out,
            cache,
            provider,
        } => {
            let prompt_set: PromptSet = prompts.parse()?;
            let benchmark = load_benchmark(&benchmark, BenchmarkFormat::Native)?;
            let cache_path = cache.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".cache.jsonl");
                PathBuf::from(p)
            });
            let cache = GenerationCache::open(&cache_path)?;
            let (http, provider_config) = open_provider(&provider, cli.offline)?;
            let params = provider_config.generation_params();
            let records = match &http {
                Some(p) => generate_diversified(
                    &benchmark,
                    prompt_set,
                    n,
                    &params,
                    p,
                    &cache,
                    provider_config.max_concurrency,
                )?,
                None => generate_diversified(
                    &benchmark,
                    prompt_set,
                    n,
                    &params,
                    &OfflineProvider,
                    &cache,
                    1,
                )?,
            };
            diversifier::write_records(&out, &records)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Filter {
            benchmark,
            refs,
            out,
            provider,
        } => {
            let benchmark = load_benchmark(&benchmark, BenchmarkFormat::Native)?;
            let records = diversifier::read_records(&refs)?;
            let (http, provider_config) = open_provider(&provider, cli.offline)?;
            let Some(judge) = http else {
                return Err(Error::config(
                    "filter needs --provider (judging requires completions)",
                ));
            };
            let ground_truths: HashMap<String, String> = benchmark
                .reference_sets
                .iter()
                .map(|r| (r.segment_id.clone(), r.ground_truth.clone()))
                .collect();
            // the judge runs deterministically
            let mut judge_params = provider_config.generation_params();
            judge_params.temperature = 0.0;
            let (records, stats) = diversifier::filter_subpar(
                records,
                &ground_truths,
                &judge,
                &judge_params,
                provider_config.max_concurrency,
            )?;
            diversifier::write_records(&out, &records)?;
            eprintln!(
                "kept {} ({} unparseable), flagged {} -> {}",
                stats.kept,
                stats.unparseable,
                stats.flagged,
                out.display()
            );
        }
        Command::Score {
            metric,
            agg,
            benchmark,
            refs,
            out,
            drop_filtered,
        } => {
            let metric: MetricId = metric.parse()?;
            let aggregation: Aggregation = agg.parse()?;
            let mut benchmark = load_benchmark(&benchmark, BenchmarkFormat::Native)?;
            if let Some(refs) = refs {
                let records = diversifier::read_records(&refs)?;
                benchmark = benchmark.merge_diversified(&records)?;
            }
            let scorers = build_scorers(&benchmark, &[metric])?;
            let records =
                score_benchmark(&benchmark, &scorers, aggregation, cli.jobs, drop_filtered)?;
            write_score_records(&out, &records)?;
            eprintln!("wrote {} scores to {}", records.len(), out.display());
        }
        Command::ScoresImport {
            input,
            benchmark,
            agg,
            out,
        } => {
            let aggregation: Aggregation = agg.parse()?;
            let benchmark = load_benchmark(&benchmark, BenchmarkFormat::Native)?;
            let records = load_external_scores(&input, &benchmark)?;
            let dumps = aggregate_external(&records, aggregation)?;
            write_score_records(&out, &dumps)?;
            eprintln!(
                "imported {} per-reference records into {} dumps -> {}",
                records.len(),
                dumps.len(),
                out.display()
            );
        }
        Command::Diversity {
            refs,
            embeddings,
            model,
            out,
            provider,
        } => {
            let records = diversifier::read_records(&refs)?;
            let mut cache = match &embeddings {
                Some(path) if path.exists() => EmbeddingCache::load(path)?,
                _ => EmbeddingCache::empty(),
            };
            let (http, provider_config) = open_provider(&provider, cli.offline)?;
            let model_id = if http.is_some() {
                provider_config.embedding_model.clone()
            } else {
                model
            };
            let (per_instance, corpus) = diversity_of_records(
                &records,
                None,
                &model_id,
                &mut cache,
                embeddings.as_deref(),
                http.as_ref()
                    .map(|p| p as &dyn diversifier::EmbeddingProvider),
            )?;
            let mut lines = String::new();
            for (segment_id, value) in &per_instance {
                let record = serde_json::json!({
                    "kind": "instance", "segment_id": segment_id, "value": value,
                });
                lines.push_str(&record.to_string());
                lines.push('\n');
            }
            let record = serde_json::json!({"kind": "corpus", "value": corpus});
            lines.push_str(&record.to_string());
            lines.push('\n');
            std::fs::write(&out, lines).map_err(|e| Error::io(&out, e))?;
            eprintln!(
                "corpus diversity {:.4} over {} instance(s) -> {}",
                corpus,
                per_instance.len(),
                out.display()
            );
        }
        Command::Metaeval {
            benchmark,
            scores,
            level,
            out,
            per_system,
        } => {
            let level: EvalLevel = level.parse()?;
            let benchmark = load_benchmark(&benchmark, BenchmarkFormat::Native)?;
            let dumps = read_score_records(&scores)?;
            let grouping = if per_system {
                SegmentGrouping::PerSystemAverage
            } else {
                SegmentGrouping::Pooled
            };
            let reports = correlation_suite(&benchmark, &dumps, level, grouping)?;
            write_reports(&out, &reports)?;
            let table = render_report_table(&[("scores", &reports)]);
            eprint!("{table}");
            eprintln!("wrote {} reports to {}", reports.len(), out.display());
        }
        Command::Sweep { n_values, out } => {
            let config = load_run_config(&cli)?;
            let values: Vec<u32> = n_values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::config(format!("bad n value '{v}'")))
                })
                .collect::<Result<_>>()?;
            let rows = sweep_reference_count(&config, &values)?;
            write_sweep_rows(&out, &rows)?;
            eprintln!("wrote {} sweep rows to {}", rows.len(), out.display());
        }
        Command::Run => {
            let config = load_run_config(&cli)?;
            let artifacts = run_pipeline(&config, None)?;
            eprintln!(
                "pipeline finished: {} scores, {} reports -> {}",
                artifacts.score_records.len(),
                artifacts.reports.len(),
                artifacts.output_dir.display()
            );
        }
        Command::Report {
            input,
            baseline,
            out,
        } => {
            let reports = read_reports(&input)?;
            let table = match &baseline {
                Some(path) => {
                    let base = read_reports(path)?;
                    render_report_table(&[("Single-Ref", &base), ("Div-Ref", &reports)])
                }
                None => render_report_table(&[("Div-Ref", &reports)]),
            };
            std::fs::write(&out, &table).map_err(|e| Error::io(&out, e))?;
            eprint!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version output is not an error
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
