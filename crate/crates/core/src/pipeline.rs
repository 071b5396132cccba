//! End-to-end recovery: ingest → granularity view → embed → reduce →
//! cluster → repair → finalize, repeated over several seeds.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::architecture::Architecture;
use crate::clustering::{cluster, ClusterAssignment};
use crate::corpus::{load_name_list, scan_sources, CorpusManifest};
use crate::embedding::{embed_lexical, granularity_view, load_external_embeddings, EmbeddingMatrix, Granularity, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::metrics::{a2a, evaluate, DependencyGraph, MetricsReport};
use crate::reduction::{reduce, ReductionParams};
use crate::repair::{finalize, repair};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderChoice {
    Lexical,
    File(PathBuf),
}

impl FromStr for EmbedderChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lexical" => Ok(EmbedderChoice::Lexical),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(EmbedderChoice::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!("unknown embedder `{s}` (expected `lexical` or `file:<path>`)"))),
            },
        }
    }
}

impl fmt::Display for EmbedderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedderChoice::Lexical => f.write_str("lexical"),
            EmbedderChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for EmbedderChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmbedderChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub embedder: EmbedderChoice,
    pub embedder_dim: usize,
    pub reduction: ReductionParams,
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size` when unset.
    pub min_samples: Option<usize>,
    pub repair_enabled: bool,
    pub granularity: Granularity,
    pub runs: usize,
    pub seed: u64,
    pub exclude_globs: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            embedder: EmbedderChoice::Lexical,
            embedder_dim: DEFAULT_DIM,
            reduction: ReductionParams::default(),
            min_cluster_size: 2,
            min_samples: None,
            repair_enabled: true,
            granularity: Granularity::ClassName,
            runs: 3,
            seed: 0,
            exclude_globs: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.embedder_dim == 0 || self.min_samples() == 0 {
            return Err(Error::Config("dim and min_samples must be positive".into()));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::Config("min_cluster_size must be >= 2".into()));
        }
        self.reduction.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a TOML key/value file and applies it over the defaults.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let mut config = PipelineConfig::default();
        ConfigOverrides::from_toml_file(path)?.apply(&mut config)?;
        Ok(config)
    }
}

/// Flat key/value view of [`PipelineConfig`], shared by the config file and
/// the command line. Unset keys leave the target untouched.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub embedder: Option<String>,
    pub dim: Option<usize>,
    pub n_neighbors: Option<usize>,
    pub out_dim: Option<usize>,
    pub min_dist: Option<f64>,
    pub epochs: Option<usize>,
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
    pub repair: Option<bool>,
    pub granularity: Option<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
}

impl ConfigOverrides {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&self, config: &mut PipelineConfig) -> Result<()> {
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.runs {
            config.runs = v;
        }
        if let Some(v) = &self.embedder {
            config.embedder = v.parse()?;
        }
        if let Some(v) = self.dim {
            config.embedder_dim = v;
        }
        if let Some(v) = self.n_neighbors {
            config.reduction.n_neighbors = v;
        }
        if let Some(v) = self.out_dim {
            config.reduction.out_dim = v;
        }
        if let Some(v) = self.min_dist {
            config.reduction.min_dist = v;
        }
        if let Some(v) = self.epochs {
            config.reduction.epochs = v;
        }
        if let Some(v) = self.min_cluster_size {
            config.min_cluster_size = v;
        }
        if let Some(v) = self.min_samples {
            config.min_samples = Some(v);
        }
        if let Some(v) = self.repair {
            config.repair_enabled = v;
        }
        if let Some(v) = &self.granularity {
            config.granularity = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }
        if !self.exclude.is_empty() {
            config.exclude_globs = self.exclude.clone();
        }
        Ok(())
    }
}

/// A directory is scanned for Java sources; a file is read as a name list.
pub fn ingest(source: &Path, excludes: &[String]) -> Result<CorpusManifest> {
    if source.is_dir() {
        scan_sources(source, excludes)
    } else if source.is_file() {
        load_name_list(source)
    } else {
        Err(Error::MissingInput(source.to_path_buf()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: usize,
    pub seed: u64,
    pub n_modules: usize,
    pub n_clusters: usize,
    pub n_noise: usize,
    pub fallbacks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: PipelineConfig,
    pub n_classes: usize,
    pub runs: Vec<RunSummary>,
    /// One metrics report per run; empty without a ground truth.
    pub per_run: Vec<MetricsReport>,
    pub averaged: Option<MetricsReport<f64>>,
    pub representative_run: usize,
    /// Seconds per stage, summed over runs.
    pub stage_seconds: BTreeMap<String, f64>,
    pub total_seconds: f64,
    pub fallbacks: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn degenerate_fallback_taken(&self) -> bool {
        !self.fallbacks.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Recovery {
    /// Architecture of the representative run.
    pub architecture: Architecture,
    pub per_run: Vec<Architecture>,
    pub report: RunReport,
    /// Intermediate artifacts of the representative run.
    pub artifacts: RunArtifacts,
}

#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub reduced_tsv: Option<String>,
    pub labels_json: Option<String>,
}

struct StageClock {
    seconds: BTreeMap<String, f64>,
}

impl StageClock {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.seconds.entry(stage.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
        out
    }
}

struct SingleRun {
    architecture: Architecture,
    summary: RunSummary,
    artifacts: RunArtifacts,
    warnings: Vec<String>,
}

fn run_once(
    config: &PipelineConfig,
    view: &CorpusManifest,
    external: Option<&EmbeddingMatrix>,
    run_index: usize,
    clock: &mut StageClock,
) -> Result<SingleRun> {
    let seed = config.seed.wrapping_add(run_index as u64);
    let mut fallbacks = Vec::new();
    let mut warnings = Vec::new();

    if view.len() < 2 {
        fallbacks.push("single_class_corpus".to_string());
        let architecture = clock.time("finalize", || {
            Architecture::from_modules([("module_0", view.fqcns())]).map_err(|e| Error::Invariant(e.to_string()))
        })?;
        return Ok(SingleRun {
            architecture,
            summary: RunSummary {
                run_index,
                seed,
                n_modules: 1,
                n_clusters: 1,
                n_noise: 0,
                fallbacks,
            },
            artifacts: RunArtifacts::default(),
            warnings,
        });
    }

    let embedded;
    let matrix = match external {
        Some(m) => m,
        None => {
            embedded = clock.time("embed", || embed_lexical(view, config.embedder_dim, seed))?;
            &embedded
        }
    };
    let params = ReductionParams {
        seed,
        ..config.reduction.clone()
    };
    let reduced = clock.time("reduce", || reduce(matrix, &params))?;
    if reduced.params.identity_fallback {
        fallbacks.push("identity_reduction".to_string());
    }
    let min_samples = config.min_samples().min(view.len() - 1);
    let clustered = clock.time("cluster", || cluster(&reduced, config.min_cluster_size, min_samples))?;
    let n_clusters = clustered.n_clusters();
    let n_noise = clustered.noise_count();

    let assignment: ClusterAssignment = if config.repair_enabled {
        let repaired = clock.time("repair", || repair(&clustered, view))?;
        warnings.extend(repaired.warnings);
        if repaired.degenerate_fallback {
            fallbacks.push("all_singleton_collapse".to_string());
        }
        repaired.assignment
    } else {
        clustered.clone()
    };
    let architecture = clock.time("finalize", || finalize(&assignment, view))?;
    Ok(SingleRun {
        summary: RunSummary {
            run_index,
            seed,
            n_modules: architecture.module_count(),
            n_clusters,
            n_noise,
            fallbacks,
        },
        architecture,
        artifacts: RunArtifacts {
            reduced_tsv: Some(reduced.to_tsv()),
            labels_json: Some(clustered.to_json()),
        },
        warnings,
    })
}

/// Index of the run whose mean a2a against the other runs is the lower
/// median; ties go to the lowest index.
pub fn representative_run(architectures: &[Architecture]) -> Result<usize> {
    let n = architectures.len();
    if n <= 1 {
        return Ok(0);
    }
    let mut scores = Vec::with_capacity(n);
    for (i, a) in architectures.iter().enumerate() {
        let mut total = 0.0;
        for (j, b) in architectures.iter().enumerate() {
            if i != j {
                total += a2a(a, b)?.score;
            }
        }
        scores.push((total / (n - 1) as f64, i));
    }
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.0).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[(n - 1) / 2];
    Ok(scores.iter().find(|s| s.0 == median).expect("median is one of the scores").1)
}

/// Runs the pipeline `config.runs` times with seeds `seed, seed + 1, …`.
/// When a ground truth is given each run is scored and the scores averaged.
pub fn recover(
    config: &PipelineConfig,
    source: &Path,
    ground_truth: Option<&Architecture>,
    deps: Option<&DependencyGraph>,
) -> Result<Recovery> {
    config.validate()?;
    let started = Instant::now();
    let mut clock = StageClock {
        seconds: BTreeMap::new(),
    };
    let manifest = clock.time("ingest", || ingest(source, &config.exclude_globs))?;
    recover_manifest_timed(config, &manifest, ground_truth, deps, clock, started)
}

/// Same as [`recover`] over an already ingested corpus.
pub fn recover_manifest(
    config: &PipelineConfig,
    manifest: &CorpusManifest,
    ground_truth: Option<&Architecture>,
    deps: Option<&DependencyGraph>,
) -> Result<Recovery> {
    config.validate()?;
    let clock = StageClock {
        seconds: BTreeMap::new(),
    };
    recover_manifest_timed(config, manifest, ground_truth, deps, clock, Instant::now())
}

fn recover_manifest_timed(
    config: &PipelineConfig,
    manifest: &CorpusManifest,
    ground_truth: Option<&Architecture>,
    deps: Option<&DependencyGraph>,
    mut clock: StageClock,
    started: Instant,
) -> Result<Recovery> {
    let view = granularity_view(manifest, config.granularity);
    let external = match &config.embedder {
        EmbedderChoice::Lexical => None,
        EmbedderChoice::File(path) => Some(clock.time("embed", || load_external_embeddings(path, &view))?),
    };

    let mut runs = Vec::with_capacity(config.runs);
    for run_index in 0..config.runs {
        let run = run_once(config, &view, external.as_ref(), run_index, &mut clock)?;
        info!(
            "run {run_index}: {} modules ({} clusters, {} noise)",
            run.summary.n_modules, run.summary.n_clusters, run.summary.n_noise
        );
        runs.push(run);
    }

    let per_run_arch: Vec<Architecture> = runs.iter().map(|r| r.architecture.clone()).collect();
    let rep = representative_run(&per_run_arch)?;

    let mut per_run = Vec::new();
    if let Some(gt) = ground_truth {
        for run in &runs {
            let mut m = clock.time("evaluate", || evaluate(&run.architecture, gt, deps))?;
            let mut echo = config.clone();
            echo.seed = run.summary.seed;
            m.params = serde_json::to_value(&echo).expect("config serializes");
            per_run.push(m);
        }
    }
    let averaged = MetricsReport::mean(&per_run.iter().map(MetricsReport::to_f64).collect::<Vec<_>>()).map(|mut m| {
        m.params = serde_json::to_value(config).expect("config serializes");
        m
    });

    let mut fallbacks: Vec<String> = runs.iter().flat_map(|r| r.summary.fallbacks.clone()).collect();
    fallbacks.sort();
    fallbacks.dedup();
    for f in &fallbacks {
        warn!("degenerate-corpus fallback taken: {f}");
    }
    let warnings = runs.iter().flat_map(|r| r.warnings.clone()).collect();
    let artifacts = runs[rep].artifacts.clone();
    let report = RunReport {
        config: config.clone(),
        n_classes: manifest.len(),
        runs: runs.into_iter().map(|r| r.summary).collect(),
        per_run,
        averaged,
        representative_run: rep,
        stage_seconds: clock.seconds,
        total_seconds: started.elapsed().as_secs_f64(),
        fallbacks,
        warnings,
    };
    Ok(Recovery {
        architecture: per_run_arch[rep].clone(),
        per_run: per_run_arch,
        report,
        artifacts,
    })
}

/// Scores a recovered architecture file against a ground-truth file.
pub fn evaluate_files(recovered: &Path, ground_truth: &Path, deps: Option<&Path>) -> Result<MetricsReport> {
    let rec = Architecture::read(recovered)?;
    let gt = Architecture::read(ground_truth)?;
    let graph = deps.map(crate::metrics::load_dependencies).transpose()?;
    let mut report = evaluate(&rec, &gt, graph.as_ref())?;
    report.params = serde_json::json!({
        "recovered": recovered,
        "ground_truth": ground_truth,
        "deps": deps,
    });
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub a2a: f64,
    pub c_score: f64,
    pub h_score: f64,
    pub mq: Option<f64>,
    /// Difference to the first row, absent on the first row itself.
    pub delta: Option<RowDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDelta {
    pub a2a: f64,
    pub c_score: f64,
    pub h_score: f64,
    pub mq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<TableRow>,
}

/// One row per labelled averaged report, columns a2a, c-score, h-score, MQ
/// (c, h and MQ as percentages).
pub fn report_table(reports: &[(String, MetricsReport<f64>)]) -> Result<ReportTable> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports to tabulate".into()));
    }
    let rows: Vec<TableRow> = reports
        .iter()
        .map(|(label, m)| TableRow {
            label: label.clone(),
            a2a: m.a2a,
            c_score: m.c_score * 100.0,
            h_score: m.h_score * 100.0,
            mq: m.mq_normalized,
            delta: None,
        })
        .collect();
    let base = rows[0].clone();
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, mut r)| {
            if i > 0 {
                r.delta = Some(RowDelta {
                    a2a: r.a2a - base.a2a,
                    c_score: r.c_score - base.c_score,
                    h_score: r.h_score - base.h_score,
                    mq: r.mq.zip(base.mq).map(|(a, b)| a - b),
                });
            }
            r
        })
        .collect();
    Ok(ReportTable { rows })
}

impl ReportTable {
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let mut out = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {}\n",
            "config", "a2a", "c-score", "h-score", "MQ", "delta (a2a/c/h/MQ)"
        );
        for r in &self.rows {
            let delta = r.delta.as_ref().map_or(String::new(), |d| {
                format!("{:+.2}/{:+.2}/{:+.2}/{}", d.a2a, d.c_score, d.h_score, d.mq.map_or("-".into(), |x| format!("{x:+.2}")))
            });
            out.push_str(&format!(
                "{:<width$}  {:>8.2}  {:>8.2}  {:>8.2}  {:>8}  {}\n",
                r.label,
                r.a2a,
                r.c_score,
                r.h_score,
                fmt_opt(r.mq),
                delta
            ));
        }
        out
    }
}
