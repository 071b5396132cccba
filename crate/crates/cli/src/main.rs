use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use modrecover_core::corpus::{extract_ground_truth, scan_sources};
use modrecover_core::metrics::{load_dependencies, MetricsReport};
use modrecover_core::pipeline::{self, ConfigOverrides, PipelineConfig, RunReport};
use modrecover_core::synthetic::{gen_synthetic, SyntheticSpec};
use modrecover_core::{Architecture, Error};

#[derive(Parser)]
#[command(name = "modrecover", version, about = "Recover module structure from Java class names")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// List the classes found under a source root.
    Scan {
        root: PathBuf,
        #[arg(long = "exclude", value_name = "GLOB")]
        exclude: Vec<String>,
        /// Write `classes.txt` here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Extract the module-descriptor architecture of a source root.
    GroundTruth {
        root: PathBuf,
        #[arg(long = "exclude", value_name = "GLOB")]
        exclude: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover an architecture from a source root or a class-name list.
    Recover(Box<RecoverArgs>),
    /// Score a recovered architecture against a ground truth.
    Evaluate {
        recovered: PathBuf,
        ground_truth: PathBuf,
        #[arg(long)]
        deps: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Write a synthetic corpus with planted modules.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        modules: usize,
        #[arg(long, default_value_t = 20)]
        min_classes: usize,
        #[arg(long, default_value_t = 40)]
        max_classes: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        edges_per_class: usize,
    },
    /// Tabulate averaged a2a, c-score, h-score and MQ of several reports.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

#[derive(Args)]
struct RecoverArgs {
    /// Source directory or class-name list.
    source: PathBuf,
    /// TOML key/value config; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// `lexical` or `file:<path>`.
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_neighbors: Option<usize>,
    #[arg(long)]
    out_dim: Option<usize>,
    #[arg(long)]
    min_dist: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
    #[arg(long)]
    min_samples: Option<usize>,
    #[arg(long)]
    no_repair: bool,
    /// `class` or `package`.
    #[arg(long)]
    granularity: Option<String>,
    #[arg(long = "exclude", value_name = "GLOB")]
    exclude: Vec<String>,
    /// Score every run against this architecture.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Dependency file for MQ; needs `--ground-truth`.
    #[arg(long)]
    deps: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

impl RecoverArgs {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            ConfigOverrides::from_toml_file(path)?.apply(&mut config)?;
        }
        let flags = ConfigOverrides {
            seed: self.seed,
            runs: self.runs,
            embedder: self.embedder.clone(),
            dim: self.dim,
            n_neighbors: self.n_neighbors,
            out_dim: self.out_dim,
            min_dist: self.min_dist,
            epochs: self.epochs,
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            repair: self.no_repair.then_some(false),
            granularity: self.granularity.clone(),
            exclude: self.exclude.clone(),
        };
        flags.apply(&mut config)?;
        config.validate()?;
        Ok(config)
    }
}

/// Files written by the current command, removed again if it fails.
#[derive(Default)]
struct Outputs {
    created_dir: Option<PathBuf>,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn prepare(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            self.created_dir = Some(dir.to_path_buf());
        }
        Ok(())
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        self.files.push(path.clone());
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn discard(self) {
        for f in &self.files {
            let _ = std::fs::remove_file(f);
        }
        if let Some(d) = self.created_dir {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}

enum Outcome {
    Done,
    Fallback,
}

fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn run(cli: Cli, outputs: &mut Outputs) -> Result<Outcome> {
    match cli.command {
        Command::Scan {
            root,
            exclude,
            out,
            format,
        } => {
            let manifest = scan_sources(&root, &exclude)?;
            let listing = match format {
                Format::Text => manifest.fqcns().iter().map(|f| format!("{f}\n")).collect(),
                Format::Json => to_json(&serde_json::json!({
                    "classes": manifest.fqcns(),
                    "skipped": manifest.skipped_files.iter()
                        .map(|s| serde_json::json!({"path": s.path, "reason": s.reason}))
                        .collect::<Vec<_>>(),
                })),
            };
            match out {
                Some(dir) => {
                    outputs.prepare(&dir)?;
                    let name = if format == Format::Json { "classes.json" } else { "classes.txt" };
                    outputs.write(dir.join(name), &listing)?;
                }
                None => print!("{listing}"),
            }
        }
        Command::GroundTruth { root, exclude, out } => {
            let manifest = scan_sources(&root, &exclude)?;
            let gt = extract_ground_truth(&root, &manifest)?;
            let json = gt.architecture.to_json();
            match out {
                Some(dir) => {
                    outputs.prepare(&dir)?;
                    outputs.write(dir.join("ground_truth.json"), &json)?;
                }
                None => println!("{json}"),
            }
        }
        Command::Recover(args) => return recover(*args, outputs),
        Command::Evaluate {
            recovered,
            ground_truth,
            deps,
            out,
            format,
        } => {
            let report = pipeline::evaluate_files(&recovered, &ground_truth, deps.as_deref())?;
            let json = to_json(&report);
            if let Some(dir) = out {
                outputs.prepare(&dir)?;
                outputs.write(dir.join("metrics.json"), &json)?;
            }
            match format {
                Format::Json => print!("{json}"),
                Format::Text => print!("{}", metrics_text(&report.to_f64())),
            }
        }
        Command::GenSynthetic {
            out,
            modules,
            min_classes,
            max_classes,
            noise,
            seed,
            edges_per_class,
        } => {
            let spec = SyntheticSpec {
                n_modules: modules,
                classes_per_module: (min_classes, max_classes),
                noise_rate: noise,
                seed,
                edges_per_class,
                ..SyntheticSpec::default()
            };
            spec.validate()?;
            outputs.prepare(&out)?;
            let (corpus, files) = gen_synthetic(&spec, &out)?;
            outputs.files.extend([files.ground_truth.clone(), files.names.clone(), files.deps.clone()]);
            println!(
                "{} classes in {} modules -> {}",
                corpus.manifest.len(),
                corpus.ground_truth.module_count(),
                out.display()
            );
        }
        Command::Report { reports, format } => {
            let mut rows = Vec::new();
            for path in &reports {
                rows.push((path.display().to_string(), load_averaged(path)?));
            }
            let table = pipeline::report_table(&rows)?;
            match format {
                Format::Text => print!("{}", table.to_text()),
                Format::Json => print!("{}", to_json(&table)),
            }
        }
    }
    Ok(Outcome::Done)
}

/// Accepts a recover report (its averaged scores) or a single metrics report.
fn load_averaged(path: &Path) -> Result<MetricsReport<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let json_err = |e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    if value.get("per_run").is_some() {
        let report: RunReport = serde_json::from_value(value).map_err(json_err)?;
        report
            .averaged
            .ok_or_else(|| Error::InvalidInput(format!("{} has no scores (recovered without --ground-truth)", path.display())).into())
    } else {
        let report: MetricsReport<f64> = serde_json::from_value(value).map_err(json_err)?;
        Ok(report)
    }
}

fn metrics_text(m: &MetricsReport<f64>) -> String {
    let mut s = format!(
        "a2a      {:.2}%\nc-score  {:.4}\nh-score  {:.4}\n",
        m.a2a, m.c_score, m.h_score
    );
    match (m.mq_sum, m.mq_normalized) {
        (Some(sum), Some(norm)) => s.push_str(&format!("MQ       {sum:.4} ({norm:.2}%)\n")),
        _ => s.push_str("MQ       -\n"),
    }
    s
}

fn recover(args: RecoverArgs, outputs: &mut Outputs) -> Result<Outcome> {
    let config = args.config()?;
    if args.deps.is_some() && args.ground_truth.is_none() {
        return Err(Error::InvalidInput("--deps needs --ground-truth".into()).into());
    }
    let gt = args.ground_truth.as_deref().map(Architecture::read).transpose()?;
    let deps = args.deps.as_deref().map(load_dependencies).transpose()?;
    let recovery = pipeline::recover(&config, &args.source, gt.as_ref(), deps.as_ref())?;

    if let Some(dir) = &args.out {
        outputs.prepare(dir)?;
        outputs.write(dir.join("architecture.json"), &recovery.architecture.to_json())?;
        for (i, arch) in recovery.per_run.iter().enumerate() {
            outputs.write(dir.join(format!("run_{i}.json")), &arch.to_json())?;
        }
        outputs.write(dir.join("report.json"), &to_json(&recovery.report))?;
        if let Some(tsv) = &recovery.artifacts.reduced_tsv {
            outputs.write(dir.join("reduced.tsv"), tsv)?;
        }
        if let Some(labels) = &recovery.artifacts.labels_json {
            outputs.write(dir.join("labels.json"), labels)?;
        }
    }
    match args.format {
        Format::Json => print!("{}", to_json(&recovery.report)),
        Format::Text => {
            let r = &recovery.report;
            println!(
                "{} classes -> {} modules (run {} of {}, {:.2}s)",
                r.n_classes,
                recovery.architecture.module_count(),
                r.representative_run,
                r.runs.len(),
                r.total_seconds
            );
            if let Some(avg) = &r.averaged {
                print!("{}", metrics_text(avg));
            }
            if args.out.is_none() {
                println!("{}", recovery.architecture.to_json());
            }
        }
    }
    Ok(if recovery.report.degenerate_fallback_taken() {
        Outcome::Fallback
    } else {
        Outcome::Done
    })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Invariant(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut outputs = Outputs::default();
    match run(cli, &mut outputs) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Fallback) => ExitCode::from(4),
        Err(err) => {
            outputs.discard();
            error!("{err:#}");
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
