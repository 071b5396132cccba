//! Synthetic corpora with planted modules, for testing recovery end to end.
//!
//! Each module owns a theme: a pool of words used for its package names and
//! its class names. Packages are `<theme>.<theme word>.<generic sub-package>`,
//! so packages of one module share their root and theme vocabulary, and
//! generic sub-package names recur across modules. A noisy class takes its class-name
//! words from another module's theme while staying in its own package.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::Architecture;
use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::metrics::DependencyGraph;
use crate::seed::stage_rng;

const BUILTIN_THEMES: &[(&str, [&str; 8])] = &[
    ("billing", ["invoice", "payment", "ledger", "tax", "refund", "charge", "receipt", "balance"]),
    ("sensor", ["probe", "reading", "signal", "calibration", "telemetry", "gauge", "sample", "threshold"]),
    ("auth", ["login", "token", "credential", "password", "session", "permission", "role", "identity"]),
    ("chat", ["message", "channel", "thread", "emoji", "mention", "conversation", "reply", "typing"]),
    ("graph", ["vertex", "edge", "path", "traversal", "adjacency", "spanning", "cycle", "topology"]),
    ("media", ["video", "audio", "codec", "frame", "stream", "playlist", "subtitle", "bitrate"]),
    ("geo", ["coordinate", "latitude", "longitude", "route", "map", "region", "terrain", "elevation"]),
    ("search", ["query", "index", "ranking", "crawler", "snippet", "relevance", "stemmer", "synonym"]),
    ("storage", ["bucket", "blob", "volume", "snapshot", "replica", "shard", "quota", "archive"]),
    ("compiler", ["lexer", "grammar", "syntax", "bytecode", "optimizer", "register", "opcode", "linker"]),
    ("weather", ["forecast", "humidity", "rainfall", "pressure", "temperature", "storm", "wind", "cloud"]),
    ("inventory", ["warehouse", "stock", "pallet", "shipment", "supplier", "barcode", "reorder", "bin"]),
    ("game", ["player", "score", "level", "sprite", "quest", "dungeon", "avatar", "loot"]),
    ("health", ["patient", "diagnosis", "clinic", "dose", "symptom", "vaccine", "allergy", "nurse"]),
    ("music", ["melody", "chord", "rhythm", "tempo", "lyric", "harmony", "guitar", "concert"]),
    ("print", ["printer", "spooler", "toner", "cartridge", "margin", "duplex", "font", "glyph"]),
];

const SUFFIXES: &[&str] = &[
    "Service", "Manager", "Factory", "Writer", "Reader", "Handler", "Builder", "Validator", "Controller",
    "Repository", "Adapter", "Listener", "Provider", "Helper", "Formatter", "Resolver", "Registry", "Mapper",
    "Client", "Exception",
];

const SUBPACKAGES: &[&str] = &["api", "core", "impl", "internal", "model", "spi", "util", "io"];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theme {
    pub name: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_modules: usize,
    /// Inclusive range of classes per module.
    pub classes_per_module: (usize, usize),
    /// Per-module vocabularies; built-in and generated themes fill any gap.
    pub themes: Vec<Theme>,
    pub noise_rate: f64,
    pub seed: u64,
    /// Outgoing dependency edges drawn per class.
    pub edges_per_class: usize,
    /// Probability that a drawn edge stays inside the module.
    pub intra_edge_probability: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_modules: 6,
            classes_per_module: (20, 40),
            themes: Vec::new(),
            noise_rate: 0.05,
            seed: 0,
            edges_per_class: 3,
            intra_edge_probability: 0.8,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_modules < 2 {
            return Err(Error::InvalidInput("n_modules must be >= 2".into()));
        }
        let (lo, hi) = self.classes_per_module;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidInput(format!("invalid classes-per-module range {lo}..={hi}")));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) || !(0.0..=1.0).contains(&self.intra_edge_probability) {
            return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
        }
        if self.themes.iter().any(|t| t.words.is_empty()) {
            return Err(Error::InvalidInput("every theme needs at least one word".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub ground_truth: Architecture,
    pub manifest: CorpusManifest,
    pub deps: DependencyGraph,
    /// Classes whose names were drawn from a foreign theme.
    pub noisy: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticFiles {
    pub ground_truth: PathBuf,
    pub names: PathBuf,
    pub deps: PathBuf,
}

fn generated_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
    w
}

fn resolve_themes(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Theme> {
    let mut themes: Vec<Theme> = spec.themes.iter().take(spec.n_modules).cloned().collect();
    let mut used: BTreeSet<String> = themes
        .iter()
        .flat_map(|t| std::iter::once(t.name.clone()).chain(t.words.iter().cloned()))
        .collect();
    for (name, words) in BUILTIN_THEMES {
        if themes.len() == spec.n_modules {
            break;
        }
        if used.contains(*name) || words.iter().any(|w| used.contains(*w)) {
            continue;
        }
        used.insert(name.to_string());
        used.extend(words.iter().map(|w| w.to_string()));
        themes.push(Theme {
            name: name.to_string(),
            words: words.iter().map(|w| w.to_string()).collect(),
        });
    }
    while themes.len() < spec.n_modules {
        let mut fresh = || loop {
            let w = generated_word(rng);
            if used.insert(w.clone()) {
                return w;
            }
        };
        let name = fresh();
        let words = (0..8).map(|_| fresh()).collect();
        themes.push(Theme { name, words });
    }
    themes
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn class_name(rng: &mut ChaCha8Rng, words: &[String], extra_words: usize) -> String {
    let mut name = String::new();
    for _ in 0..1 + extra_words {
        name.push_str(&capitalize(words.choose(rng).expect("non-empty theme")));
    }
    name.push_str(SUFFIXES.choose(rng).expect("non-empty"));
    name
}

/// Builds a corpus from `spec`. The same spec always yields the same corpus.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = stage_rng(spec.seed, "synthetic");
    let themes = resolve_themes(spec, &mut rng);

    let mut modules: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut noisy = BTreeSet::new();
    let mut taken = BTreeSet::new();
    for (m, theme) in themes.iter().enumerate() {
        let size = rng.gen_range(spec.classes_per_module.0..=spec.classes_per_module.1);
        let n_packages = (size / 8).clamp(1, 5);
        let mut packages = Vec::with_capacity(n_packages);
        while packages.len() < n_packages {
            let p = format!(
                "{}.{}.{}",
                theme.name,
                theme.words.choose(&mut rng).expect("non-empty"),
                SUBPACKAGES.choose(&mut rng).expect("non-empty")
            );
            if !packages.contains(&p) {
                packages.push(p);
            } else if packages.len() >= theme.words.len() * SUBPACKAGES.len() {
                break;
            }
        }
        let members = modules.entry(theme.name.clone()).or_default();
        for c in 0..size {
            let package = &packages[c % packages.len()];
            let foreign = spec.noise_rate > 0.0 && rng.gen_bool(spec.noise_rate);
            let words = if foreign {
                let other = (m + rng.gen_range(1..themes.len())) % themes.len();
                &themes[other].words
            } else {
                &theme.words
            };
            let mut attempt = 0;
            let fqcn = loop {
                let candidate = format!("{package}.{}", class_name(&mut rng, words, 1 + attempt / 20));
                if taken.insert(candidate.clone()) {
                    break candidate;
                }
                attempt += 1;
            };
            if foreign {
                noisy.insert(fqcn.clone());
            }
            members.push(fqcn.clone());
            names.push(fqcn);
        }
    }

    let module_of: Vec<usize> = themes
        .iter()
        .enumerate()
        .flat_map(|(m, t)| std::iter::repeat_n(m, modules[&t.name].len()))
        .collect();
    let by_module: Vec<&Vec<String>> = themes.iter().map(|t| &modules[&t.name]).collect();
    let mut edges = Vec::new();
    for (i, src) in names.iter().enumerate() {
        let m = module_of[i];
        for _ in 0..spec.edges_per_class {
            let target_module = if rng.gen_bool(spec.intra_edge_probability) {
                m
            } else {
                (m + rng.gen_range(1..themes.len())) % themes.len()
            };
            let dst = by_module[target_module].choose(&mut rng).expect("non-empty module");
            edges.push((src.clone(), dst.clone()));
        }
    }

    let ground_truth = Architecture::from_modules(modules).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut manifest = CorpusManifest::from_names(names)?;
    manifest.source_root = PathBuf::from("<synthetic>");
    Ok(SyntheticCorpus {
        ground_truth,
        manifest,
        deps: DependencyGraph::from_edges(edges),
        noisy,
    })
}

/// Writes `ground_truth.json`, `classes.txt` and `deps.txt` into `out`.
pub fn write_corpus(corpus: &SyntheticCorpus, out: &Path) -> Result<SyntheticFiles> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = SyntheticFiles {
        ground_truth: out.join("ground_truth.json"),
        names: out.join("classes.txt"),
        deps: out.join("deps.txt"),
    };
    corpus.ground_truth.write(&files.ground_truth)?;
    corpus.manifest.write_name_list(&files.names)?;
    std::fs::write(&files.deps, corpus.deps.to_text()).map_err(|e| Error::io(&files.deps, e))?;
    Ok(files)
}

pub fn gen_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<(SyntheticCorpus, SyntheticFiles)> {
    let corpus = generate(spec)?;
    let files = write_corpus(&corpus, out)?;
    Ok((corpus, files))
}
