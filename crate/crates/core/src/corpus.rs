//! Class-entity ingestion from Java source trees or flat name lists, and
//! ground-truth extraction from `module-info.java` placement.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::architecture::Architecture;
use crate::error::{Error, Result};

/// Module name used for classes that sit under no module descriptor.
pub const UNMODULARIZED: &str = "__unmodularized__";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntity {
    pub fqcn: String,
    pub package_name: String,
    pub simple_name: String,
    /// Text handed to the embedder. Equal to `fqcn` unless a granularity
    /// view replaced it.
    pub text: String,
    /// Defining file relative to the scan root, when scanned from source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl ClassEntity {
    /// Splits a validated fqcn at its last dot.
    pub fn parse(fqcn: &str) -> std::result::Result<Self, String> {
        validate_fqcn(fqcn)?;
        let (package_name, simple_name) = match fqcn.rfind('.') {
            Some(i) => (&fqcn[..i], &fqcn[i + 1..]),
            None => ("", fqcn),
        };
        Ok(ClassEntity {
            fqcn: fqcn.to_string(),
            package_name: package_name.to_string(),
            simple_name: simple_name.to_string(),
            text: fqcn.to_string(),
            path: None,
        })
    }

    fn with_path(mut self, path: PathBuf) -> Self {
        self.path = Some(path);
        self
    }
}

/// Checks that `name` is a dot-separated list of non-empty identifier
/// segments with no whitespace.
pub fn validate_fqcn(name: &str) -> std::result::Result<(), String> {
    if name.is_empty() {
        return Err("empty name".into());
    }
    for segment in name.split('.') {
        if segment.is_empty() {
            return Err(format!("empty segment in `{name}`"));
        }
        if segment.chars().any(char::is_whitespace) {
            return Err(format!("whitespace inside `{name}`"));
        }
        if !segment.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$') {
            return Err(format!("invalid character in `{name}`"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entities: Vec<ClassEntity>,
    pub source_root: PathBuf,
    #[serde(default)]
    pub skipped_files: Vec<SkippedFile>,
}

impl CorpusManifest {
    /// Builds a manifest from fqcns, keeping the first occurrence of each.
    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut entities = Vec::new();
        for name in names {
            let name = name.as_ref();
            let entity = ClassEntity::parse(name).map_err(Error::InvalidInput)?;
            if seen.insert(entity.fqcn.clone()) {
                entities.push(entity);
            }
        }
        Ok(CorpusManifest {
            entities,
            ..Default::default()
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn fqcns(&self) -> Vec<&str> {
        self.entities.iter().map(|e| e.fqcn.as_str()).collect()
    }

    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.fqcn.as_str(), i))
            .collect()
    }

    pub fn write_name_list(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for e in &self.entities {
            text.push_str(&e.fqcn);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn build_globset(patterns: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| Error::InvalidInput(format!("bad glob `{p}`: {e}")))?;
        builder.add(glob);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("bad glob set: {e}")))
}

/// Lists `.java` files under `root` (relative paths, sorted), honoring
/// exclude globs matched against the relative path.
fn java_files(root: &Path, excludes: &GlobSet) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .filter(|e| e.path().extension().is_some_and(|x| x == "java"))
        .filter_map(|e| e.path().strip_prefix(root).ok().map(Path::to_path_buf))
        .filter(|rel| !excludes.is_match(rel))
        .collect();
    files.sort();
    files
}

/// Removes `//` and `/* */` comments. Good enough for locating the package
/// and module headers; string literals are not special-cased.
fn strip_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    let mut chars = src.chars().peekable();
    let mut in_block = false;
    let mut in_line = false;
    while let Some(c) = chars.next() {
        if in_block {
            if c == '*' && chars.peek() == Some(&'/') {
                chars.next();
                in_block = false;
                out.push(' ');
            } else if c == '\n' {
                out.push('\n');
            }
        } else if in_line {
            if c == '\n' {
                in_line = false;
                out.push('\n');
            }
        } else if c == '/' && chars.peek() == Some(&'*') {
            chars.next();
            in_block = true;
        } else if c == '/' && chars.peek() == Some(&'/') {
            chars.next();
            in_line = true;
        } else {
            out.push(c);
        }
    }
    out
}

/// Package named by the first `package X;` statement, or `""`.
pub fn extract_package(src: &str) -> Option<String> {
    let clean = strip_comments(src);
    for line in clean.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('@') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("package") {
            if rest.starts_with(|c: char| c.is_whitespace()) {
                let name: String = rest
                    .split(';')
                    .next()
                    .unwrap_or("")
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .collect();
                return Some(name);
            }
        }
        // Anything else (imports, type declarations) ends the header.
        break;
    }
    None
}

fn declares_type(src: &str) -> bool {
    let clean = strip_comments(src);
    clean.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '@')).any(|w| {
        matches!(w, "class" | "interface" | "enum" | "record" | "@interface")
    })
}

/// Name declared by a `module-info.java` body (`[open] module a.b.c {`).
pub fn extract_module_name(src: &str) -> Option<String> {
    let clean = strip_comments(src);
    let mut tokens = clean
        .split(|c: char| c.is_whitespace() || c == '{')
        .filter(|t| !t.is_empty());
    while let Some(tok) = tokens.next() {
        if tok == "module" {
            return tokens.next().map(str::to_string);
        }
    }
    None
}

enum FileOutcome {
    Entity(ClassEntity),
    Skipped(SkippedFile),
    Ignored,
}

fn scan_file(root: &Path, rel: &Path) -> FileOutcome {
    let file_name = rel.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if file_name == "module-info.java" || file_name == "package-info.java" {
        return FileOutcome::Ignored;
    }
    let skip = |reason: String| {
        FileOutcome::Skipped(SkippedFile {
            path: rel.to_path_buf(),
            reason,
        })
    };
    let bytes = match std::fs::read(root.join(rel)) {
        Ok(b) => b,
        Err(e) => return skip(format!("unreadable: {e}")),
    };
    let src = match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(_) => return skip("not valid UTF-8".into()),
    };
    if !declares_type(&src) {
        return skip("no top-level type declaration".into());
    }
    let stem = rel.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let package = extract_package(&src).unwrap_or_default();
    let fqcn = if package.is_empty() {
        stem.to_string()
    } else {
        format!("{package}.{stem}")
    };
    match ClassEntity::parse(&fqcn) {
        Ok(e) => FileOutcome::Entity(e.with_path(rel.to_path_buf())),
        Err(msg) => skip(format!("invalid class name: {msg}")),
    }
}

/// Scans `root` for `.java` files, producing one entity per file named after
/// the file stem and qualified by its package declaration.
pub fn scan_sources(root: &Path, excludes: &[String]) -> Result<CorpusManifest> {
    if !root.is_dir() {
        return Err(Error::MissingInput(root.to_path_buf()));
    }
    let globs = build_globset(excludes)?;
    let files = java_files(root, &globs);
    let outcomes: Vec<FileOutcome> = files.par_iter().map(|rel| scan_file(root, rel)).collect();

    let mut entities: Vec<ClassEntity> = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for outcome in outcomes {
        match outcome {
            FileOutcome::Entity(e) => {
                if seen.insert(e.fqcn.clone()) {
                    entities.push(e);
                } else {
                    skipped.push(SkippedFile {
                        path: e.path.clone().unwrap_or_default(),
                        reason: format!("duplicate class `{}`", e.fqcn),
                    });
                }
            }
            FileOutcome::Skipped(s) => skipped.push(s),
            FileOutcome::Ignored => {}
        }
    }
    for s in &skipped {
        warn!("skipped {}: {}", s.path.display(), s.reason);
    }
    if entities.is_empty() {
        return Err(Error::EmptyCorpus(root.to_path_buf()));
    }
    entities.sort_by(|a, b| a.fqcn.cmp(&b.fqcn));
    Ok(CorpusManifest {
        entities,
        source_root: root.to_path_buf(),
        skipped_files: skipped,
    })
}

/// Reads one fqcn per line; blank lines and `#` comments are ignored and
/// duplicates collapse to their first occurrence.
pub fn load_name_list(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut entities = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let entity = ClassEntity::parse(line).map_err(|message| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        if seen.insert(entity.fqcn.clone()) {
            entities.push(entity);
        }
    }
    if entities.is_empty() {
        return Err(Error::EmptyCorpus(path.to_path_buf()));
    }
    Ok(CorpusManifest {
        entities,
        source_root: path.to_path_buf(),
        skipped_files: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub architecture: Architecture,
    pub warnings: Vec<String>,
}

/// Builds the developer-created architecture: every directory holding a
/// `module-info.java` roots a module containing the classes below it, with
/// the nearest descriptor winning when descriptors nest.
pub fn extract_ground_truth(root: &Path, manifest: &CorpusManifest) -> Result<GroundTruth> {
    if !root.is_dir() {
        return Err(Error::MissingInput(root.to_path_buf()));
    }
    // descriptor dir (relative) → module name
    let mut descriptors: BTreeMap<PathBuf, String> = BTreeMap::new();
    let mut by_name: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut found: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.file_name() == "module-info.java")
        .map(|e| e.path().to_path_buf())
        .collect();
    found.sort();
    for file in found {
        let src = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let Some(name) = extract_module_name(&src) else {
            let msg = format!("{}: no module declaration, ignored", file.display());
            warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        if let Some(first) = by_name.get(&name) {
            return Err(Error::AmbiguousModule {
                name,
                first: first.clone(),
                second: file,
            });
        }
        let dir = file
            .parent()
            .and_then(|d| d.strip_prefix(root).ok())
            .map(Path::to_path_buf)
            .unwrap_or_default();
        by_name.insert(name.clone(), file);
        descriptors.insert(dir, name);
    }

    let mut modules: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for entity in &manifest.entities {
        let owner = entity.path.as_deref().and_then(|p| {
            p.ancestors()
                .skip(1)
                .find_map(|dir| descriptors.get(dir))
        });
        let name = owner.cloned().unwrap_or_else(|| UNMODULARIZED.to_string());
        modules.entry(name).or_default().push(entity.fqcn.clone());
    }
    for name in descriptors.values() {
        if !modules.contains_key(name) {
            let msg = format!("module `{name}` contains no classes, omitted");
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let architecture = Architecture::from_modules(modules)?;
    Ok(GroundTruth {
        architecture,
        warnings,
    })
}
