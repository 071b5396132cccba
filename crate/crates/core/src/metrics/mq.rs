use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::architecture::Architecture;
use crate::corpus::validate_fqcn;
use crate::error::{Error, Result};

/// Directed class-level dependencies, deduplicated, without self-edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub edges: BTreeSet<(String, String)>,
}

impl DependencyGraph {
    pub fn from_edges<I, S>(edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let edges = edges
            .into_iter()
            .map(|(a, b)| (a.into(), b.into()))
            .filter(|(a, b)| a != b)
            .collect();
        DependencyGraph { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `src -> dst` lines.
    pub fn to_text(&self) -> String {
        self.edges.iter().map(|(a, b)| format!("{a} -> {b}\n")).collect()
    }
}

/// Parses `src -> dst` lines (blank lines and `#` comments skipped) or a
/// JSON list of `[src, dst]` pairs.
pub fn parse_dependencies(path: &Path, text: &str) -> Result<DependencyGraph> {
    let mut raw: Vec<(usize, String, String)> = Vec::new();
    if text.trim_start().starts_with('[') {
        let pairs: Vec<(String, String)> = serde_json::from_str(text).map_err(|e| Error::json(path, e))?;
        raw.extend(pairs.into_iter().enumerate().map(|(i, (a, b))| (i + 1, a, b)));
    } else {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (a, b) = line.split_once("->").ok_or_else(|| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected `src -> dst`".into(),
            })?;
            raw.push((i + 1, a.trim().to_string(), b.trim().to_string()));
        }
    }
    for (line, a, b) in &raw {
        for end in [a, b] {
            validate_fqcn(end).map_err(|message| Error::Malformed {
                path: path.to_path_buf(),
                line: *line,
                message,
            })?;
        }
    }
    Ok(DependencyGraph::from_edges(raw.into_iter().map(|(_, a, b)| (a, b))))
}

pub fn load_dependencies(path: &Path) -> Result<DependencyGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dependencies(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mq {
    pub mq_sum: f64,
    /// `mq_sum / k * 100`.
    pub mq_normalized: f64,
    pub cluster_factors: BTreeMap<String, f64>,
    pub dropped_edges: usize,
}

/// Modularization quality: sum over modules of the cluster factor
/// `2μ / (2μ + Σ(ε_ij + ε_ji))`, zero for modules touching no edge.
pub fn mq(arch: &Architecture, deps: &DependencyGraph) -> Mq {
    let module_of = arch.membership();
    let mut internal: BTreeMap<&str, u64> = BTreeMap::new();
    let mut external: BTreeMap<&str, u64> = BTreeMap::new();
    let mut dropped = 0;
    for (a, b) in &deps.edges {
        match (module_of.get(a.as_str()), module_of.get(b.as_str())) {
            (Some(&ma), Some(&mb)) if ma == mb => *internal.entry(ma).or_insert(0) += 1,
            (Some(&ma), Some(&mb)) => {
                *external.entry(ma).or_insert(0) += 1;
                *external.entry(mb).or_insert(0) += 1;
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        warn!("{dropped} dependency edge(s) reference classes outside the architecture; ignored");
    }
    let cluster_factors: BTreeMap<String, f64> = arch
        .modules
        .keys()
        .map(|m| {
            let mu = internal.get(m.as_str()).copied().unwrap_or(0) as f64;
            let eps = external.get(m.as_str()).copied().unwrap_or(0) as f64;
            let cf = if mu == 0.0 { 0.0 } else { 2.0 * mu / (2.0 * mu + eps) };
            (m.clone(), cf)
        })
        .collect();
    let mq_sum: f64 = cluster_factors.values().sum();
    let k = arch.module_count().max(1) as f64;
    Mq {
        mq_sum,
        mq_normalized: mq_sum / k * 100.0,
        cluster_factors,
        dropped_edges: dropped,
    }
}
