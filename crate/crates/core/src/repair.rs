//! Undersized-module repair.
//!
//! Singleton clusters (including every noise point) are merged into the
//! closest non-singleton cluster under class-based TF-IDF, then split
//! packages are moved wholesale to the cluster holding most of their
//! classes.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::architecture::Architecture;
use crate::clustering::{ClusterAssignment, NOISE};
use crate::corpus::CorpusManifest;
use crate::embedding::{cosine, tokenize_text};
use crate::error::{Error, Result};

/// Concatenated tokens of one cluster's members.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDocument {
    pub cluster_id: i64,
    pub token_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfidfModel {
    pub vocabulary: Vec<String>,
    pub cluster_ids: Vec<i64>,
    pub cluster_sizes: Vec<usize>,
    /// L2-normalized `tf * ln(1 + A / f_t)` per cluster.
    pub cluster_vectors: Vec<Vec<f64>>,
    /// `A`: average number of tokens per cluster document.
    pub avg_tokens_per_cluster: f64,
    /// `f_t`: total count of each vocabulary token over all clusters.
    pub token_frequency: Vec<usize>,
}

impl CtfidfModel {
    pub fn idf(&self, token_index: usize) -> f64 {
        (1.0 + self.avg_tokens_per_cluster / self.token_frequency[token_index] as f64).ln()
    }

    /// Weights a bag of tokens with the model's idf factors. Tokens outside
    /// the vocabulary are dropped, so the result may be all zeros.
    pub fn transform(&self, tokens: &[String]) -> Vec<f64> {
        let index: HashMap<&str, usize> = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();
        let mut v = vec![0.0; self.vocabulary.len()];
        for t in tokens {
            if let Some(&i) = index.get(t.as_str()) {
                v[i] += 1.0;
            }
        }
        for (i, x) in v.iter_mut().enumerate() {
            *x *= self.idf(i);
        }
        v
    }
}

fn token_lookup(manifest: &CorpusManifest) -> HashMap<&str, Vec<String>> {
    manifest
        .entities
        .iter()
        .map(|e| (e.fqcn.as_str(), tokenize_text(&e.text)))
        .collect()
}

fn package_lookup(manifest: &CorpusManifest) -> HashMap<&str, &str> {
    manifest
        .entities
        .iter()
        .map(|e| (e.fqcn.as_str(), e.package_name.as_str()))
        .collect()
}

fn tokens_for<'a>(lookup: &'a HashMap<&str, Vec<String>>, fqcn: &str) -> Result<&'a [String]> {
    lookup
        .get(fqcn)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Invariant(format!("class `{fqcn}` is not in the manifest")))
}

/// Cluster documents for every cluster with at least two members.
pub fn cluster_documents(assignment: &ClusterAssignment, manifest: &CorpusManifest) -> Result<Vec<ClusterDocument>> {
    let lookup = token_lookup(manifest);
    let sizes = assignment.cluster_sizes();
    let mut docs: BTreeMap<i64, BTreeMap<String, usize>> = BTreeMap::new();
    for (fqcn, &label) in assignment.fqcns.iter().zip(&assignment.labels) {
        if label == NOISE || sizes[&label] < 2 {
            continue;
        }
        let counts = docs.entry(label).or_default();
        for t in tokens_for(&lookup, fqcn)? {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    Ok(docs
        .into_iter()
        .map(|(cluster_id, token_counts)| ClusterDocument { cluster_id, token_counts })
        .collect())
}

pub fn build_ctfidf(assignment: &ClusterAssignment, manifest: &CorpusManifest) -> Result<CtfidfModel> {
    let docs = cluster_documents(assignment, manifest)?;
    if docs.is_empty() {
        return Err(Error::Degenerate("every cluster is a singleton; nothing to merge into".into()));
    }
    let vocab: BTreeSet<&str> = docs.iter().flat_map(|d| d.token_counts.keys().map(String::as_str)).collect();
    let vocabulary: Vec<String> = vocab.into_iter().map(str::to_string).collect();
    let index: HashMap<String, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let mut token_frequency = vec![0usize; vocabulary.len()];
    let mut total = 0usize;
    for d in &docs {
        for (t, &c) in &d.token_counts {
            token_frequency[index[t]] += c;
            total += c;
        }
    }
    let avg = total as f64 / docs.len() as f64;
    let sizes = assignment.cluster_sizes();
    let mut model = CtfidfModel {
        vocabulary,
        cluster_ids: docs.iter().map(|d| d.cluster_id).collect(),
        cluster_sizes: docs.iter().map(|d| sizes[&d.cluster_id]).collect(),
        cluster_vectors: Vec::with_capacity(docs.len()),
        avg_tokens_per_cluster: avg,
        token_frequency,
    };
    for d in &docs {
        let mut v = vec![0.0; model.vocabulary.len()];
        for (t, &c) in &d.token_counts {
            let i = index[t];
            v[i] = c as f64 * model.idf(i);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        model.cluster_vectors.push(v);
    }
    Ok(model)
}

/// Renumbers non-noise labels to `0..k` in order of first appearance.
pub fn recompact(assignment: &ClusterAssignment) -> ClusterAssignment {
    let mut ids: HashMap<i64, i64> = HashMap::new();
    let labels = assignment
        .labels
        .iter()
        .map(|&l| {
            if l == NOISE {
                NOISE
            } else {
                let next = ids.len() as i64;
                *ids.entry(l).or_insert(next)
            }
        })
        .collect();
    ClusterAssignment {
        labels,
        ..assignment.clone()
    }
}

fn singleton_positions(assignment: &ClusterAssignment) -> Vec<usize> {
    let sizes = assignment.cluster_sizes();
    assignment
        .labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l == NOISE || sizes[&l] == 1)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repaired {
    pub assignment: ClusterAssignment,
    pub warnings: Vec<String>,
    /// True when every cluster was a singleton and the corpus collapsed into
    /// one module.
    pub degenerate_fallback: bool,
}

/// Merges every singleton (and noise point) into the non-singleton cluster
/// with the most similar c-TF-IDF vector. Ties go to the larger cluster,
/// then the lower id; a singleton with no in-vocabulary token joins the
/// largest cluster.
pub fn merge_singletons(
    assignment: &ClusterAssignment,
    model: &CtfidfModel,
    manifest: &CorpusManifest,
) -> Result<(ClusterAssignment, Vec<String>)> {
    let lookup = token_lookup(manifest);
    let mut out = assignment.clone();
    let mut warnings = Vec::new();
    let largest = (0..model.cluster_ids.len())
        .max_by(|&a, &b| {
            model.cluster_sizes[a]
                .cmp(&model.cluster_sizes[b])
                .then(model.cluster_ids[b].cmp(&model.cluster_ids[a]))
        })
        .expect("model has clusters");
    for pos in singleton_positions(assignment) {
        let fqcn = &assignment.fqcns[pos];
        let v = model.transform(tokens_for(&lookup, fqcn)?);
        let target = if v.iter().all(|&x| x == 0.0) {
            let msg = format!("`{fqcn}` shares no token with any cluster; assigned to the largest cluster");
            warn!("{msg}");
            warnings.push(msg);
            largest
        } else {
            let sims: Vec<f64> = model.cluster_vectors.iter().map(|c| cosine(&v, c)).collect();
            (0..sims.len())
                .max_by(|&a, &b| {
                    sims[a]
                        .total_cmp(&sims[b])
                        .then(model.cluster_sizes[a].cmp(&model.cluster_sizes[b]))
                        .then(model.cluster_ids[b].cmp(&model.cluster_ids[a]))
                })
                .expect("model has clusters")
        };
        out.labels[pos] = model.cluster_ids[target];
    }
    Ok((recompact(&out), warnings))
}

/// Packages (non-default) whose classes span more than one cluster.
pub fn split_packages(assignment: &ClusterAssignment, manifest: &CorpusManifest) -> Vec<String> {
    let packages = package_lookup(manifest);
    let mut spans: BTreeMap<&str, BTreeSet<i64>> = BTreeMap::new();
    for (fqcn, &l) in assignment.fqcns.iter().zip(&assignment.labels) {
        let pkg = packages.get(fqcn.as_str()).copied().unwrap_or("");
        if !pkg.is_empty() {
            spans.entry(pkg).or_default().insert(l);
        }
    }
    spans
        .into_iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(p, _)| p.to_string())
        .collect()
}

/// Moves every split package into the cluster holding the plurality of its
/// classes (ties: larger cluster, then lower id).
pub fn resolve_split_packages(assignment: &ClusterAssignment, manifest: &CorpusManifest) -> ClusterAssignment {
    let packages = package_lookup(manifest);
    let mut out = assignment.clone();
    for pkg in split_packages(assignment, manifest) {
        let members: Vec<usize> = out
            .fqcns
            .iter()
            .enumerate()
            .filter(|(_, f)| packages.get(f.as_str()).copied() == Some(pkg.as_str()))
            .map(|(i, _)| i)
            .collect();
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &i in &members {
            *counts.entry(out.labels[i]).or_insert(0) += 1;
        }
        let sizes = out.cluster_sizes();
        let size_of = |l: i64| if l == NOISE { 1 } else { sizes[&l] };
        let target = counts
            .iter()
            .filter(|(&l, _)| l != NOISE)
            .max_by(|(&la, &ca), (&lb, &cb)| {
                ca.cmp(&cb).then(size_of(la).cmp(&size_of(lb))).then(lb.cmp(&la))
            })
            .map(|(&l, _)| l);
        if let Some(target) = target {
            for &i in &members {
                out.labels[i] = target;
            }
        }
    }
    recompact(&out)
}

/// Full repair: merge singletons, resolve split packages, and merge once
/// more if draining a cluster left a singleton behind.
pub fn repair(assignment: &ClusterAssignment, manifest: &CorpusManifest) -> Result<Repaired> {
    let mut warnings = Vec::new();
    let mut current = recompact(assignment);
    for round in 0..2 {
        if !singleton_positions(&current).is_empty() {
            match build_ctfidf(&current, manifest) {
                Ok(model) => {
                    let (merged, w) = merge_singletons(&current, &model, manifest)?;
                    warnings.extend(w);
                    current = merged;
                }
                Err(Error::Degenerate(_)) => {
                    let msg = format!(
                        "all {} classes are singletons; collapsing them into one module",
                        current.labels.len()
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                    let labels = vec![0; current.labels.len()];
                    return Ok(Repaired {
                        assignment: ClusterAssignment { labels, ..current },
                        warnings,
                        degenerate_fallback: true,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        current = resolve_split_packages(&current, manifest);
        if singleton_positions(&current).is_empty() {
            return Ok(Repaired {
                assignment: current,
                warnings,
                degenerate_fallback: false,
            });
        }
        if round == 1 {
            break;
        }
    }
    Err(Error::Invariant(
        "repair did not converge: split-package resolution keeps producing singletons".into(),
    ))
}

/// Turns an assignment into an architecture with modules `module_<id>`.
/// Remaining noise points each become their own module.
pub fn finalize(assignment: &ClusterAssignment, manifest: &CorpusManifest) -> Result<Architecture> {
    if assignment.fqcns.len() != assignment.labels.len() {
        return Err(Error::Invariant("labels and classes differ in length".into()));
    }
    let compact = recompact(assignment);
    let mut next = compact.n_clusters();
    let mut modules: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (fqcn, &l) in compact.fqcns.iter().zip(&compact.labels) {
        let id = if l == NOISE {
            next += 1;
            next - 1
        } else {
            l as usize
        };
        modules.entry(format!("module_{id}")).or_default().push(fqcn.clone());
    }
    let assigned: BTreeSet<&str> = compact.fqcns.iter().map(String::as_str).collect();
    if let Some(missing) = manifest.entities.iter().find(|e| !assigned.contains(e.fqcn.as_str())) {
        return Err(Error::Invariant(format!("class `{}` was never assigned", missing.fqcn)));
    }
    Architecture::from_modules(modules).map_err(|e| Error::Invariant(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assignment(names: &[&str], labels: &[i64]) -> (ClusterAssignment, CorpusManifest) {
        let manifest = CorpusManifest::from_names(names.iter().copied()).unwrap();
        let a = ClusterAssignment {
            fqcns: names.iter().map(|s| s.to_string()).collect(),
            labels: labels.to_vec(),
            min_cluster_size: 2,
        };
        (a, manifest)
    }

    #[test]
    fn no_singletons_is_identity() {
        let (a, m) = assignment(&["p.A", "p.B", "q.C", "q.D"], &[0, 0, 1, 1]);
        let model = build_ctfidf(&a, &m).unwrap();
        let (out, w) = merge_singletons(&a, &model, &m).unwrap();
        assert_eq!(out, a);
        assert!(w.is_empty());
    }

    #[test]
    fn single_cluster_self_similarity() {
        let (a, m) = assignment(&["p.Alpha", "p.Beta"], &[0, 0]);
        let model = build_ctfidf(&a, &m).unwrap();
        let v = &model.cluster_vectors[0];
        assert!((cosine(v, v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_singletons_is_degenerate() {
        let (a, m) = assignment(&["p.A", "q.B", "r.C"], &[0, 1, NOISE]);
        assert!(matches!(build_ctfidf(&a, &m), Err(Error::Degenerate(_))));
        let r = repair(&a, &m).unwrap();
        assert!(r.degenerate_fallback);
        assert_eq!(r.assignment.labels, vec![0, 0, 0]);
    }

    #[test]
    fn out_of_vocabulary_singleton_joins_largest() {
        let (a, m) = assignment(&["p.A", "p.B", "q.C", "q.D", "q.E", "zz.Unrelated"], &[0, 0, 1, 1, 1, NOISE]);
        let model = build_ctfidf(&a, &m).unwrap();
        let (out, w) = merge_singletons(&a, &model, &m).unwrap();
        assert_eq!(out.labels[5], 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn untouched_package_stays() {
        let (a, m) = assignment(&["p.A", "p.B", "q.C", "q.D"], &[0, 0, 1, 1]);
        assert_eq!(resolve_split_packages(&a, &m), a);
    }

    #[test]
    fn finalize_names_modules_and_places_noise() {
        let (a, m) = assignment(&["p.A", "p.B", "q.C", "q.D"], &[1, 1, NOISE, 1]);
        let arch = finalize(&a, &m).unwrap();
        assert_eq!(arch.module_count(), 2);
        assert_eq!(arch.modules["module_0"].len(), 3);
        assert!(arch.modules["module_1"].contains("q.C"));
    }
}
