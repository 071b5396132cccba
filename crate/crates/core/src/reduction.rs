//! UMAP-style manifold reduction under cosine distance.
//!
//! Stages: exact cosine kNN → per-point bandwidth calibration into a fuzzy
//! simplicial set (symmetrized with `a + b - ab`) → spectral initialization
//! → seeded SGD layout with negative sampling. The layout phase is
//! single-threaded so a fixed seed reproduces the output bit for bit.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seed::stage_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    pub n_neighbors: usize,
    pub out_dim: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default = "default_negative_sample_rate")]
    pub negative_sample_rate: usize,
    /// Set when the corpus was too small to reduce and input vectors were
    /// passed through unchanged.
    #[serde(default)]
    pub identity_fallback: bool,
}

fn default_negative_sample_rate() -> usize {
    5
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams {
            n_neighbors: 15,
            out_dim: 5,
            min_dist: 0.0,
            epochs: 200,
            seed: 0,
            negative_sample_rate: default_negative_sample_rate(),
            identity_fallback: false,
        }
    }
}

impl ReductionParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::InvalidInput("n_neighbors must be >= 2".into()));
        }
        if self.out_dim == 0 || self.epochs == 0 {
            return Err(Error::InvalidInput("out_dim and epochs must be positive".into()));
        }
        if self.min_dist.is_nan() || self.min_dist < 0.0 {
            return Err(Error::InvalidInput("min_dist must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedMatrix {
    pub fqcns: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub out_dim: usize,
    pub params: ReductionParams,
    /// True when the spectral eigensolve did not converge and the layout
    /// started from a seeded uniform random placement instead.
    #[serde(default)]
    pub random_init: bool,
}

impl ReducedMatrix {
    /// Wraps raw points, e.g. for clustering data that never went through
    /// reduction.
    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        let out_dim = points.first().map_or(0, Vec::len);
        ReducedMatrix {
            fqcns: (0..points.len()).map(|i| format!("p{i}")).collect(),
            points,
            out_dim,
            params: ReductionParams::default(),
            random_init: false,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `fqcn\tx1 ... xd` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (name, p) in self.fqcns.iter().zip(&self.points) {
            out.push_str(name);
            out.push('\t');
            let coords: Vec<String> = p.iter().map(|x| format!("{x}")).collect();
            out.push_str(&coords.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Directed kNN graph: row `i` lists its `k` nearest neighbors in order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

fn normalized_rows(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter().map(|x| x / norm).collect()
            } else {
                v.clone()
            }
        })
        .collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Cosine distance `1 - cos(a, b)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0)
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exact kNN under cosine distance, self excluded; ties go to the
/// lexicographically smaller fqcn.
pub fn knn_graph(matrix: &EmbeddingMatrix, k: usize) -> Result<KnnGraph> {
    let n = matrix.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!("k = {k} must be in 1..{n}")));
    }
    let rows = normalized_rows(&matrix.vectors);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| matrix.fqcns[a].cmp(&matrix.fqcns[b]));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let (indices, distances): (Vec<Vec<usize>>, Vec<Vec<f64>>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((1.0 - dot(&rows[i], &rows[j])).clamp(0.0, 2.0), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| {
                a.0.total_cmp(&b.0).then(rank[a.1].cmp(&rank[b.1]))
            };
            if cand.len() > k {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_by(cmp);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .unzip();
    Ok(KnnGraph { indices, distances })
}

/// Symmetric sparse graph in CSR-like form.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n: usize,
    /// Per row: (column, membership strength), sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl FuzzyGraph {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |p| self.rows[i][p].1)
    }
}

/// Per-point (rho, sigma): rho is the distance to the nearest non-identical
/// neighbor, sigma solves `sum exp(-(d - rho)/sigma) = log2(k)` by bisection.
pub fn smooth_knn_dist(knn: &KnnGraph) -> (Vec<f64>, Vec<f64>) {
    const ITERS: usize = 64;
    const TOL: f64 = 1e-5;
    const MIN_K_DIST_SCALE: f64 = 1e-3;
    let n = knn.distances.len();
    let all_mean = {
        let total: f64 = knn.distances.iter().flatten().sum();
        let count = knn.distances.iter().map(Vec::len).sum::<usize>().max(1);
        total / count as f64
    };
    let mut rhos = vec![0.0; n];
    let mut sigmas = vec![1.0; n];
    for (i, dists) in knn.distances.iter().enumerate() {
        let k = dists.len();
        let target = (k as f64).log2();
        let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
        for _ in 0..ITERS {
            let psum: f64 = dists
                .iter()
                .map(|&d| {
                    let e = d - rho;
                    if e > 0.0 {
                        (-e / mid).exp()
                    } else {
                        1.0
                    }
                })
                .sum();
            if (psum - target).abs() < TOL {
                break;
            }
            if psum > target {
                hi = mid;
                mid = (lo + hi) / 2.0;
            } else {
                lo = mid;
                mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
            }
        }
        let mean_i = dists.iter().sum::<f64>() / k.max(1) as f64;
        if rho > 0.0 {
            mid = mid.max(MIN_K_DIST_SCALE * mean_i);
        } else {
            mid = mid.max(MIN_K_DIST_SCALE * all_mean);
        }
        rhos[i] = rho;
        sigmas[i] = mid;
    }
    (rhos, sigmas)
}

/// Membership strengths from kNN distances, symmetrized by fuzzy union.
pub fn fuzzy_simplicial_set(knn: &KnnGraph) -> FuzzyGraph {
    let n = knn.indices.len();
    let (rhos, sigmas) = smooth_knn_dist(knn);
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        for (&j, &d) in knn.indices[i].iter().zip(&knn.distances[i]) {
            let w = if d - rhos[i] <= 0.0 || sigmas[i] == 0.0 {
                1.0
            } else {
                (-(d - rhos[i]) / sigmas[i]).exp()
            };
            directed.insert((i, j), w);
        }
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(i, j), &a) in &directed {
        let b = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let w = a + b - a * b;
        rows[i].push((j, w));
        if b == 0.0 {
            rows[j].push((i, w));
        }
    }
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
        row.retain(|&(_, w)| w > 0.0);
    }
    FuzzyGraph { n, rows }
}

/// Fits `1 / (1 + a d^(2b))` to the offset exponential implied by
/// `min_dist` (spread fixed at 1) with damped Gauss–Newton.
pub fn find_ab_params(min_dist: f64) -> (f64, f64) {
    let spread = 1.0;
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();
    let sse = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let r = 1.0 / (1.0 + a * x.powf(2.0 * b)) - y;
                r * r
            })
            .sum()
    };
    let (mut a, mut b) = (1.0f64, 1.0f64);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b);
    for _ in 0..500 {
        // J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x == 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let r = f - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let (m00, m11) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
        let det = m00 * m11 - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = (m11 * ga - jab * gb) / det;
        let step_b = (m00 * gb - jab * ga) / det;
        let (na, nb) = (a - step_a, b - step_b);
        let new_cost = if na > 0.0 && nb > 0.0 { sse(na, nb) } else { f64::INFINITY };
        if new_cost < cost {
            let done = (cost - new_cost).abs() < 1e-15;
            a = na;
            b = nb;
            cost = new_cost;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

fn orthonormalize(cols: &mut [Vec<f64>]) {
    for c in 0..cols.len() {
        for _ in 0..2 {
            for p in 0..c {
                let (left, right) = cols.split_at_mut(c);
                let proj = dot(&left[p], &right[0]);
                for (x, y) in right[0].iter_mut().zip(&left[p]) {
                    *x -= proj * y;
                }
            }
        }
        let norm = dot(&cols[c], &cols[c]).sqrt();
        if norm > 1e-300 {
            cols[c].iter_mut().for_each(|x| *x /= norm);
        }
    }
}

/// Top eigenvectors of the normalized adjacency `D^-1/2 W D^-1/2`
/// (equivalently the bottom of the normalized Laplacian), with the leading
/// one dropped. `None` when the solver does not converge.
fn spectral_layout(graph: &FuzzyGraph, dim: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Vec<f64>>> {
    let n = graph.n;
    let k = dim + 1;
    if n <= k + 1 {
        return None;
    }
    let deg: Vec<f64> = graph.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();

    let vectors: Vec<Vec<f64>> = if n <= 400 {
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (i, row) in graph.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] = w * inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        order[1..k]
            .iter()
            .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
            .collect()
    } else {
        subspace_iteration(graph, &inv_sqrt, k, rng)?.into_iter().skip(1).collect()
    };
    let coords: Vec<Vec<f64>> = (0..n).map(|i| vectors.iter().map(|v| v[i]).collect()).collect();
    if coords.iter().flatten().any(|x| !x.is_finite()) {
        return None;
    }
    Some(coords)
}

/// Connected components as sorted member lists, ordered by smallest member.
fn connected_components(graph: &FuzzyGraph) -> Vec<Vec<usize>> {
    let mut comp = vec![usize::MAX; graph.n];
    let mut out = Vec::new();
    for start in 0..graph.n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &(j, _) in &graph.rows[i] {
                if comp[j] == usize::MAX {
                    comp[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

fn random_layout(n: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()).collect()
}

/// Spectral initialization. A disconnected graph is laid out one component
/// at a time, each component shrunk around a random anchor so components do
/// not overlap. Returns the coordinates and whether any part of the layout
/// fell back to random positions.
fn initial_layout(graph: &FuzzyGraph, dim: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, bool) {
    let components = connected_components(graph);
    if components.len() == 1 {
        return match spectral_layout(graph, dim, rng) {
            Some(coords) => (coords, false),
            None => {
                warn!("spectral initialization did not converge; using random initialization");
                (random_layout(graph.n, dim, 10.0, rng), true)
            }
        };
    }
    let anchors = random_layout(components.len(), dim, 10.0, rng);
    let mut coords = vec![Vec::new(); graph.n];
    let mut fell_back = false;
    for (c, members) in components.iter().enumerate() {
        let local_index: BTreeMap<usize, usize> = members.iter().enumerate().map(|(l, &g)| (g, l)).collect();
        let sub = FuzzyGraph {
            n: members.len(),
            rows: members
                .iter()
                .map(|&g| graph.rows[g].iter().map(|&(j, w)| (local_index[&j], w)).collect())
                .collect(),
        };
        let local = match spectral_layout(&sub, dim, rng) {
            Some(l) => l,
            None => {
                fell_back |= members.len() > dim + 2;
                random_layout(members.len(), dim, 1.0, rng)
            }
        };
        let max_abs = local.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        let nearest = anchors
            .iter()
            .enumerate()
            .filter(|&(o, _)| o != c)
            .map(|(_, a)| euclidean(a, &anchors[c]))
            .fold(f64::INFINITY, f64::min);
        let radius = (0.25 * nearest).min(1.0);
        let scale = if max_abs > 0.0 { radius / max_abs } else { 0.0 };
        for (l, &g) in members.iter().enumerate() {
            coords[g] = local[l].iter().zip(&anchors[c]).map(|(x, a)| a + scale * x).collect();
        }
    }
    if fell_back {
        warn!("spectral initialization failed for some components; those use random positions");
    }
    (coords, fell_back)
}

/// Block power iteration on `(M + I) / 2` with Rayleigh–Ritz, returning
/// the `k` leading Ritz vectors in decreasing eigenvalue order.
fn subspace_iteration(
    graph: &FuzzyGraph,
    inv_sqrt: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<f64>>> {
    const MAX_ITERS: usize = 600;
    const CHECK_EVERY: usize = 10;
    const TOL: f64 = 1e-4;
    let n = graph.n;
    let block = (k + 4).min(n);
    let apply = |v: &[f64]| -> Vec<f64> {
        graph
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row.iter().map(|&(j, w)| w * inv_sqrt[j] * v[j]).sum();
                0.5 * (s * inv_sqrt[i] + v[i])
            })
            .collect()
    };
    let mut q: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut q);
    for iter in 1..=MAX_ITERS {
        let mut z: Vec<Vec<f64>> = q.iter().map(|v| apply(v)).collect();
        if iter % CHECK_EVERY != 0 {
            orthonormalize(&mut z);
            q = z;
            continue;
        }
        // Rayleigh–Ritz on the current basis.
        let mut h = DMatrix::<f64>::zeros(block, block);
        for a in 0..block {
            for b in 0..block {
                h[(a, b)] = dot(&q[a], &z[b]);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let rotate = |basis: &[Vec<f64>], c: usize| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (r, v) in basis.iter().enumerate() {
                let coef = eig.eigenvectors[(r, c)];
                for (o, x) in out.iter_mut().zip(v) {
                    *o += coef * x;
                }
            }
            out
        };
        let ritz: Vec<Vec<f64>> = order.iter().map(|&c| rotate(&q, c)).collect();
        let images: Vec<Vec<f64>> = order.iter().map(|&c| rotate(&z, c)).collect();
        let converged = (0..k).all(|c| {
            let theta = eig.eigenvalues[order[c]];
            let res: f64 = images[c]
                .iter()
                .zip(&ritz[c])
                .map(|(y, x)| (y - theta * x).powi(2))
                .sum::<f64>()
                .sqrt();
            res < TOL
        });
        if converged {
            return Some(ritz.into_iter().take(k).collect());
        }
        let mut next = images;
        orthonormalize(&mut next);
        q = next;
    }
    None
}

fn clip(x: f64) -> f64 {
    x.clamp(-4.0, 4.0)
}

#[allow(clippy::too_many_arguments)]
fn optimize_layout(
    embedding: &mut [f64],
    dim: usize,
    heads: &[usize],
    tails: &[usize],
    epochs_per_sample: &[f64],
    n_epochs: usize,
    a: f64,
    b: f64,
    negative_sample_rate: usize,
    rng: &mut ChaCha8Rng,
) {
    let n = embedding.len() / dim;
    let initial_alpha = 1.0;
    let eps_neg: Vec<f64> = epochs_per_sample
        .iter()
        .map(|e| e / negative_sample_rate as f64)
        .collect();
    let mut next_sample = epochs_per_sample.to_vec();
    let mut next_neg = eps_neg.clone();
    let mut current = vec![0.0; dim];
    let mut other = vec![0.0; dim];

    for epoch in 0..n_epochs {
        let alpha = initial_alpha * (1.0 - epoch as f64 / n_epochs as f64);
        let ep = epoch as f64;
        for e in 0..heads.len() {
            if next_sample[e] > ep {
                continue;
            }
            let (j, k) = (heads[e], tails[e]);
            current.copy_from_slice(&embedding[j * dim..(j + 1) * dim]);
            other.copy_from_slice(&embedding[k * dim..(k + 1) * dim]);
            let dist_sq: f64 = current.iter().zip(&other).map(|(x, y)| (x - y) * (x - y)).sum();
            let coeff = if dist_sq > 0.0 {
                -2.0 * a * b * dist_sq.powf(b - 1.0) / (a * dist_sq.powf(b) + 1.0)
            } else {
                0.0
            };
            for d in 0..dim {
                let g = clip(coeff * (current[d] - other[d]));
                current[d] += g * alpha;
                other[d] -= g * alpha;
            }
            embedding[k * dim..(k + 1) * dim].copy_from_slice(&other);
            next_sample[e] += epochs_per_sample[e];

            let n_neg = ((ep - next_neg[e]) / eps_neg[e]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let s = rng.gen_range(0..n);
                if s == j {
                    continue;
                }
                let neg = &embedding[s * dim..(s + 1) * dim];
                let dist_sq: f64 = current.iter().zip(neg).map(|(x, y)| (x - y) * (x - y)).sum();
                let coeff = if dist_sq > 0.0 {
                    2.0 * b / ((0.001 + dist_sq) * (a * dist_sq.powf(b) + 1.0))
                } else {
                    0.0
                };
                for d in 0..dim {
                    let g = if coeff > 0.0 { clip(coeff * (current[d] - neg[d])) } else { 4.0 };
                    current[d] += g * alpha;
                }
            }
            next_neg[e] += n_neg as f64 * eps_neg[e];
            embedding[j * dim..(j + 1) * dim].copy_from_slice(&current);
        }
    }
}

/// Reduces `matrix` to `params.out_dim` dimensions. Corpora with at most
/// `n_neighbors` rows are passed through unchanged with the fallback flag set.
pub fn reduce(matrix: &EmbeddingMatrix, params: &ReductionParams) -> Result<ReducedMatrix> {
    params.validate()?;
    let n = matrix.len();
    if n < params.n_neighbors + 1 {
        warn!(
            "corpus of {n} classes is smaller than n_neighbors + 1 = {}; skipping reduction",
            params.n_neighbors + 1
        );
        let mut p = params.clone();
        p.identity_fallback = true;
        return Ok(ReducedMatrix {
            fqcns: matrix.fqcns.clone(),
            points: matrix.vectors.clone(),
            out_dim: matrix.dim,
            params: p,
            random_init: false,
        });
    }
    let dim = params.out_dim;
    let started = Instant::now();
    let knn = knn_graph(matrix, params.n_neighbors)?;
    let graph = fuzzy_simplicial_set(&knn);
    debug!("fuzzy graph over {n} points built in {:.2?}", started.elapsed());
    let mut rng = stage_rng(params.seed, "reduce");

    let started = Instant::now();
    let (coords, random_init) = initial_layout(&graph, dim, &mut rng);
    debug!("initial layout in {:.2?}", started.elapsed());
    let max_abs = coords.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let expansion = if max_abs > 0.0 { 10.0 / max_abs } else { 1.0 };
    let mut init: Vec<f64> = coords.into_iter().flatten().map(|x| x * expansion).collect();
    for x in &mut init {
        // Tiny jitter separates points that share a spectral position.
        *x += 1e-4 * (rng.gen::<f64>() * 2.0 - 1.0);
    }
    let mut embedding = init;
    // Rescale every axis to [0, 10].
    for d in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            lo = lo.min(embedding[i * dim + d]);
            hi = hi.max(embedding[i * dim + d]);
        }
        let span = hi - lo;
        for i in 0..n {
            let x = &mut embedding[i * dim + d];
            *x = if span > 0.0 { 10.0 * (*x - lo) / span } else { 5.0 };
        }
    }

    let max_w = graph.rows.iter().flatten().fold(0.0f64, |m, e| m.max(e.1));
    let cutoff = max_w / params.epochs as f64;
    let mut heads = Vec::new();
    let mut tails = Vec::new();
    let mut eps = Vec::new();
    for (i, row) in graph.rows.iter().enumerate() {
        for &(j, w) in row {
            if w >= cutoff && w > 0.0 {
                heads.push(i);
                tails.push(j);
                eps.push(max_w / w);
            }
        }
    }
    let (a, b) = find_ab_params(params.min_dist);
    let started = Instant::now();
    optimize_layout(
        &mut embedding,
        dim,
        &heads,
        &tails,
        &eps,
        params.epochs,
        a,
        b,
        params.negative_sample_rate.max(1),
        &mut rng,
    );
    debug!("{} epochs over {} edges in {:.2?}", params.epochs, heads.len(), started.elapsed());
    if embedding.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invariant("reduction produced non-finite coordinates".into()));
    }
    Ok(ReducedMatrix {
        fqcns: matrix.fqcns.clone(),
        points: embedding.chunks(dim).map(<[f64]>::to_vec).collect(),
        out_dim: dim,
        params: params.clone(),
        random_init,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Cosine => cosine_distance(a, b),
        }
    }
}

fn neighbor_ranks(points: &[Vec<f64>], metric: Metric) -> Vec<Vec<usize>> {
    let n = points.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (metric.distance(&points[i], &points[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
            others.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Trustworthiness of a low-dimensional layout: penalizes output-space
/// neighbors that were far away in the input space. 1.0 is perfect.
pub fn trustworthiness(
    high: &[Vec<f64>],
    low: &[Vec<f64>],
    k: usize,
    high_metric: Metric,
) -> f64 {
    let n = high.len();
    assert_eq!(n, low.len());
    assert!(k > 0 && 2 * n > 3 * k + 1, "k too large for trustworthiness");
    let high_order = neighbor_ranks(high, high_metric);
    let low_order = neighbor_ranks(low, Metric::Euclidean);
    let mut penalty = 0.0;
    for i in 0..n {
        let mut rank = vec![0usize; n];
        for (r, &j) in high_order[i].iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in &low_order[i][..k] {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty
}
