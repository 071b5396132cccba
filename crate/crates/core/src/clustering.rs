//! HDBSCAN over reduced points.
//!
//! Core distances → Prim MST over mutual-reachability distances →
//! single-linkage hierarchy → condensed tree → excess-of-mass selection.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reduction::{euclidean, ReducedMatrix};

pub const NOISE: i64 = -1;

/// When the hierarchy never splits into two clusters, the whole data set is
/// kept as one cluster and only points whose drop-out distance exceeds this
/// multiple of the median drop-out distance are labeled noise.
pub const SINGLE_CLUSTER_OUTLIER_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub fqcns: Vec<String>,
    /// Cluster id `>= 0`, or [`NOISE`].
    pub labels: Vec<i64>,
    pub min_cluster_size: usize,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.labels.iter().filter(|&&l| l >= 0).map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn cluster_sizes(&self) -> BTreeMap<i64, usize> {
        let mut out = BTreeMap::new();
        for &l in &self.labels {
            if l != NOISE {
                *out.entry(l).or_insert(0) += 1;
            }
        }
        out
    }

    /// `{fqcn: label}` for debugging dumps.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, i64> = self
            .fqcns
            .iter()
            .map(String::as_str)
            .zip(self.labels.iter().copied())
            .collect();
        serde_json::to_string_pretty(&map).expect("labels serialize")
    }
}

/// Euclidean distance from each point to its `min_samples`-th nearest
/// other point.
pub fn core_distances(points: &[Vec<f64>], min_samples: usize) -> Vec<f64> {
    let n = points.len();
    assert!(min_samples >= 1 && min_samples < n, "min_samples must be in 1..n");
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclidean(&points[i], &points[j]))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect()
}

/// Full symmetric mutual-reachability matrix,
/// `max(core(a), core(b), d(a, b))`, with zero diagonal.
pub fn mutual_reachability(points: &ReducedMatrix, min_samples: usize) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    if min_samples == 0 || min_samples >= n {
        return Err(Error::InvalidInput(format!("min_samples = {min_samples} must be in 1..{n}")));
    }
    let core = core_distances(&points.points, min_samples);
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        euclidean(&points.points[i], &points.points[j])
                            .max(core[i])
                            .max(core[j])
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm over mutual-reachability distances, O(n²) time and
/// O(n) memory. Ties pick the lowest vertex index.
pub fn minimum_spanning_tree(points: &[Vec<f64>], core: &[f64]) -> Vec<MstEdge> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = euclidean(&points[current], &points[j]).max(core[current]).max(core[j]);
            if w < best[j] {
                best[j] = w;
                parent[j] = current;
            }
            if best[j] < next_w || next == usize::MAX {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: parent[next].min(next),
            b: parent[next].max(next),
            weight: next_w,
        });
        current = next;
    }
    edges
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkageNode {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Hierarchy node id currently representing each root.
    label: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            label: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Single-linkage dendrogram from MST edges. Leaves are `0..n`; internal
/// node `i` of the result has id `n + i`.
pub fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<LinkageNode> {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut uf = UnionFind::new(n);
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        let size = uf.size[ra] + uf.size[rb];
        out.push(LinkageNode {
            left: uf.label[ra],
            right: uf.label[rb],
            distance: e.weight,
            size,
        });
        let (big, small) = if uf.size[ra] >= uf.size[rb] { (ra, rb) } else { (rb, ra) };
        uf.parent[small] = big;
        uf.size[big] = size;
        uf.label[big] = n + out.len() - 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedNode {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

/// Condensed hierarchy. Point ids are `0..n`, cluster ids start at `n`
/// (the root) and children always have larger ids than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub nodes: Vec<CondensedNode>,
    pub stabilities: BTreeMap<usize, f64>,
}

fn lambda_of(distance: f64) -> f64 {
    // Zero distances (duplicate points) get a large finite density so
    // stability sums stay comparable.
    1.0 / distance.max(1e-12)
}

fn leaves_of(hierarchy: &[LinkageNode], n: usize, node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let h = &hierarchy[x - n];
            stack.push(h.right);
            stack.push(h.left);
        }
    }
}

pub fn condense(hierarchy: &[LinkageNode], n: usize, min_cluster_size: usize) -> CondensedTree {
    let size_of = |node: usize| if node < n { 1 } else { hierarchy[node - n].size };
    let mut nodes = Vec::new();
    if n < 2 {
        return CondensedTree {
            n_points: n,
            nodes,
            stabilities: BTreeMap::from([(n, 0.0)]),
        };
    }
    let root = 2 * n - 2;
    let mut relabel: HashMap<usize, usize> = HashMap::from([(root, n)]);
    let mut next_label = n + 1;
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        let h = hierarchy[node - n];
        let lambda = lambda_of(h.distance);
        let parent = relabel[&node];
        let (ls, rs) = (size_of(h.left), size_of(h.right));
        let fall_out = |child: usize, nodes: &mut Vec<CondensedNode>| {
            let mut pts = Vec::new();
            leaves_of(hierarchy, n, child, &mut pts);
            for p in pts {
                nodes.push(CondensedNode { parent, child: p, lambda, child_size: 1 });
            }
        };
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(h.left, ls), (h.right, rs)] {
                    relabel.insert(child, next_label);
                    nodes.push(CondensedNode { parent, child: next_label, lambda, child_size: size });
                    next_label += 1;
                    // min_cluster_size >= 2, so a cluster child is never a leaf.
                    stack.push(child);
                }
            }
            (false, false) => {
                fall_out(h.left, &mut nodes);
                fall_out(h.right, &mut nodes);
            }
            (true, false) | (false, true) => {
                let (keep, drop) = if ls >= min_cluster_size { (h.left, h.right) } else { (h.right, h.left) };
                fall_out(drop, &mut nodes);
                if keep >= n {
                    relabel.insert(keep, parent);
                    stack.push(keep);
                } else {
                    nodes.push(CondensedNode { parent, child: keep, lambda, child_size: 1 });
                }
            }
        }
    }

    let mut birth: HashMap<usize, f64> = HashMap::from([(n, 0.0)]);
    for nd in &nodes {
        if nd.child >= n {
            birth.insert(nd.child, nd.lambda);
        }
    }
    let mut stabilities: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for nd in &nodes {
        let s = stabilities.get_mut(&nd.parent).expect("parent is a cluster");
        *s += (nd.lambda - birth[&nd.parent]) * nd.child_size as f64;
    }
    CondensedTree {
        n_points: n,
        nodes,
        stabilities,
    }
}

/// Excess-of-mass selection over non-root clusters. Returns the selected
/// cluster ids, empty when the root never splits.
pub fn select_clusters(tree: &CondensedTree) -> Vec<usize> {
    let n = tree.n_points;
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for nd in &tree.nodes {
        if nd.child >= n {
            children.entry(nd.parent).or_default().push(nd.child);
        }
    }
    let mut stability = tree.stabilities.clone();
    let mut selected: BTreeMap<usize, bool> = stability.keys().map(|&c| (c, c != n)).collect();
    // Children have larger ids than parents, so descending order visits
    // every child before its parent.
    let ids: Vec<usize> = stability.keys().rev().copied().collect();
    for c in ids {
        if c == n {
            continue;
        }
        let subtree: f64 = children.get(&c).map_or(0.0, |ch| ch.iter().map(|x| stability[x]).sum());
        if subtree > stability[&c] {
            selected.insert(c, false);
            stability.insert(c, subtree);
        } else {
            let mut stack: Vec<usize> = children.get(&c).cloned().unwrap_or_default();
            while let Some(d) = stack.pop() {
                selected.insert(d, false);
                if let Some(ch) = children.get(&d) {
                    stack.extend(ch);
                }
            }
        }
    }
    selected.into_iter().filter(|&(_, s)| s).map(|(c, _)| c).collect()
}

/// Clusters `points` with HDBSCAN. `min_cluster_size` must be at least 2.
pub fn cluster(points: &ReducedMatrix, min_cluster_size: usize, min_samples: usize) -> Result<ClusterAssignment> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("clustering needs at least 2 points, got {n}")));
    }
    if min_cluster_size < 2 {
        return Err(Error::InvalidInput("min_cluster_size must be >= 2".into()));
    }
    if min_samples == 0 {
        return Err(Error::InvalidInput("min_samples must be >= 1".into()));
    }
    let finish = |labels: Vec<i64>| ClusterAssignment {
        fqcns: points.fqcns.clone(),
        labels,
        min_cluster_size,
    };
    if n < min_cluster_size {
        return Ok(finish(vec![NOISE; n]));
    }
    let first = &points.points[0];
    if points.points.iter().all(|p| p == first) {
        return Ok(finish(vec![0; n]));
    }

    let core = core_distances(&points.points, min_samples.min(n - 1));
    let mst = minimum_spanning_tree(&points.points, &core);
    let hierarchy = single_linkage(n, &mst);
    let tree = condense(&hierarchy, n, min_cluster_size);
    let selected = select_clusters(&tree);

    let mut parent_of: HashMap<usize, usize> = HashMap::new();
    let mut point_lambda = vec![f64::INFINITY; n];
    for nd in &tree.nodes {
        parent_of.insert(nd.child, nd.parent);
        if nd.child < n {
            point_lambda[nd.child] = nd.lambda;
        }
    }

    let mut raw = vec![usize::MAX; n];
    if selected.is_empty() {
        // Single cluster: keep everything except far outliers.
        let mut dropout: Vec<f64> = point_lambda.iter().map(|&l| 1.0 / l).collect();
        let mut sorted = dropout.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[(n - 1) / 2];
        for (p, d) in dropout.iter_mut().enumerate() {
            if *d <= SINGLE_CLUSTER_OUTLIER_FACTOR * median {
                raw[p] = n;
            }
        }
    } else {
        let chosen: std::collections::HashSet<usize> = selected.iter().copied().collect();
        for (p, slot) in raw.iter_mut().enumerate() {
            let mut node = p;
            while let Some(&par) = parent_of.get(&node) {
                if chosen.contains(&par) {
                    *slot = par;
                    break;
                }
                node = par;
            }
        }
    }

    // Contiguous ids ordered by each cluster's first point.
    let mut ids: HashMap<usize, i64> = HashMap::new();
    let labels = raw
        .iter()
        .map(|&c| {
            if c == usize::MAX {
                NOISE
            } else {
                let next = ids.len() as i64;
                *ids.entry(c).or_insert(next)
            }
        })
        .collect();
    Ok(finish(labels))
}
