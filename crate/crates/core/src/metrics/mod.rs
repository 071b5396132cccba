//! Architecture comparison and modularization metrics.
//!
//! * [`a2a`]: system-level similarity from the minimum transform cost.
//! * [`h_c_scores`]: homogeneity and completeness over a contingency table.
//! * [`mq`]: modularization quality over a class dependency graph.

mod a2a;
mod assignment;
mod mq;
mod similarity;

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

pub use a2a::{a2a, A2a, TransformCost};
pub use assignment::max_weight_assignment;
pub use mq::{load_dependencies, mq, parse_dependencies, DependencyGraph, Mq};
pub use similarity::{contingency, entropies, h_c_scores, ContingencyTable, EntropyDecomposition, HcScores};

use crate::architecture::Architecture;
use crate::error::Result;

/// Scores of one recovered architecture against ground truth. `h_score`
/// and `c_score` are fractions in `[0, 1]`; `a2a` and `mq_normalized` are
/// percentages. Averaged reports use `f64` transform counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T = u64> {
    pub a2a: f64,
    pub h_score: f64,
    pub c_score: f64,
    pub mq_sum: Option<f64>,
    pub mq_normalized: Option<f64>,
    pub transform_cost: TransformCost<T>,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl MetricsReport {
    pub fn to_f64(&self) -> MetricsReport<f64> {
        MetricsReport {
            a2a: self.a2a,
            h_score: self.h_score,
            c_score: self.c_score,
            mq_sum: self.mq_sum,
            mq_normalized: self.mq_normalized,
            transform_cost: self.transform_cost.to_f64(),
            params: self.params.clone(),
        }
    }
}

impl MetricsReport<f64> {
    /// Arithmetic mean of every numeric field. MQ is averaged only when
    /// every report has it. `params` is taken from the first report.
    pub fn mean(reports: &[MetricsReport<f64>]) -> Option<MetricsReport<f64>> {
        let first = reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport<f64>) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: fn(&MetricsReport<f64>) -> Option<f64>| {
            reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        let costs: Vec<TransformCost<f64>> = reports.iter().map(|r| r.transform_cost).collect();
        Some(MetricsReport {
            a2a: avg(|r| r.a2a),
            h_score: avg(|r| r.h_score),
            c_score: avg(|r| r.c_score),
            mq_sum: avg_opt(|r| r.mq_sum),
            mq_normalized: avg_opt(|r| r.mq_normalized),
            transform_cost: TransformCost::mean(&costs),
            params: first.params.clone(),
        })
    }
}

/// Computes a2a, h and c, plus MQ when a dependency graph is given.
pub fn evaluate(recovered: &Architecture, ground_truth: &Architecture, deps: Option<&DependencyGraph>) -> Result<MetricsReport> {
    let table = contingency(ground_truth, recovered)?;
    let hc = h_c_scores(&table);
    let sim = a2a(recovered, ground_truth)?;
    let quality = deps.map(|d| mq(recovered, d));
    Ok(MetricsReport {
        a2a: sim.score,
        h_score: hc.h,
        c_score: hc.c,
        mq_sum: quality.as_ref().map(|q| q.mq_sum),
        mq_normalized: quality.as_ref().map(|q| q.mq_normalized),
        transform_cost: sim.cost,
        params: serde_json::Value::Null,
    })
}

/// Adjusted Rand Index between two labelings of the same items. Every
/// distinct label value, noise included, is one group.
pub fn adjusted_rand_index<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut ids_a: HashMap<&A, usize> = HashMap::new();
    let mut ids_b: HashMap<&B, usize> = HashMap::new();
    let mut pairs: HashMap<(usize, usize), u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        let la = ids_a.len();
        let ia = *ids_a.entry(x).or_insert(la);
        let lb = ids_b.len();
        let ib = *ids_b.entry(y).or_insert(lb);
        *pairs.entry((ia, ib)).or_insert(0) += 1;
    }
    let comb2 = |k: u64| (k * k.saturating_sub(1)) as f64 / 2.0;
    let mut rows = vec![0u64; ids_a.len()];
    let mut cols = vec![0u64; ids_b.len()];
    let mut index = 0.0;
    for (&(i, j), &c) in &pairs {
        rows[i] += c;
        cols[j] += c;
        index += comb2(c);
    }
    let sum_rows: f64 = rows.iter().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.iter().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(n as u64);
    let max_index = (sum_rows + sum_cols) / 2.0;
    if (max_index - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ari_perfect_and_permuted() {
        assert!((adjusted_rand_index(&[0, 0, 1, 1, 2], &[5, 5, 3, 3, 9]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ari_known_value() {
        // sklearn.metrics.adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]);
        assert!((v - 0.571_428_571_428_571_5).abs() < 1e-12, "{v}");
    }
}
