use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::assignment::max_weight_assignment;
use crate::architecture::Architecture;
use crate::error::{Error, Result};

/// Operation counts for transforming architecture `i` into `j`. Averaged
/// reports carry `f64` counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformCost<T = u64> {
    pub add_c: T,
    pub rem_c: T,
    pub add_e: T,
    pub rem_e: T,
    pub mov_e: T,
    pub mto: T,
    pub aco_i: T,
    pub aco_j: T,
}

impl TransformCost {
    pub fn to_f64(&self) -> TransformCost<f64> {
        TransformCost {
            add_c: self.add_c as f64,
            rem_c: self.rem_c as f64,
            add_e: self.add_e as f64,
            rem_e: self.rem_e as f64,
            mov_e: self.mov_e as f64,
            mto: self.mto as f64,
            aco_i: self.aco_i as f64,
            aco_j: self.aco_j as f64,
        }
    }
}

impl TransformCost<f64> {
    /// Field-wise mean.
    pub fn mean(costs: &[TransformCost<f64>]) -> TransformCost<f64> {
        let n = costs.len().max(1) as f64;
        let avg = |f: fn(&TransformCost<f64>) -> f64| costs.iter().map(f).sum::<f64>() / n;
        TransformCost {
            add_c: avg(|c| c.add_c),
            rem_c: avg(|c| c.rem_c),
            add_e: avg(|c| c.add_e),
            rem_e: avg(|c| c.rem_e),
            mov_e: avg(|c| c.mov_e),
            mto: avg(|c| c.mto),
            aco_i: avg(|c| c.aco_i),
            aco_j: avg(|c| c.aco_j),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A2a {
    /// Percentage in `[0, 100]`.
    pub score: f64,
    pub cost: TransformCost,
}

/// Operations to build `arch` from nothing: one add per module plus an add
/// and a move per entity.
pub fn aco(arch: &Architecture) -> u64 {
    (arch.module_count() + 2 * arch.entity_count()) as u64
}

/// Architecture-to-architecture similarity `(1 - mto / (aco_i + aco_j)) * 100`.
///
/// Modules are put in correspondence by a maximum-weight matching on shared
/// entity counts. Entities only in `i` are removed, entities only in `j` are
/// added and then moved into place, and shared entities outside their
/// matched module cost one move each. Unmatched modules are added or
/// removed.
pub fn a2a(arch_i: &Architecture, arch_j: &Architecture) -> Result<A2a> {
    if arch_i.is_empty() && arch_j.is_empty() {
        return Err(Error::InvalidInput("both architectures are empty".into()));
    }
    let ents_i = arch_i.entities();
    let ents_j = arch_j.entities();
    let common: BTreeSet<&str> = ents_i.intersection(&ents_j).copied().collect();
    let rem_e = (ents_i.len() - common.len()) as u64;
    let add_e = (ents_j.len() - common.len()) as u64;

    let idx_i: BTreeMap<&str, usize> = arch_i.modules.keys().enumerate().map(|(x, k)| (k.as_str(), x)).collect();
    let idx_j: BTreeMap<&str, usize> = arch_j.modules.keys().enumerate().map(|(x, k)| (k.as_str(), x)).collect();
    let mem_i = arch_i.membership();
    let mem_j = arch_j.membership();
    let mut overlap = vec![vec![0i64; idx_j.len()]; idx_i.len()];
    for e in &common {
        overlap[idx_i[mem_i[e]]][idx_j[mem_j[e]]] += 1;
    }
    let pairs = max_weight_assignment(&overlap);
    let matched_overlap: u64 = pairs.iter().map(|&(a, b)| overlap[a][b] as u64).sum();
    let matches = pairs.len() as u64;

    let add_c = arch_j.module_count() as u64 - matches;
    let rem_c = arch_i.module_count() as u64 - matches;
    let mov_e = add_e + common.len() as u64 - matched_overlap;
    let mto = add_c + rem_c + add_e + rem_e + mov_e;
    let (aco_i, aco_j) = (aco(arch_i), aco(arch_j));
    let score = (1.0 - mto as f64 / (aco_i + aco_j) as f64) * 100.0;
    Ok(A2a {
        score,
        cost: TransformCost {
            add_c,
            rem_c,
            add_e,
            rem_e,
            mov_e,
            mto,
            aco_i,
            aco_j,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_scores_hundred() {
        let a = Architecture::from_modules([("m", vec!["a.A", "a.B"]), ("n", vec!["b.C"])]).unwrap();
        let r = a2a(&a, &a).unwrap();
        assert_eq!(r.cost.mto, 0);
        assert_eq!(r.score, 100.0);
    }

    #[test]
    fn split_in_two_by_hand() {
        let i = Architecture::from_modules([("m1", vec!["a", "b"])]).unwrap();
        let j = Architecture::from_modules([("m1", vec!["a"]), ("m2", vec!["b"])]).unwrap();
        let r = a2a(&i, &j).unwrap();
        assert_eq!(r.cost.mto, 2);
        assert_eq!((r.cost.add_c, r.cost.mov_e), (1, 1));
        assert_eq!((r.cost.aco_i, r.cost.aco_j), (5, 6));
        assert!((r.score - (1.0 - 2.0 / 11.0) * 100.0).abs() < 1e-12);
    }

    #[test]
    fn from_null_costs_full_construction() {
        let a = Architecture::from_modules([("m", vec!["a.A", "a.B"]), ("n", vec!["b.C"])]).unwrap();
        let r = a2a(&Architecture::new(), &a).unwrap();
        assert_eq!(r.cost.mto, aco(&a));
        assert_eq!(r.score, 0.0);
        assert!(a2a(&Architecture::new(), &Architecture::new()).is_err());
    }
}
