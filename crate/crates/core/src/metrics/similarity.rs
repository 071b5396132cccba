use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::architecture::Architecture;
use crate::error::{Error, Result};

/// `counts[i][j]` = classes in developer module `i` and recovered module
/// `j`, over the classes both architectures contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub dev_modules: Vec<String>,
    pub rec_modules: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ContingencyTable {
    /// Builds a table from raw counts with generated module names.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let cols = counts.first().map_or(0, Vec::len);
        let n = counts.iter().flatten().sum();
        ContingencyTable {
            dev_modules: (0..counts.len()).map(|i| format!("c{i}")).collect(),
            rec_modules: (0..cols).map(|j| format!("k{j}")).collect(),
            counts,
            n,
        }
    }

    pub fn transpose(&self) -> Self {
        let rows = self.counts.len();
        let cols = self.rec_modules.len();
        let counts = (0..cols).map(|j| (0..rows).map(|i| self.counts[i][j]).collect()).collect();
        ContingencyTable {
            dev_modules: self.rec_modules.clone(),
            rec_modules: self.dev_modules.clone(),
            counts,
            n: self.n,
        }
    }

    fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<u64> {
        (0..self.rec_modules.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

/// Co-occurrence counts over the classes `dev` and `rec` share. Modules
/// with no shared class are left out.
pub fn contingency(dev: &Architecture, rec: &Architecture) -> Result<ContingencyTable> {
    let rec_of = rec.membership();
    let mut cells: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for (d, members) in &dev.modules {
        for fqcn in members {
            if let Some(&r) = rec_of.get(fqcn.as_str()) {
                *cells.entry((d.as_str(), r)).or_insert(0) += 1;
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::InvalidInput("the architectures share no classes".into()));
    }
    let dev_modules: Vec<String> = dev
        .modules
        .keys()
        .filter(|d| cells.keys().any(|(x, _)| x == d))
        .cloned()
        .collect();
    let rec_modules: Vec<String> = rec
        .modules
        .keys()
        .filter(|r| cells.keys().any(|(_, y)| y == r))
        .cloned()
        .collect();
    let counts: Vec<Vec<u64>> = dev_modules
        .iter()
        .map(|d| {
            rec_modules
                .iter()
                .map(|r| cells.get(&(d.as_str(), r.as_str())).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    let n = cells.values().sum();
    Ok(ContingencyTable {
        dev_modules,
        rec_modules,
        counts,
        n,
    })
}

/// Entropies in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecomposition {
    pub h_c: f64,
    pub h_k: f64,
    pub h_c_given_k: f64,
    pub h_k_given_c: f64,
}

pub fn entropies(table: &ContingencyTable) -> EntropyDecomposition {
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let marginal = |sums: &[u64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            if a == 0 {
                continue;
            }
            let a = a as f64;
            h_c_given_k -= a / n * (a / cols[j] as f64).ln();
            h_k_given_c -= a / n * (a / rows[i] as f64).ln();
        }
    }
    EntropyDecomposition {
        h_c: marginal(&rows),
        h_k: marginal(&cols),
        h_c_given_k: h_c_given_k.max(0.0),
        h_k_given_c: h_k_given_c.max(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcScores {
    pub h: f64,
    pub c: f64,
    pub entropies: EntropyDecomposition,
}

/// Homogeneity `1 - H(C|K)/H(C)` and completeness `1 - H(K|C)/H(K)`;
/// each is 1 when its denominator entropy is zero.
pub fn h_c_scores(table: &ContingencyTable) -> HcScores {
    let e = entropies(table);
    let h = if e.h_c == 0.0 { 1.0 } else { (1.0 - e.h_c_given_k / e.h_c).clamp(0.0, 1.0) };
    let c = if e.h_k == 0.0 { 1.0 } else { (1.0 - e.h_k_given_c / e.h_k).clamp(0.0, 1.0) };
    HcScores { h, c, entropies: e }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions_are_diagonal() {
        let a = Architecture::from_modules([("x", vec!["a.A", "a.B", "a.C"]), ("y", vec!["b.D", "b.E"])]).unwrap();
        let t = contingency(&a, &a).unwrap();
        assert_eq!(t.counts, vec![vec![3, 0], vec![0, 2]]);
        assert_eq!(t.n, 5);
        let s = h_c_scores(&t);
        assert_eq!((s.h, s.c), (1.0, 1.0));
    }

    #[test]
    fn one_giant_recovered_module() {
        let dev = Architecture::from_modules([("x", vec!["a.A", "a.B"]), ("y", vec!["b.C", "b.D"])]).unwrap();
        let rec = Architecture::from_modules([("all", vec!["a.A", "a.B", "b.C", "b.D"])]).unwrap();
        let t = contingency(&dev, &rec).unwrap();
        assert_eq!(t.counts, vec![vec![2], vec![2]]);
        let s = h_c_scores(&t);
        assert_eq!(s.c, 1.0);
        assert!(s.h.abs() < 1e-12);
    }

    #[test]
    fn hand_built_three_by_two() {
        // dev: x={1,2,3}, y={4,5}, z={6}; rec: p={1,2,4}, q={3,5,6}
        let dev = Architecture::from_modules([
            ("x", vec!["c.C1", "c.C2", "c.C3"]),
            ("y", vec!["c.C4", "c.C5"]),
            ("z", vec!["c.C6"]),
        ])
        .unwrap();
        let rec = Architecture::from_modules([
            ("p", vec!["c.C1", "c.C2", "c.C4"]),
            ("q", vec!["c.C3", "c.C5", "c.C6"]),
        ])
        .unwrap();
        let t = contingency(&dev, &rec).unwrap();
        assert_eq!(t.counts, vec![vec![2, 1], vec![1, 1], vec![0, 1]]);
        assert_eq!(t.n, 6);
    }

    #[test]
    fn disjoint_universes_fail() {
        let a = Architecture::from_modules([("x", vec!["a.A"])]).unwrap();
        let b = Architecture::from_modules([("x", vec!["b.B"])]).unwrap();
        assert!(contingency(&a, &b).is_err());
    }
}
