use std::collections::BTreeMap;
use std::fs;

use modrecover_core::metrics::{
    a2a, contingency, evaluate, h_c_scores, load_dependencies, max_weight_assignment, mq, ContingencyTable, DependencyGraph,
};
use modrecover_core::{Architecture, Error};
use proptest::prelude::*;

/// `labels[e]` is the module of entity `e`, or `None` when absent.
fn arch_from_labels(labels: &[Option<u8>]) -> Architecture {
    let mut modules: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (e, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            modules.entry(format!("m{l}")).or_default().push(format!("p.E{e}"));
        }
    }
    Architecture::from_modules(modules).unwrap()
}

fn renamed(a: &Architecture) -> Architecture {
    Architecture::from_modules(a.modules.iter().map(|(k, v)| (format!("zz_{k}_renamed"), v.iter().cloned().collect::<Vec<_>>())))
        .unwrap()
}

fn partial_labels(n: usize) -> impl Strategy<Value = Vec<Option<u8>>> {
    prop::collection::vec(prop::option::weighted(0.8, 0u8..5), 1..n)
}

fn full_labels(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 1..n)
}

proptest! {
    #[test]
    fn a2a_identity_is_hundred(labels in partial_labels(12)) {
        let a = arch_from_labels(&labels);
        prop_assume!(!a.is_empty());
        let r = a2a(&a, &a).unwrap();
        prop_assert_eq!(r.cost.mto, 0);
        prop_assert_eq!(r.score, 100.0);
    }

    #[test]
    fn a2a_cost_is_consistent(x in partial_labels(12), y in partial_labels(12)) {
        let (a, b) = (arch_from_labels(&x), arch_from_labels(&y));
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let r = a2a(&a, &b).unwrap();
        let c = r.cost;
        prop_assert_eq!(c.mto, c.add_c + c.rem_c + c.add_e + c.rem_e + c.mov_e);
        prop_assert!(c.mto <= c.aco_i + c.aco_j);
        prop_assert!((0.0..=100.0).contains(&r.score));
    }

    #[test]
    fn a2a_symmetric_on_shared_universe(x in full_labels(12), seed in any::<u64>()) {
        let a = arch_from_labels(&x.iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let y: Vec<Option<u8>> = x.iter().enumerate().map(|(i, _)| Some(((seed >> (i % 60)) % 4) as u8)).collect();
        let b = arch_from_labels(&y);
        let ab = a2a(&a, &b).unwrap();
        let ba = a2a(&b, &a).unwrap();
        prop_assert_eq!(ab.cost.mto, ba.cost.mto);
        prop_assert!((ab.score - ba.score).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_module_names(x in full_labels(15), y in full_labels(15)) {
        let n = x.len().min(y.len());
        let a = arch_from_labels(&x[..n].iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let b = arch_from_labels(&y[..n].iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let deps = DependencyGraph::from_edges((0..n.saturating_sub(1)).map(|i| (format!("p.E{i}"), format!("p.E{}", i + 1))));
        let m1 = evaluate(&a, &b, Some(&deps)).unwrap();
        let m2 = evaluate(&renamed(&a), &renamed(&b), Some(&deps)).unwrap();
        prop_assert!((m1.a2a - m2.a2a).abs() < 1e-12);
        prop_assert!((m1.h_score - m2.h_score).abs() < 1e-12);
        prop_assert!((m1.c_score - m2.c_score).abs() < 1e-12);
        prop_assert!((m1.mq_sum.unwrap() - m2.mq_sum.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hc_in_unit_interval_and_dual(x in full_labels(20), y in full_labels(20)) {
        let n = x.len().min(y.len());
        let a = arch_from_labels(&x[..n].iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let b = arch_from_labels(&y[..n].iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let fwd = h_c_scores(&contingency(&a, &b).unwrap());
        let rev = h_c_scores(&contingency(&b, &a).unwrap());
        for v in [fwd.h, fwd.c] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
        prop_assert!((fwd.h - rev.c).abs() < 1e-9);
        let e = fwd.entropies;
        prop_assert!(e.h_c_given_k >= -1e-15 && e.h_c_given_k <= e.h_c + 1e-12);
        prop_assert!(e.h_k_given_c >= -1e-15 && e.h_k_given_c <= e.h_k + 1e-12);
    }

    #[test]
    fn table_counts_sum_to_n(x in full_labels(20), y in full_labels(20)) {
        let n = x.len().min(y.len());
        let a = arch_from_labels(&x[..n].iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let b = arch_from_labels(&y[..n].iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let t = contingency(&a, &b).unwrap();
        prop_assert_eq!(t.counts.iter().flatten().sum::<u64>(), t.n);
        prop_assert_eq!(t.n as usize, n);
    }

    #[test]
    fn mq_bounds(x in full_labels(15), edges in prop::collection::vec((0usize..15, 0usize..15), 0..40)) {
        let a = arch_from_labels(&x.iter().map(|&l| Some(l)).collect::<Vec<_>>());
        let deps = DependencyGraph::from_edges(edges.iter().map(|&(s, d)| (format!("p.E{s}"), format!("p.E{d}"))));
        let q = mq(&a, &deps);
        prop_assert!(q.cluster_factors.values().all(|&cf| (0.0..=1.0).contains(&cf)));
        prop_assert!((0.0..=100.0).contains(&q.mq_normalized));
    }

    #[test]
    fn hungarian_matches_brute_force(w in prop::collection::vec(prop::collection::vec(0i64..20, 4), 1..5)) {
        fn best(w: &[Vec<i64>], row: usize, used: &mut [bool]) -> i64 {
            if row == w.len() {
                return 0;
            }
            let mut b = i64::MIN;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    b = b.max(w[row][j] + best(w, row + 1, used));
                    used[j] = false;
                }
            }
            b
        }
        let pairs = max_weight_assignment(&w);
        prop_assert_eq!(pairs.len(), w.len());
        let total: i64 = pairs.iter().map(|&(i, j)| w[i][j]).sum();
        prop_assert_eq!(total, best(&w, 0, &mut [false; 4]));
    }
}

#[test]
fn a2a_differs_by_direction_when_universes_differ() {
    // Adding an entity costs an add and a move; removing one costs only the remove.
    let i = Architecture::from_modules([("m", vec!["a"])]).unwrap();
    let j = Architecture::from_modules([("m", vec!["a", "b"])]).unwrap();
    assert_eq!(a2a(&i, &j).unwrap().cost.mto, 2);
    assert_eq!(a2a(&j, &i).unwrap().cost.mto, 1);
}

#[test]
fn contingency_examples() {
    let a = Architecture::from_modules([("x", vec!["a", "b", "c"]), ("y", vec!["d", "e"])]).unwrap();
    let t = contingency(&a, &a).unwrap();
    assert_eq!(t.counts, vec![vec![3, 0], vec![0, 2]]);
    assert_eq!(t.n, 5);
    let giant = Architecture::from_modules([("all", vec!["a", "b", "c", "d", "e"])]).unwrap();
    let t = contingency(&a, &giant).unwrap();
    assert_eq!(t.counts, vec![vec![3], vec![2]]);
    let other = Architecture::from_modules([("z", vec!["q"])]).unwrap();
    assert!(matches!(contingency(&a, &other), Err(Error::InvalidInput(_))));
}

#[test]
fn single_recovered_module_over_two_equal_dev_modules() {
    let s = h_c_scores(&ContingencyTable::from_counts(vec![vec![4], vec![4]]));
    assert_eq!(s.c, 1.0);
    assert!(s.h.abs() < 1e-12);
}

#[test]
fn coarse_recovery_is_complete_but_not_homogeneous() {
    // Seven developer modules of 3 classes; three recovered modules each
    // swallowing whole developer modules.
    let mut dev = BTreeMap::new();
    for d in 0..7 {
        dev.insert(format!("d{d}"), (0..3).map(|c| format!("p{d}.C{c}")).collect::<Vec<_>>());
    }
    let groups = [vec![0, 1, 2], vec![3, 4], vec![5, 6]];
    let rec: BTreeMap<String, Vec<String>> = groups
        .iter()
        .enumerate()
        .map(|(k, ds)| (format!("k{k}"), ds.iter().flat_map(|d| dev[&format!("d{d}")].clone()).collect()))
        .collect();
    let dev = Architecture::from_modules(dev).unwrap();
    let rec = Architecture::from_modules(rec).unwrap();
    let s = h_c_scores(&contingency(&dev, &rec).unwrap());
    assert!((s.c - 1.0).abs() < 1e-12);
    assert!(s.h < 0.6 * s.c, "h = {}", s.h);
}

#[test]
fn evaluate_without_deps_has_null_mq() {
    let a = Architecture::from_modules([("x", vec!["a.A", "a.B"])]).unwrap();
    let m = evaluate(&a, &a, None).unwrap();
    assert_eq!((m.a2a, m.h_score, m.c_score), (100.0, 1.0, 1.0));
    let json = serde_json::to_value(&m).unwrap();
    assert!(json["mq_sum"].is_null() && json["mq_normalized"].is_null());
    for key in ["a2a", "h_score", "c_score", "transform_cost", "params"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn dependency_file_formats() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("deps.txt");
    fs::write(&text, "a.X -> b.Y\na.X -> b.Y\n\n# c\nb.Y -> b.Y\n").unwrap();
    assert_eq!(load_dependencies(&text).unwrap().len(), 1);
    let json = dir.path().join("deps.json");
    fs::write(&json, r#"[["a.X", "b.Y"], ["b.Y", "a.X"]]"#).unwrap();
    assert_eq!(load_dependencies(&json).unwrap().len(), 2);
    fs::write(&text, "a.X -> b.Y\na.X b.Y\n").unwrap();
    assert!(matches!(load_dependencies(&text), Err(Error::Malformed { line: 2, .. })));
    assert!(matches!(load_dependencies(&dir.path().join("none")), Err(Error::Io { .. })));
}
