use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn modrecover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modrecover"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(root: &Path, rel: &str, contents: &str) {
    let path = root.join(rel);
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, contents).unwrap();
}

fn synthetic(dir: &Path) {
    let o = modrecover(&["gen-synthetic", "--out", p(dir), "--modules", "4", "--min-classes", "15", "--max-classes", "20", "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn scan_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    write(r, "m/module-info.java", "module demo.m {}");
    write(r, "m/a/Alpha.java", "package a;\nclass Alpha {}");
    write(r, "m/a/Beta.java", "package a;\nclass Beta {}");
    write(r, "m/test/a/AlphaTest.java", "package a;\nclass AlphaTest {}");

    let o = modrecover(&["scan", p(r)]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "a.Alpha\na.AlphaTest\na.Beta\n");

    let o = modrecover(&["scan", p(r), "--exclude", "**/test/**", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["classes"], serde_json::json!(["a.Alpha", "a.Beta"]));

    let out = r.join("gt");
    let o = modrecover(&["ground-truth", p(r), "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let gt: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(gt["modules"]["demo.m"].as_array().unwrap().len(), 3);
}

#[test]
fn recover_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let names = dir.path().join("classes.txt");
    let gt = dir.path().join("ground_truth.json");
    let deps = dir.path().join("deps.txt");
    let run = |out: &Path| {
        modrecover(&[
            "recover", p(&names), "--runs", "2", "--seed", "5", "--epochs", "80",
            "--ground-truth", p(&gt), "--deps", p(&deps), "--out", p(out), "--format", "json",
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = run(&a);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    run(&b);
    for f in ["architecture.json", "run_0.json", "run_1.json", "report.json", "reduced.tsv", "labels.json"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    for f in ["architecture.json", "run_0.json", "run_1.json", "reduced.tsv", "labels.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(report["per_run"].as_array().unwrap().len(), 2);
    assert!(report["averaged"]["mq_normalized"].is_number());

    // Scoring the written architecture reproduces the representative run.
    let rep = report["representative_run"].as_u64().unwrap() as usize;
    let o = modrecover(&["evaluate", p(&a.join("architecture.json")), p(&gt), "--deps", p(&deps)]);
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["a2a"], report["per_run"][rep]["a2a"]);
    for key in ["a2a", "h_score", "c_score", "mq_sum", "mq_normalized", "transform_cost", "params"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }

    let o = modrecover(&["report", p(&a.join("report.json")), p(&b.join("report.json"))]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().contains("a2a"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 3\nruns = 1\nepochs = 50\nmin_cluster_size = 4\n").unwrap();
    let names = dir.path().join("classes.txt");
    let o = modrecover(&["recover", p(&names), "--config", p(&cfg), "--seed", "8", "--no-repair", "--granularity", "package", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["config"]["seed"], 8);
    assert_eq!(r["config"]["runs"], 1);
    assert_eq!(r["config"]["min_cluster_size"], 4);
    assert_eq!(r["config"]["repair_enabled"], false);
    assert_eq!(r["config"]["granularity"], "package_name");

    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(code(&modrecover(&["recover", p(&names), "--config", p(&cfg)])), 2);
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(code(&modrecover(&["scan", p(&missing)])), 2);
    assert_eq!(code(&modrecover(&["recover", p(&missing)])), 2);
    assert_eq!(code(&modrecover(&["recover", "x", "--granularity", "method"])), 2);
    assert_eq!(code(&modrecover(&["recover", "x", "--embedder", "bogus"])), 2);
    assert_eq!(code(&modrecover(&["recover", "x", "--min-cluster-size", "1"])), 2);
    assert_eq!(code(&modrecover(&["frobnicate"])), 2);

    let names = dir.path().join("n.txt");
    fs::write(&names, "a.A\nnot valid\n").unwrap();
    let o = modrecover(&["recover", p(&names)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));

    fs::write(&names, "a.A\na.B\n").unwrap();
    assert_eq!(code(&modrecover(&["recover", p(&names), "--deps", p(&names)])), 2);
    let gt = dir.path().join("gt.json");
    fs::write(&gt, r#"{"modules":{"m":["a.A","a.B"]}}"#).unwrap();
    let other = dir.path().join("other.json");
    fs::write(&other, r#"{"modules":{"m":["z.Z"]}}"#).unwrap();
    assert_eq!(code(&modrecover(&["evaluate", p(&gt), p(&other)])), 2);
}

#[test]
fn degenerate_corpus_exits_4_with_output() {
    let dir = tempfile::tempdir().unwrap();
    let names = dir.path().join("n.txt");
    fs::write(&names, "solo.Only\n").unwrap();
    let out = dir.path().join("out");
    let o = modrecover(&["recover", p(&names), "--runs", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 4);
    let arch = fs::read_to_string(out.join("architecture.json")).unwrap();
    assert!(arch.contains("solo.Only"));
}

#[test]
fn failed_run_leaves_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let names = dir.path().join("n.txt");
    fs::write(&names, "a.x.Foo\na.x.FooBar\nb.y.Baz\nb.y.BazQux\n").unwrap();
    let out = dir.path().join("out");
    // A directory where a run file should go makes the write fail midway.
    fs::create_dir_all(out.join("run_0.json")).unwrap();
    let o = modrecover(&["recover", p(&names), "--runs", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.join("architecture.json").exists());
    assert!(!out.join("report.json").exists());

    let fresh = dir.path().join("fresh");
    let o = modrecover(&["gen-synthetic", "--out", p(&fresh), "--modules", "1"]);
    assert_eq!(code(&o), 2);
    assert!(!fresh.exists());
}

#[test]
fn evaluate_identical_is_perfect_in_text() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(dir.path());
    let gt = dir.path().join("ground_truth.json");
    let o = modrecover(&["evaluate", p(&gt), p(&gt), "--format", "text"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("a2a      100.00%"));
    assert!(text.contains("c-score  1.0000") && text.contains("h-score  1.0000"));
}
