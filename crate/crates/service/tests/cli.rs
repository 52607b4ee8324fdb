use std::fs;
use std::path::Path;

use blocks_advice::cli::main_with_args;

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("blocks-advice").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2_and_failures_exit_1() {
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["eval", "--no-such-flag"]), 2);
    assert_eq!(run(&["eval", "--protocol", "nonsense"]), 2);
    assert_eq!(run(&["train"]), 2);
    // well-formed but missing inputs
    assert_eq!(run(&["eval", "--protocol", "baseline", "--data", "/nonexistent/dataset.json"]), 1);
    assert_eq!(run(&["gen-data"]), 1);
}

/// The whole pipeline on a toy budget: every verb runs, writes its artifacts,
/// and a rerun with the same seed reproduces the report byte for byte.
#[test]
fn pipeline_on_a_toy_budget() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let data = out.join("dataset.json");
    assert_eq!(run(&["gen-data", "--seed", "3", "--out", s(out), "--train", "24", "--dev", "6", "--test", "6"]), 0);
    assert!(data.exists() && out.join("dataset_stats.json").exists());

    assert_eq!(run(&["pretrain-grounding", "--seed", "3", "--out", s(out), "--samples", "64", "--heldout", "32"]), 0);
    for f in ["grounder_restrictive.bin", "grounder_corrective.bin", "grounder_restrictive.bin.meta.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let common = ["--seed", "3", "--data", s(&data), "--out", s(out)];
    let train = |what: &str, extra: &[&str]| {
        let mut a = vec!["train", what, "--epochs", "1", "--iter2-epochs", "1"];
        a.extend_from_slice(&common);
        a.extend_from_slice(extra);
        run(&a)
    };
    assert_eq!(train("baseline", &[]), 0);
    assert_eq!(train("restrictive", &[]), 0);
    assert_eq!(train("corrective", &["--from-baseline"]), 0);
    assert_eq!(train("advgen", &[]), 0);
    assert_eq!(train("baseline", &["--from-baseline"]), 1);

    let eval = |o: &Path| {
        run(&["eval", "--protocol", "restrictive", "--seed", "3", "--data", s(&data), "--models", s(out), "--out", s(o)])
    };
    let (r1, r2) = (out.join("r1"), out.join("r2"));
    assert_eq!(eval(&r1), 0);
    assert_eq!(eval(&r2), 0);
    let a = fs::read(r1.join("eval_restrictive.json")).unwrap();
    assert_eq!(a, fs::read(r2.join("eval_restrictive.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["protocol"], "restrictive");
    assert_eq!(report["total"], 6);

    assert_eq!(
        run(&["compare", "--seed", "3", "--data", s(&data), "--models", s(out), "--out", s(&r1), "--always-advice"]),
        0
    );
    let c: serde_json::Value = serde_json::from_slice(&fs::read(r1.join("compare.json")).unwrap()).unwrap();
    assert_eq!(c["rows"].as_array().unwrap().len(), 6);
    let table = fs::read_to_string(r1.join("compare.txt")).unwrap();
    for h in ["Source", "Target", "Median", "Mean"] {
        assert!(table.contains(h), "{table}");
    }
}
