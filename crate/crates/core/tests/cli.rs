mod common;

use std::path::Path;
use std::process::{Command, Output};

use tip::influence::io::write_dataset;

fn tip(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tip"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Buyer train/eval and seller CSVs in `dir`.
fn datasets(dir: &Path) {
    let all = common::classification_data(300, 6, 2, 11);
    write_dataset(&dir.join("train.csv"), &all[..200]).unwrap();
    write_dataset(&dir.join("eval.csv"), &all[200..260]).unwrap();
    write_dataset(&dir.join("seller.csv"), &all[260..]).unwrap();
    std::fs::write(dir.join("empty.csv"), "x0,x1,x2,x3,x4,x5,label\n").unwrap();
}

#[test]
fn keygen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = tip(&["keygen", "--out", "a", "--seed", "9"], dir.path());
    let b = tip(&["keygen", "--out", "b", "--seed", "9"], dir.path());
    assert!(a.status.success() && b.status.success());
    assert!(stdout(&a).starts_with("params_hash "));
    for f in ["public.tipk", "secret.tipk", "eval.tipk"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(&x[..4], b"TIPK");
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn corrupt_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.json"), "{\"ring_degree\": ").unwrap();
    let o = tip(&["keygen", "--params", "p.json", "--out", "k"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid parameters"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tip(&["frobnicate"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("m.json"), "{\"num_replications\": 0}").unwrap();
    assert_eq!(
        tip(&["simulate", "--config", "m.json"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn score_verify_transport_and_empty_seller() {
    let dir = tempfile::tempdir().unwrap();
    datasets(dir.path());
    let base = ["score", "--train", "train.csv", "--eval", "eval.csv", "--seed", "4"];

    let o = tip(
        &[&base[..], &["--seller", "empty.csv", "--out", "e"]].concat(),
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no candidates"));

    let o = tip(
        &[&base[..], &["--seller", "seller.csv", "--out", "v", "--verify"]].concat(),
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let pearson: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("pearson "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(pearson >= 0.999, "{text}");
    let csv = std::fs::read_to_string(dir.path().join("v/scores.csv")).unwrap();
    assert!(csv.starts_with("index,utility,influence,plaintext_utility,abs_error"));
    assert_eq!(csv.lines().count(), 41);
    assert!(dir.path().join("v/session_log.jsonl").exists());

    let inproc = tip(
        &[&base[..], &["--seller", "seller.csv", "--out", "i"]].concat(),
        dir.path(),
    );
    let tcp = tip(
        &[
            &base[..],
            &["--seller", "seller.csv", "--out", "t", "--transport", "tcp"],
        ]
        .concat(),
        dir.path(),
    );
    assert!(inproc.status.success() && tcp.status.success());
    let a = std::fs::read(dir.path().join("i/scores.csv")).unwrap();
    let b = std::fs::read(dir.path().join("t/scores.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_twice_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("m.json"),
        r#"{"num_replications": 2, "num_sellers_per_trial": 3, "n_seller": 30}"#,
    )
    .unwrap();
    for out in ["a", "b"] {
        let o = tip(
            &["simulate", "--config", "m.json", "--seed", "3", "--out", out],
            dir.path(),
        );
        assert!(o.status.success());
        assert!(stdout(&o).contains("Mean |Pearson| (r)"));
    }
    for f in ["replications.csv", "summary.json", "rank_distribution.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    assert!(dir.path().join("a/timings.csv").exists());
}

#[test]
fn plaintext_bench_has_zero_overhead() {
    let dir = tempfile::tempdir().unwrap();
    let o = tip(
        &["bench", "--mode", "plaintext", "--batches", "10,100", "--out", "b"],
        dir.path(),
    );
    assert!(o.status.success());
    let mut rd = csv::Reader::from_path(dir.path().join("b/timings.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r[7].parse::<f64>().unwrap(), 0.0);
    }
}
