use hashreid::hamming::{pack_codes, save_codes};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hashreid"))
        .args(args)
        .env("DVHN_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Synthetic splits plus a two-iteration checkpoint.
struct Trained {
    dir: TempDir,
    train: PathBuf,
    query: PathBuf,
    gallery: PathBuf,
    checkpoint: PathBuf,
    history: PathBuf,
}

fn trained() -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let (train, query, gallery) = (p("train.emb"), p("query.emb"), p("gallery.emb"));
    let o = run(&[
        "synth", "--num-ids", "8", "--per-id", "5", "--dim", "12", "--seed", "3", "--train-per-id", "2",
        "--query-per-id", "1", "--out", s(&train), "--query-out", s(&query), "--gallery-out", s(&gallery),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (checkpoint, history) = (p("model.ckpt"), p("history.txt"));
    let o = run(&[
        "train", "--input", s(&train), "--out", s(&checkpoint), "--history", s(&history), "--bits", "16",
        "--outer-iters", "2", "--inner-iters", "3", "--p", "4", "--k1", "2", "--seed", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    Trained {
        dir,
        train,
        query,
        gallery,
        checkpoint,
        history,
    }
}

#[test]
fn train_encode_eval_round() {
    let t = trained();
    assert!(t.checkpoint.is_file());
    let history = std::fs::read_to_string(&t.history).unwrap();
    assert_eq!(history.lines().count(), 2);

    let codes_a = t.dir.path().join("a.codes");
    let codes_b = t.dir.path().join("b.codes");
    for out in [&codes_a, &codes_b] {
        let o = run(&["encode", "--checkpoint", s(&t.checkpoint), "--input", s(&t.gallery), "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("encoded 16 items at 16 bits"), "{}", stdout(&o));
    }
    assert_eq!(std::fs::read(&codes_a).unwrap(), std::fs::read(&codes_b).unwrap());

    let train_codes = t.dir.path().join("train.codes");
    let o = run(&["encode", "--checkpoint", s(&t.checkpoint), "--input", s(&t.train), "--out", s(&train_codes)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("encoded 16 items"));

    let query_codes = t.dir.path().join("query.codes");
    assert!(run(&["encode", "--checkpoint", s(&t.checkpoint), "--input", s(&t.query), "--out", s(&query_codes)])
        .status
        .success());
    let o = run(&["eval", "--query", s(&query_codes), "--gallery", s(&codes_a), "--max-rank", "5", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report["cmc"].as_array().unwrap().len(), 5);
    assert!((0.0..=1.0).contains(&report["map"].as_f64().unwrap()));
    assert_eq!(report["num_queries"], 8);
    assert_eq!(report["skipped"], 0);

    let o = run(&["eval", "--query", s(&query_codes), "--gallery", s(&codes_a), "--camera-filter"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_and_corrupt_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.emb");
    let o = run(&[
        "train", "--input", s(&missing), "--out", s(&dir.path().join("m")), "--history", s(&dir.path().join("h")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.emb"), "{}", stderr(&o));

    let t = trained();
    let mut bytes = std::fs::read(&t.checkpoint).unwrap();
    bytes[0] ^= 0xff;
    let bad = t.dir.path().join("bad.ckpt");
    std::fs::write(&bad, bytes).unwrap();
    let o = run(&["encode", "--checkpoint", s(&bad), "--input", s(&t.query), "--out", s(&t.dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_codes(dir: &Path, name: &str, flat: &[i8], k: usize, labels: Vec<u32>) -> PathBuf {
    let path = dir.join(name);
    save_codes(&pack_codes(flat, k, labels).unwrap(), &path).unwrap();
    path
}

#[test]
fn query_prints_ranked_lists() {
    let dir = tempfile::tempdir().unwrap();
    let gallery = write_codes(dir.path(), "g", &[1, 1, -1, -1, -1, -1, -1, -1, 1, -1, -1, -1], 4, vec![0; 3]);
    let query = write_codes(dir.path(), "q", &[-1; 4], 4, vec![0]);
    let o = run(&["query", "--gallery", s(&gallery), "--query", s(&query), "--top-k", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0: 1(0) 2(1)\n");
    let o = run(&["query", "--gallery", s(&gallery), "--query", s(&query), "--top-k", "50"]);
    assert_eq!(stdout(&o), "0: 1(0) 2(1) 0(2)\n");

    let empty = dir.path().join("empty");
    save_codes(&hashreid::hamming::CodeMatrix::from_packed(4, vec![], vec![]).unwrap(), &empty).unwrap();
    let o = run(&["query", "--gallery", s(&gallery), "--query", s(&empty)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn self_match_eval() {
    let dir = tempfile::tempdir().unwrap();
    let set = write_codes(dir.path(), "s", &[1, 1, 1, 1, 1, -1, -1, -1, -1, 1, -1, -1], 3, vec![0, 1, 0, 1]);
    let o = run(&["eval", "--query", s(&set), "--gallery", s(&set), "--max-rank", "3", "--self-match", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let expected = (1.0 / 3.0 + 1.0 / 2.0 + 1.0 / 3.0 + 1.0) / 4.0;
    assert!((report["map"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn selftest_passes_and_detects_an_injected_fault() {
    let o = run(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(&["selftest", "--inject-fault", "gradient"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("gradient") && stdout(&o).contains("FAIL"));
    assert!(stderr(&o).contains("gradient"));
}

#[test]
fn small_bench_reports_identical_orderings() {
    let o = run(&[
        "bench", "--bits", "128", "--n-gallery", "500", "--n-query", "3", "--repeats", "3", "--parallel", "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["orderings_identical"], true);
    assert_eq!(report["code_bytes_per_item"], 16);
    assert_eq!(report["float64_bytes_per_item"], 1024);
    assert_eq!(report["storage_ratio"], 64.0);
}
