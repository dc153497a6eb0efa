use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use robustatr::harness::read_metrics_csv;
use robustatr::pipeline::read_predictions_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robustatr"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn micro_data(root: &Path) -> PathBuf {
    let d = root.join("data");
    ok(&["generate", "--config", s(&data("micro_benchmark.json")), "--seed", "7", "--out", s(&d)]);
    d
}

#[test]
fn no_arguments_is_usage_error() {
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = run(&["generate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = run(&["train", "--data", s(&missing), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\"version\": 99}").unwrap();
    assert_eq!(run(&["generate", "--config", s(&bad), "--out", s(&tmp.path().join("g"))]).status.code(), Some(1));
    // generate without --out
    assert_eq!(run(&["generate", "--micro"]).status.code(), Some(1));
}

#[test]
fn generate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["generate", "--config", s(&data("micro_benchmark.json")), "--seed", "7", "--out", s(d)]);
    }
    let files = dir_bytes(&a);
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["benchmark.json", "manifest.json", "test.sard", "train.sard"]);
    assert_eq!(files, dir_bytes(&b));

    let c = tmp.path().join("c");
    ok(&["generate", "--config", s(&data("micro_benchmark.json")), "--seed", "8", "--out", s(&c)]);
    assert_ne!(fs::read(a.join("train.sard")).unwrap(), fs::read(c.join("train.sard")).unwrap());
}

#[test]
fn augment_writes_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let d = micro_data(tmp.path());
    let out = tmp.path().join("pgm");
    ok(&["augment", "--data", s(&d), "--count", "3", "--config", s(&data("micro_experiment.json")), "--out", s(&out)]);
    ok(&["augment", "--data", s(&d), "--split", "test", "--count", "2", "--out", s(&out)]);
    let files = dir_bytes(&out);
    assert_eq!(files.len(), 5);
    for (name, bytes) in &files {
        assert!(name.ends_with(".pgm"));
        let header = b"P5\n16 16\n255\n";
        assert_eq!(&bytes[..header.len()], header, "{name}");
        assert_eq!(bytes.len(), header.len() + 256);
    }
}

#[test]
fn train_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let d = micro_data(tmp.path());
    let m = tmp.path().join("models");
    ok(&["train", "--data", s(&d), "--config", s(&data("micro_experiment.json")), "--seed", "3", "--out", s(&m)]);
    for f in ["model_00.sarm", "model_01.sarm", "training_log_00.csv", "training_log_01.csv", "experiment.json"] {
        assert!(m.join(f).exists(), "{f}");
    }
    let e = tmp.path().join("eval");
    let out = ok(&["eval", "--data", s(&d), "--models", s(&m), "--out", s(&e)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    let preds = read_predictions_csv(&fs::read_to_string(e.join("predictions.csv")).unwrap()).unwrap();
    assert_eq!(preds.len(), 24);
    let metrics = read_metrics_csv(&fs::read_to_string(e.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(metrics.len(), 1);
    assert!(e.join("summary.csv").exists() && e.join("confusion_eval.csv").exists());

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["eval", "--data", s(&d), "--models", s(&empty), "--out", s(&e)]).status.code(), Some(1));
}

#[test]
fn pipeline_reproducible_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let exp = data("micro_experiment.json");
    let baseline = tmp.path().join("baseline.json");
    let mut c: serde_json::Value = serde_json::from_str(&fs::read_to_string(&exp).unwrap()).unwrap();
    c["randomization"] = serde_json::Value::Null;
    c["attack"] = serde_json::Value::Null;
    c["techniques"]["adversarial_training"] = false.into();
    c["bag_size"] = 1.into();
    c["ttda_variants"] = 0.into();
    fs::write(&baseline, c.to_string()).unwrap();

    let mut runs = Vec::new();
    for r in 0..2 {
        let root = tmp.path().join(format!("run{r}"));
        let d = micro_data(&root);
        let mut metrics = Vec::new();
        for (name, cfg) in [("base", &baseline), ("drat", &exp)] {
            let m = root.join(format!("m_{name}"));
            let e = root.join(format!("e_{name}"));
            ok(&["train", "--data", s(&d), "--config", s(cfg), "--seed", "11", "--out", s(&m)]);
            ok(&["eval", "--data", s(&d), "--models", s(&m), "--out", s(&e)]);
            metrics.push(dir_bytes(&e));
        }
        runs.push(metrics);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn ablate_on_tiny_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("tiny");
    ok(&["generate", "--seed", "1", "--out", s(&d)]);
    let out = tmp.path().join("ablate");
    ok(&["ablate", "--data", s(&d), "--config", s(&data("micro_experiment.json")), "--replicates", "1", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(text.starts_with("row_name,replicate,overall_acc,runtime_s,acc_class_00,"));
    let rows = read_metrics_csv(&text).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r.per_class.len() == 10 && r.runtime_s == 0.0));
    assert!(out.join("summary.csv").exists());
    assert!(out.join("confusion_resnet_shift_dr_at.csv").exists());
}

#[test]
fn ablate_techniques_with_timing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = micro_data(tmp.path());
    let out = tmp.path().join("ablate");
    ok(&[
        "ablate", "--data", s(&d), "--grid", "techniques", "--replicates", "2", "--timing",
        "--config", s(&data("micro_experiment.json")), "--out", s(&out),
    ]);
    let rows = read_metrics_csv(&fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().any(|r| r.runtime_s > 0.0));
}

#[test]
fn bench_prints_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&["bench", "--images", "20", "--size", "32", "--threads", "1", "--out", s(tmp.path())]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("images,height,width,threads,seconds,images_per_minute,"));
    assert!(lines.next().unwrap().starts_with("20,32,32,1,"));
    assert!(tmp.path().join("bench.csv").exists());
}
