use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rdgcn::conllu::parse_conllu;
use rdgcn::graph::{SyntacticViews, TypeVocab};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn rdgcn() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rdgcn"));
    cmd.env_remove("RDGCN_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn here(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn curve_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    for (variant, k, golden) in
        [("combined", "0.1", "curve_combined_k0.1.csv"), ("linear_cut", "4", "curve_linear_cut_k4.csv")]
    {
        let out = dir.path().join(golden);
        let o = run(rdgcn().args(["curve", "--variant", variant, "--K", k, "--T", "10", "--out"]).arg(&out));
        assert!(o.status.success(), "{}", stderr(&o));
        let got = fs::read_to_string(&out).unwrap();
        assert_eq!(got, fs::read_to_string(here(&format!("golden/{golden}"))).unwrap());
        let rows: Vec<&str> = got.lines().skip(1).collect();
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0], "0,1.0");
        assert_eq!(rows[10], "10,0.0");
    }
}

#[test]
fn curve_rejects_bad_curvature() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(rdgcn().args(["curve", "--K", "-1", "--out"]).arg(dir.path().join("c.csv")));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[input]: "), "{}", stderr(&o));
}

#[test]
fn build_graph_matches_golden_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("graph.jsonl");
    let fixture = here("fixtures/two_sentences.conllu");
    let o = run(rdgcn().args(["build-graph", "--T", "10", "--conllu"]).arg(&fixture).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let got = fs::read_to_string(&out).unwrap();
    assert_eq!(got, fs::read_to_string(here("golden/two_sentences.graph.jsonl")).unwrap());

    let trees = parse_conllu(&fs::read_to_string(&fixture).unwrap()).unwrap();
    let vocab = TypeVocab::build(&trees);
    let lines: Vec<&str> = got.lines().collect();
    assert_eq!(lines.len(), trees.len());
    for (line, tree) in lines.iter().zip(&trees) {
        let reloaded: SyntacticViews = serde_json::from_str(line).unwrap();
        assert_eq!(reloaded, SyntacticViews::build(tree, &vocab, 10).unwrap());
    }
    assert!(dir.path().join("graph.manifest.json").exists());
}

#[test]
fn invalid_tree_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(rdgcn()
        .arg("build-graph")
        .arg("--conllu")
        .arg(here("fixtures/cycle.conllu"))
        .arg("--out")
        .arg(dir.path().join("g.jsonl")));
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[input]: sentence 2: invalid tree: cycle"), "{err}");
}

#[test]
fn grad_check_passes_and_detects_fault() {
    let o = run(rdgcn().arg("grad-check"));
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["max_rel_error"].as_f64().unwrap() < 1e-4);
    let names: Vec<&str> = report["tensors"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["embed", "proj", "gcn_w[0]", "gcn_w[1]", "type_H", "type_q", "clf_Z", "clf_b"]);

    let o = run(rdgcn().args(["grad-check", "--inject-fault"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[internal]: gradient check failed"), "{}", stderr(&o));
    assert!(stderr(&o).contains("in type_q"));
}

#[test]
fn oracle_dist_reports() {
    let o = run(rdgcn().args(["oracle-dist", "--max-n", "12", "--trials", "1000"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["mismatches"], 0);

    let o = run(rdgcn().args(["oracle-dist", "--max-n", "1", "--trials", "5", "--inject-off-by-one"]));
    assert!(o.status.success(), "{}", stderr(&o));

    let o = run(rdgcn().args(["oracle-dist", "--trials", "20", "--inject-off-by-one"]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mismatches"));
}

fn small_train(dir: &Path, out: &str, extra: &[&str]) -> Output {
    run(rdgcn()
        .arg("train")
        .arg("--train")
        .arg(dir.join("data/train.jsonl"))
        .arg("--test")
        .arg(dir.join("data/test.jsonl"))
        .args(["--epochs", "2", "--D", "8", "--batch", "16", "--seed", "4"])
        .args(extra)
        .arg("--out")
        .arg(dir.join(out)))
}

fn synth_small(dir: &Path) {
    let o =
        run(rdgcn().args(["synth", "--train", "160", "--test", "40", "--seed", "6", "--out"]).arg(dir.join("data")));
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn training_is_repeatable_and_manifested() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path());
    for out in ["a", "b"] {
        let o = small_train(dir.path(), out, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/metrics.json")).unwrap();
    let b = fs::read(dir.path().join("b/metrics.json")).unwrap();
    assert_eq!(a, b);

    let metrics = read_json(&dir.path().join("a/metrics.json"));
    assert_eq!(metrics["bandit_trace"], "bandit_trace.csv");
    assert_eq!(metrics["epochs"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["config"]["seed"], 4);
    let trace = fs::read_to_string(dir.path().join("a/bandit_trace.csv")).unwrap();
    assert!(trace.starts_with("b,K,reward,frozen\n1,0.2,1,"), "{trace}");

    let manifest = read_json(&dir.path().join("a/manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 4);
    let hashes = manifest["artifact_hashes"].as_object().unwrap();
    assert_eq!(hashes.len(), 4);
    let metrics_key = dir.path().join("a/metrics.json").display().to_string();
    assert_eq!(hashes[&metrics_key], hex::encode(Sha256::digest(&a)));
}

#[test]
fn resume_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path());
    assert!(small_train(dir.path(), "full", &[]).status.success());
    let o = run(rdgcn()
        .arg("train")
        .args(["--epochs", "1", "--D", "8", "--batch", "16", "--seed", "4", "--train"])
        .arg(dir.path().join("data/train.jsonl"))
        .arg("--test")
        .arg(dir.path().join("data/test.jsonl"))
        .arg("--out")
        .arg(dir.path().join("half")));
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(rdgcn()
        .arg("train")
        .arg("--resume")
        .arg(dir.path().join("half/checkpoint.json"))
        .args(["--epochs", "2", "--train"])
        .arg(dir.path().join("data/train.jsonl"))
        .arg("--test")
        .arg(dir.path().join("data/test.jsonl"))
        .arg("--out")
        .arg(dir.path().join("resumed")));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("full/checkpoint.json")).unwrap(),
        fs::read(dir.path().join("resumed/checkpoint.json")).unwrap()
    );

    let o = run(rdgcn()
        .arg("evaluate")
        .arg("--checkpoint")
        .arg(dir.path().join("full/checkpoint.json"))
        .arg("--test")
        .arg(dir.path().join("data/test.jsonl")));
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let metrics = read_json(&dir.path().join("full/metrics.json"));
    assert_eq!(report, metrics["final"]);
}

#[test]
fn ablation_modes_run_and_emit_curves() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path());
    for mode in ["no_dis", "no_type", "eq2_control"] {
        let out = format!("m_{mode}");
        let o = small_train(dir.path(), &out, &["--mode", mode]);
        assert!(o.status.success(), "{mode}: {}", stderr(&o));
        assert_eq!(read_json(&dir.path().join(&out).join("metrics.json"))["config"]["mode"], mode);
        let curve = fs::read_to_string(dir.path().join(&out).join("curve.csv")).unwrap();
        assert_eq!(curve.lines().count(), 12);
    }
    let o = small_train(dir.path(), "bad", &["--mode", "half"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[input]: "));
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path());
    let o = run(rdgcn()
        .env("RDGCN_SEED", "9")
        .arg("train")
        .args(["--epochs", "1", "--D", "8", "--train"])
        .arg(dir.path().join("data/train.jsonl"))
        .arg("--test")
        .arg(dir.path().join("data/test.jsonl"))
        .arg("--out")
        .arg(dir.path().join("env")));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("env/metrics.json"))["config"]["seed"], 9);
}

#[test]
fn missing_input_file_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(rdgcn().args(["build-graph", "--conllu", "/nonexistent.conllu", "--out"]).arg(dir.path().join("g")));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[input]: reading /nonexistent.conllu"), "{}", stderr(&o));
}
