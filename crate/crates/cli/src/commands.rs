use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use rdgcn::bandit::BanditConfig;
use rdgcn::checkpoint::Checkpoint;
use rdgcn::conllu::parse_conllu;
use rdgcn::dataset::{load_dataset, to_jsonl, Example};
use rdgcn::gradcheck::{run_grad_check, GradCheckConfig};
use rdgcn::graph::{SyntacticViews, TypeVocab};
use rdgcn::importance::{emit_curve, DistanceFnConfig, DistanceVariant};
use rdgcn::model::ModelParams;
use rdgcn::oracle::run_distance_oracle;
use rdgcn::synthetic::{generate_corpus, SyntheticConfig};
use rdgcn::training::{evaluate_examples, trace_csv, MetricsSummary, Mode, TrainConfig, TrainOutcome, Trainer};

use crate::manifest::{manifest_path_for, RunManifest};
use crate::{BuildGraphArgs, CurveArgs, EvaluateArgs, GradCheckArgs, HyperArgs, OracleDistArgs, SynthArgs, TrainArgs};

/// A verification command found a discrepancy.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct GraphDump<'a> {
    #[serde(flatten)]
    views: &'a SyntacticViews,
    vocab: &'a BTreeMap<String, usize>,
}

pub fn build_graph(a: BuildGraphArgs) -> Result<()> {
    let text = read_file(&a.conllu)?;
    let trees = parse_conllu(&text)?;
    let vocab = TypeVocab::build(&trees);
    let map = vocab.to_map();
    let mut out = String::new();
    for tree in &trees {
        let views = SyntacticViews::build(tree, &vocab, a.t)?;
        out.push_str(&serde_json::to_string(&GraphDump { views: &views, vocab: &map })?);
        out.push('\n');
    }
    write_file(&a.out, &out)?;

    let mut m = RunManifest::new("build-graph", serde_json::json!({ "T": a.t }), None)?;
    m.input(&a.conllu);
    m.output(&a.out)?;
    m.write(&manifest_path_for(&a.out))
}

pub fn curve(a: CurveArgs) -> Result<()> {
    let variant: DistanceVariant = a.variant.parse()?;
    let cfg = DistanceFnConfig::new(variant, a.k, a.t)?;
    let points = emit_curve(&cfg)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "weight"])?;
    for (t, weight) in points {
        w.serialize((t, weight))?;
    }
    let bytes = w.into_inner().context("flushing curve CSV")?;
    write_file(&a.out, std::str::from_utf8(&bytes)?)?;

    let mut m = RunManifest::new("curve", cfg, None)?;
    m.output(&a.out)?;
    m.write(&manifest_path_for(&a.out))
}

fn config_from_flags(h: &HyperArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    let mut bandit = BanditConfig::default();
    if let Some(v) = h.t {
        cfg.cap = v;
    }
    if let Some(v) = h.k0 {
        bandit.k0 = v;
    }
    if let Some(v) = h.s {
        bandit.step = v;
    }
    if let Some(v) = h.r {
        bandit.window = v;
    }
    cfg.bandit = bandit;
    if let Some(v) = h.interval {
        cfg.interval = v;
    }
    if let Some(v) = h.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = h.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = h.lr {
        cfg.lr = v;
    }
    if let Some(v) = h.d {
        cfg.hidden = v;
        cfg.embed_dim = v;
    }
    if let Some(v) = h.embed_dim {
        cfg.embed_dim = v;
    }
    if let Some(v) = h.l {
        cfg.layers = v;
    }
    if let Some(v) = h.dropout_in {
        cfg.dropout_in = v;
    }
    if let Some(v) = h.dropout_out {
        cfg.dropout_out = v;
    }
    if let Some(v) = h.seed {
        cfg.seed = v;
    }
    if let Some(m) = &h.mode {
        cfg.mode = m.parse::<Mode>()?;
    }
    if let Some(v) = h.val_frac {
        cfg.val_frac = v;
    }
    cfg.reward_on_test = h.reward_on_test;
    cfg.row_normalize = h.row_normalize;
    cfg.validate()?;
    Ok(cfg)
}

/// The seed is exempt because RDGCN_SEED may be set in the environment.
fn changes_more_than_epochs(h: &HyperArgs) -> bool {
    h.t.is_some()
        || h.k0.is_some()
        || h.s.is_some()
        || h.r.is_some()
        || h.interval.is_some()
        || h.batch.is_some()
        || h.lr.is_some()
        || h.d.is_some()
        || h.embed_dim.is_some()
        || h.l.is_some()
        || h.dropout_in.is_some()
        || h.dropout_out.is_some()
        || h.mode.is_some()
        || h.reward_on_test
        || h.val_frac.is_some()
        || h.row_normalize
}

struct Data {
    train: Vec<Example>,
    test: Vec<Example>,
}

fn load_train_data(a: &TrainArgs, manifest: &mut RunManifest) -> Result<Data> {
    if a.synthetic {
        let (train, test) = generate_corpus(&SyntheticConfig { seed: a.synthetic_seed, ..SyntheticConfig::default() });
        return Ok(Data { train, test });
    }
    let (Some(train_path), Some(test_path)) = (&a.train, &a.test) else {
        bail!(rdgcn::Error::Config("--train and --test are required without --synthetic".into()));
    };
    let train = load_dataset(train_path, a.train_conllu.as_deref())?;
    let test = load_dataset(test_path, a.test_conllu.as_deref())?;
    for p in [Some(train_path), a.train_conllu.as_ref(), Some(test_path), a.test_conllu.as_ref()].into_iter().flatten()
    {
        manifest.input(p);
    }
    Ok(Data { train, test })
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (mut trainer, cfg, mut manifest) = if let Some(path) = &a.resume {
        if changes_more_than_epochs(&a.hyper) {
            bail!(rdgcn::Error::Config("only --epochs may be changed when resuming".into()));
        }
        let mut state = Checkpoint::load(path)?.state;
        if let Some(e) = a.hyper.epochs {
            state.config.epochs = e;
        }
        let cfg = state.config.clone();
        let mut manifest = RunManifest::new("train", &cfg, Some(cfg.seed))?;
        manifest.input(path);
        let data = load_train_data(&a, &mut manifest)?;
        (Trainer::with_state(state, &data.train, &data.test)?, cfg, manifest)
    } else {
        let cfg = config_from_flags(&a.hyper)?;
        let mut manifest = RunManifest::new("train", &cfg, Some(cfg.seed))?;
        let data = load_train_data(&a, &mut manifest)?;
        (Trainer::new(&data.train, &data.test, &cfg)?, cfg, manifest)
    };

    while trainer.state.epochs_done < cfg.epochs {
        let r = trainer.run_epoch()?;
        eprintln!(
            "epoch {}/{} loss {:.4} K {} val_acc {:.4} test_acc {:.4}",
            r.epoch, cfg.epochs, r.train_loss, r.k, r.val.accuracy, r.test.accuracy
        );
    }
    let final_report = trainer.evaluate_test()?;
    let outcome = TrainOutcome { state: trainer.state, final_report };

    let out = &a.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let trace_path = out.join("bandit_trace.csv");
    let metrics_path = out.join("metrics.json");
    let ckpt_path = out.join("checkpoint.json");
    let curve_path = out.join("curve.csv");

    write_file(&trace_path, &trace_csv(&outcome.state.trace))?;
    write_file(&metrics_path, &(MetricsSummary::new(&outcome, "bandit_trace.csv").to_json() + "\n"))?;
    Checkpoint::new(outcome.state.clone()).save(&ckpt_path)?;
    let dcfg = DistanceFnConfig::new(cfg.mode.distance_variant(), outcome.state.bandit.k(), cfg.cap)?;
    let mut curve = String::from("t,weight\n");
    for (t, w) in emit_curve(&dcfg)? {
        curve.push_str(&format!("{t},{w}\n"));
    }
    write_file(&curve_path, &curve)?;

    for p in [&ckpt_path, &metrics_path, &trace_path, &curve_path] {
        manifest.output(p)?;
    }
    manifest.write(&out.join("manifest.json"))?;

    let f = &outcome.final_report;
    println!(
        "mode {} accuracy {:.4} macro_f1 {:.4} K {} frozen {}",
        cfg.mode,
        f.accuracy,
        f.macro_f1,
        outcome.state.bandit.k(),
        outcome.state.bandit.is_frozen()
    );
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let state = Checkpoint::load(&a.checkpoint)?.state;
    let mut manifest = RunManifest::new("evaluate", &state.config, Some(state.config.seed))?;
    manifest.input(&a.checkpoint);
    let examples = if a.synthetic {
        generate_corpus(&SyntheticConfig { seed: a.synthetic_seed, ..SyntheticConfig::default() }).1
    } else {
        let path = a.test.as_ref().expect("clap requires --test without --synthetic");
        manifest.input(path);
        if let Some(c) = &a.test_conllu {
            manifest.input(c);
        }
        load_dataset(path, a.test_conllu.as_deref())?
    };
    let report = evaluate_examples(&state, &examples)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            manifest.output(path)?;
            manifest.write(&manifest_path_for(path))?;
            println!("accuracy {:.4} macro_f1 {:.4}", report.accuracy, report.macro_f1);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn corrupt_type_query(g: &mut ModelParams) {
    g.type_q.data_mut()[0] += 1e-3;
}

pub fn grad_check(a: GradCheckArgs) -> Result<()> {
    let cfg = GradCheckConfig {
        seed: a.seed,
        sentences: a.sentences,
        max_tokens: a.max_tokens,
        embed_dim: a.embed_dim,
        hidden: a.d,
        layers: a.l,
        tolerance: a.tolerance,
        use_type: !a.no_type,
        row_normalize: a.row_normalize,
        ..GradCheckConfig::default()
    };
    let fault: Option<&dyn Fn(&mut ModelParams)> = if a.inject_fault { Some(&corrupt_type_query) } else { None };
    let report = run_grad_check(&cfg, fault)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            let mut m = RunManifest::new("grad-check", cfg, Some(cfg.seed))?;
            m.output(path)?;
            m.write(&manifest_path_for(path))?;
        }
        None => print!("{text}"),
    }
    for t in &report.tensors {
        eprintln!("{:<10} entries {:>5} max_rel_error {:.3e}", t.name, t.entries, t.max_rel_error);
    }
    if !report.passed {
        let worst = report.tensors.iter().max_by(|x, y| x.max_rel_error.total_cmp(&y.max_rel_error));
        bail!(CheckFailed(format!(
            "gradient check failed: max relative error {:.3e} in {} exceeds {:.1e}",
            report.max_rel_error,
            worst.map(|t| t.name.as_str()).unwrap_or("?"),
            cfg.tolerance
        )));
    }
    Ok(())
}

pub fn oracle_dist(a: OracleDistArgs) -> Result<()> {
    let report = run_distance_oracle(a.max_n, a.trials, a.seed, a.inject_off_by_one)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(path) => {
            write_file(path, &text)?;
            let config = serde_json::json!({ "max_n": a.max_n, "trials": a.trials });
            let mut m = RunManifest::new("oracle-dist", config, Some(a.seed))?;
            m.output(path)?;
            m.write(&manifest_path_for(path))?;
        }
        None => print!("{text}"),
    }
    if let Some(m) = &report.first_mismatch {
        bail!(CheckFailed(format!(
            "{} distance mismatches; first at ({}, {}) with heads {:?}: bfs {} vs floyd-warshall {}",
            report.mismatches, m.i, m.j, m.heads, m.bfs, m.floyd_warshall
        )));
    }
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SyntheticConfig { train: a.train, test: a.test, seed: a.seed, ..SyntheticConfig::default() };
    let (train, test) = generate_corpus(&cfg);
    let train_path = a.out.join("train.jsonl");
    let test_path = a.out.join("test.jsonl");
    write_file(&train_path, &to_jsonl(&train))?;
    write_file(&test_path, &to_jsonl(&test))?;
    let mut m = RunManifest::new("synth", cfg, Some(cfg.seed))?;
    m.output(&train_path)?;
    m.output(&test_path)?;
    m.write(&a.out.join("manifest.json"))
}
