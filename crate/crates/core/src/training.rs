//! Training loop: batches, curvature search, evaluation and ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::bandit::{BanditConfig, BanditState, TraceRow};
use crate::dataset::{Example, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::graph::{SyntacticViews, TypeVocab};
use crate::importance::{distance_adjacency, DistanceFnConfig, DistanceVariant};
use crate::metrics::EvalReport;
use crate::model::{argmax, infer, loss_and_grad, ForwardOptions, GraphInput, ModelDims, ModelParams, UNK_TOKEN_ID};
use crate::tensor::Matrix;

// RNG streams derived from the run seed.
const STREAM_SPLIT: u64 = 1;
const STREAM_INIT: u64 = 2;
const STREAM_EPOCH_BASE: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    NoDis,
    NoType,
    Eq2Control,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoDis, Mode::NoType, Mode::Eq2Control];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoDis => "no_dis",
            Mode::NoType => "no_type",
            Mode::Eq2Control => "eq2_control",
        }
    }

    pub fn distance_variant(self) -> DistanceVariant {
        match self {
            Mode::Eq2Control => DistanceVariant::LinearCut,
            _ => DistanceVariant::Combined,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Hidden size `D`.
    pub hidden: usize,
    pub embed_dim: usize,
    /// Number of graph convolution layers `L`.
    pub layers: usize,
    /// Distance cap `T`.
    pub cap: u32,
    pub dropout_in: f64,
    pub dropout_out: f64,
    pub bandit: BanditConfig,
    /// Batches per reward interval.
    pub interval: usize,
    pub seed: u64,
    pub val_frac: f64,
    pub reward_on_test: bool,
    pub mode: Mode,
    pub row_normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 0.002,
            hidden: 50,
            embed_dim: 50,
            layers: 2,
            cap: 10,
            dropout_in: 0.7,
            dropout_out: 0.1,
            bandit: BanditConfig::default(),
            interval: 2,
            seed: 0,
            val_frac: 0.1,
            reward_on_test: false,
            mode: Mode::Full,
            row_normalize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("layers", self.layers),
            ("interval", self.interval),
            ("cap", self.cap as usize),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.val_frac > 0.0 && self.val_frac <= 0.5) {
            return Err(Error::Config(format!("val_frac must be in (0, 0.5], got {}", self.val_frac)));
        }
        self.forward_options().validate()?;
        self.effective_bandit().validate()
    }

    pub fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            dropout_in: self.dropout_in,
            dropout_out: self.dropout_out,
            use_type: self.mode != Mode::NoType,
            row_normalize: self.row_normalize,
        }
    }

    /// Bandit settings for the active mode. The linear control searches its
    /// slope over `[1, T]` instead of the curvature range.
    pub fn effective_bandit(&self) -> BanditConfig {
        match self.mode {
            Mode::Eq2Control => BanditConfig {
                k0: self.bandit.k0.clamp(1.0, self.cap as f64),
                k_min: 1.0,
                k_max: self.cap as f64,
                ..self.bandit
            },
            _ => self.bandit,
        }
    }

    pub fn distance_config(&self, k: f64) -> Result<DistanceFnConfig> {
        DistanceFnConfig::new(self.mode.distance_variant(), k, self.cap)
    }
}

/// Surface-form vocabulary; id 0 is reserved for unknown words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    ids: BTreeMap<String, usize>,
}

impl TokenVocab {
    pub fn build<'a>(examples: impl IntoIterator<Item = &'a Example>) -> Self {
        let mut forms: Vec<&str> = examples.into_iter().flat_map(|e| e.tree.forms()).collect();
        forms.sort_unstable();
        forms.dedup();
        TokenVocab { ids: forms.into_iter().enumerate().map(|(i, f)| (f.to_string(), i + 1)).collect() }
    }

    pub fn size(&self) -> usize {
        self.ids.len() + 1
    }

    pub fn id(&self, form: &str) -> usize {
        self.ids.get(form).copied().unwrap_or(UNK_TOKEN_ID)
    }
}

/// An example converted to ids and graph views, with its distance adjacency
/// cached for the current curvature.
#[derive(Clone, Debug)]
pub struct PreparedExample {
    pub ids: Vec<usize>,
    pub views: SyntacticViews,
    pub aspect: (usize, usize),
    pub label: usize,
    a_dis: Matrix,
}

impl PreparedExample {
    pub fn input(&self) -> GraphInput<'_> {
        GraphInput {
            token_ids: &self.ids,
            a_dis: &self.a_dis,
            type_ids: &self.views.type_ids,
            topo: &self.views.topo,
            aspect: self.aspect,
            label: self.label,
        }
    }

    pub fn distance_adjacency(&self) -> &Matrix {
        &self.a_dis
    }
}

fn topology_matrix(topo: &[Vec<u8>]) -> Matrix {
    let n = topo.len();
    let mut m = Matrix::zeros(n, n);
    for (i, row) in topo.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v as f64;
        }
    }
    m
}

/// A set of prepared examples whose distance adjacencies are tagged with the
/// bandit version that produced them.
#[derive(Clone, Debug)]
pub struct PreparedSet {
    pub items: Vec<PreparedExample>,
    version: u64,
}

impl PreparedSet {
    pub fn new(
        examples: &[Example],
        tokens: &TokenVocab,
        types: &TypeVocab,
        cfg: &TrainConfig,
        k: f64,
        version: u64,
    ) -> Result<Self> {
        let items = examples
            .iter()
            .map(|ex| {
                let views = SyntacticViews::build(&ex.tree, types, cfg.cap)?;
                Ok(PreparedExample {
                    ids: ex.tree.forms().map(|f| tokens.id(f)).collect(),
                    a_dis: Matrix::zeros(0, 0),
                    views,
                    aspect: ex.aspect,
                    label: ex.label.id(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut set = PreparedSet { items, version };
        set.refresh(cfg, k, version)?;
        Ok(set)
    }

    /// Recomputes every distance adjacency for curvature `k`.
    pub fn refresh(&mut self, cfg: &TrainConfig, k: f64, version: u64) -> Result<()> {
        if cfg.mode == Mode::NoDis {
            for item in &mut self.items {
                item.a_dis = topology_matrix(&item.views.topo);
            }
        } else {
            let dcfg = cfg.distance_config(k)?;
            for item in &mut self.items {
                item.a_dis = distance_adjacency(&item.views.dist, &dcfg)?;
            }
        }
        self.version = version;
        Ok(())
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Predictions and metrics with dropout disabled.
pub fn evaluate(set: &PreparedSet, params: &ModelParams, opts: &ForwardOptions) -> Result<EvalReport> {
    if set.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let predicted = set
        .items
        .par_iter()
        .map(|item| infer(&item.input(), params, opts).map(|c| argmax(&c.logits)))
        .collect::<Result<Vec<usize>>>()?;
    let truth: Vec<usize> = set.items.iter().map(|i| i.label).collect();
    Ok(EvalReport::from_predictions(&truth, &predicted, params.clf_z.cols()))
}

/// Seeded split of the training data into (fit, validation).
pub fn split_validation(examples: &[Example], frac: f64, seed: u64) -> (Vec<Example>, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((examples.len() as f64 * frac).round() as usize).clamp(1, examples.len().saturating_sub(1).max(1));
    let val = order[..n_val].iter().map(|&i| examples[i].clone()).collect();
    let fit = order[n_val..].iter().map(|&i| examples[i].clone()).collect();
    (fit, val)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub k: f64,
    pub bandit_frozen: bool,
    pub val: EvalReport,
    pub test: EvalReport,
}

/// Everything needed to continue training or to run inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub bandit: BanditState,
    pub tokens: TokenVocab,
    pub types: TypeVocab,
    pub epochs_done: usize,
    pub batches_done: u64,
    pub trace: Vec<TraceRow>,
    pub history: Vec<EpochRecord>,
}

pub struct Trainer {
    pub state: TrainState,
    fit: PreparedSet,
    val: PreparedSet,
    test: PreparedSet,
}

impl Trainer {
    pub fn new(train: &[Example], test: &[Example], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if train.len() < 2 {
            return Err(Error::Config("training data needs at least two examples".into()));
        }
        if test.is_empty() {
            return Err(Error::Config("test split is empty".into()));
        }
        let tokens = TokenVocab::build(train);
        let types = TypeVocab::build(train.iter().map(|e| &e.tree));
        let dims = ModelDims {
            vocab: tokens.size(),
            embed_dim: config.embed_dim,
            hidden: config.hidden,
            layers: config.layers,
            types: types.size(),
            classes: NUM_CLASSES,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(STREAM_INIT);
        let params = ModelParams::init(dims, &mut rng)?;
        let adam = AdamState::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, &params);
        let bandit = BanditState::new(config.effective_bandit())?;
        let state = TrainState {
            config: config.clone(),
            params,
            adam,
            bandit,
            tokens,
            types,
            epochs_done: 0,
            batches_done: 0,
            trace: Vec::new(),
            history: Vec::new(),
        };
        Self::with_state(state, train, test)
    }

    /// Rebuilds the data side of a saved state. `train` and `test` must be
    /// the same examples the state was trained on.
    pub fn with_state(state: TrainState, train: &[Example], test: &[Example]) -> Result<Self> {
        let cfg = &state.config;
        let (fit, val) = split_validation(train, cfg.val_frac, cfg.seed);
        let mut present = [false; NUM_CLASSES];
        fit.iter().for_each(|e| present[e.label.id()] = true);
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(Error::Config(format!("class {missing} has no training examples")));
        }
        let (k, version) = (state.bandit.k(), state.bandit.version());
        let prep = |ex: &[Example]| PreparedSet::new(ex, &state.tokens, &state.types, cfg, k, version);
        let (fit, val, test) = (prep(&fit)?, prep(&val)?, prep(test)?);
        Ok(Trainer { state, fit, val, test })
    }

    pub fn fit_set(&self) -> &PreparedSet {
        &self.fit
    }

    pub fn val_set(&self) -> &PreparedSet {
        &self.val
    }

    pub fn test_set(&self) -> &PreparedSet {
        &self.test
    }

    pub fn evaluate_test(&self) -> Result<EvalReport> {
        evaluate(&self.test, &self.state.params, &self.state.config.forward_options())
    }

    fn check_cache_version(&self) -> Result<()> {
        let v = self.state.bandit.version();
        for set in [&self.fit, &self.val, &self.test] {
            if set.version() != v {
                return Err(Error::Internal(format!(
                    "distance cache version {} behind bandit version {v}",
                    set.version()
                )));
            }
        }
        Ok(())
    }

    fn reward_interval(&mut self) -> Result<()> {
        let opts = self.state.config.forward_options();
        let split = if self.state.config.reward_on_test { &self.test } else { &self.val };
        let acc = evaluate(split, &self.state.params, &opts)?.accuracy;
        let before = self.state.bandit.version();
        let row = self.state.bandit.observe(acc)?;
        self.state.trace.push(row);
        let after = self.state.bandit.version();
        if after != before {
            let (cfg, k) = (&self.state.config, self.state.bandit.k());
            self.fit.refresh(cfg, k, after)?;
            self.val.refresh(cfg, k, after)?;
            self.test.refresh(cfg, k, after)?;
        }
        Ok(())
    }

    /// Runs one epoch and returns its record.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.state.epochs_done;
        let cfg = self.state.config.clone();
        let opts = cfg.forward_options();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_EPOCH_BASE + epoch as u64);

        let mut order: Vec<usize> = (0..self.fit.len()).collect();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            self.check_cache_version()?;
            let inputs: Vec<GraphInput<'_>> = chunk.iter().map(|&i| self.fit.items[i].input()).collect();
            let (loss, grads) = loss_and_grad(&inputs, &self.state.params, &opts, Some(&mut rng))
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {batches}: {e}")))?;
            self.state.adam.update(&mut self.state.params, &grads)?;
            loss_sum += loss;
            batches += 1;
            self.state.batches_done += 1;

            if self.state.batches_done.is_multiple_of(cfg.interval as u64) && !self.state.bandit.is_frozen() {
                self.reward_interval()?;
            }
        }

        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            k: self.state.bandit.k(),
            bandit_frozen: self.state.bandit.is_frozen(),
            val: evaluate(&self.val, &self.state.params, &opts)?,
            test: evaluate(&self.test, &self.state.params, &opts)?,
        };
        self.state.history.push(record.clone());
        self.state.epochs_done += 1;
        Ok(record)
    }

    /// Trains until `config.epochs` epochs are done.
    pub fn run(&mut self) -> Result<EvalReport> {
        while self.state.epochs_done < self.state.config.epochs {
            self.run_epoch()?;
        }
        self.evaluate_test()
    }
}

/// Evaluates a trained state on new examples, using the state's vocabularies
/// and its current curvature.
pub fn evaluate_examples(state: &TrainState, examples: &[Example]) -> Result<EvalReport> {
    let cfg = &state.config;
    let set = PreparedSet::new(examples, &state.tokens, &state.types, cfg, state.bandit.k(), state.bandit.version())?;
    evaluate(&set, &state.params, &cfg.forward_options())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub final_report: EvalReport,
}

pub fn train(train: &[Example], test: &[Example], config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(train, test, config)?;
    let final_report = trainer.run()?;
    Ok(TrainOutcome { state: trainer.state, final_report })
}

/// Trains with the given mode and returns the final test report.
pub fn ablate(train_set: &[Example], test: &[Example], config: &TrainConfig, mode: Mode) -> Result<EvalReport> {
    let cfg = TrainConfig { mode, ..config.clone() };
    Ok(train(train_set, test, &cfg)?.final_report)
}

/// Run summary written next to the other training outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub epochs: Vec<EpochRecord>,
    #[serde(rename = "final")]
    pub final_report: EvalReport,
    pub bandit_trace: String,
    pub config: TrainConfig,
}

impl MetricsSummary {
    pub fn new(outcome: &TrainOutcome, bandit_trace: impl Into<String>) -> Self {
        MetricsSummary {
            epochs: outcome.state.history.clone(),
            final_report: outcome.final_report.clone(),
            bandit_trace: bandit_trace.into(),
            config: outcome.state.config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Bandit trace as CSV with header `b,K,reward,frozen`.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("b,K,reward,frozen\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{}\n", r.b, r.k, r.reward, r.frozen));
    }
    out
}
