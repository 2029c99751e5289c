//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NONE_TYPE_ID, ROOT_TYPE_ID};
use crate::model::{batch_loss, loss_and_grad, ForwardOptions, GraphInput, ModelDims, ModelParams};
use crate::synthetic::random_tree_heads;
use crate::tensor::Matrix;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so that two gradients that are
/// both numerically zero compare equal.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub sentences: usize,
    pub max_tokens: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub types: usize,
    pub vocab: usize,
    pub step: f64,
    pub tolerance: f64,
    pub use_type: bool,
    pub row_normalize: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 7,
            sentences: 2,
            max_tokens: 6,
            embed_dim: 6,
            hidden: 8,
            layers: 2,
            types: 5,
            vocab: 9,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            use_type: true,
            row_normalize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub config: GradCheckConfig,
    pub tensors: Vec<TensorReport>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// A random batch of small sentences with the owned buffers behind
/// [`GraphInput`].
pub struct SyntheticBatch {
    sentences: Vec<OwnedInput>,
}

struct OwnedInput {
    ids: Vec<usize>,
    a_dis: Matrix,
    type_ids: Vec<Vec<usize>>,
    topo: Vec<Vec<u8>>,
    aspect: (usize, usize),
    label: usize,
}

impl SyntheticBatch {
    pub fn random<R: Rng + ?Sized>(cfg: &GradCheckConfig, classes: usize, rng: &mut R) -> Self {
        let sentences = (0..cfg.sentences)
            .map(|_| {
                let n = rng.gen_range(2..=cfg.max_tokens.max(2));
                let heads = random_tree_heads(n, rng);
                let mut a_dis = Matrix::zeros(n, n);
                let mut type_ids = vec![vec![NONE_TYPE_ID; n]; n];
                let mut topo = vec![vec![0u8; n]; n];
                for i in 0..n {
                    type_ids[i][i] = ROOT_TYPE_ID;
                    topo[i][i] = 1;
                    for j in 0..n {
                        a_dis[(i, j)] = if i == j { 1.0 } else { rng.gen_range(0.0..1.0) };
                    }
                }
                for (i, &h) in heads.iter().enumerate() {
                    if h > 0 {
                        let t = rng.gen_range(2..cfg.types.max(3));
                        type_ids[i][h - 1] = t;
                        type_ids[h - 1][i] = t;
                        topo[i][h - 1] = 1;
                        topo[h - 1][i] = 1;
                    }
                }
                let start = rng.gen_range(0..n);
                let end = rng.gen_range(start + 1..=n);
                OwnedInput {
                    ids: (0..n).map(|_| rng.gen_range(0..cfg.vocab)).collect(),
                    a_dis,
                    type_ids,
                    topo,
                    aspect: (start, end),
                    label: rng.gen_range(0..classes),
                }
            })
            .collect();
        SyntheticBatch { sentences }
    }

    pub fn inputs(&self) -> Vec<GraphInput<'_>> {
        self.sentences
            .iter()
            .map(|s| GraphInput {
                token_ids: &s.ids,
                a_dis: &s.a_dis,
                type_ids: &s.type_ids,
                topo: &s.topo,
                aspect: s.aspect,
                label: s.label,
            })
            .collect()
    }
}

/// Compares `analytic` against central differences of the batch loss for
/// every parameter entry.
pub fn compare_gradients(
    batch: &[GraphInput<'_>],
    params: &ModelParams,
    opts: &ForwardOptions,
    analytic: &ModelParams,
    step: f64,
) -> Result<Vec<TensorReport>> {
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Matrix> = analytic.tensors().into_iter().map(|(_, m)| m.clone()).collect();
    if analytic.len() != names.len() {
        return Err(Error::Shape("gradient tensor count differs from parameters".into()));
    }
    let mut probe = params.clone();
    let mut reports = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let entries = analytic[k].data().len();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for i in 0..entries {
            let original = probe.tensors_mut()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = original + step;
            let plus = batch_loss(batch, &probe, opts)?;
            probe.tensors_mut()[k].data_mut()[i] = original - step;
            let minus = batch_loss(batch, &probe, opts)?;
            probe.tensors_mut()[k].data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let exact = analytic[k].data()[i];
            let abs = (numeric - exact).abs();
            let rel = abs / numeric.abs().max(exact.abs()).max(RELATIVE_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        reports.push(TensorReport { name, entries, max_rel_error: max_rel, max_abs_error: max_abs });
    }
    Ok(reports)
}

/// Runs the full check on a seeded random instance. `corrupt` perturbs the
/// analytic gradient before comparison; it exists to exercise the failure
/// path.
pub fn run_grad_check(cfg: &GradCheckConfig, corrupt: Option<&dyn Fn(&mut ModelParams)>) -> Result<GradCheckReport> {
    let classes = 3;
    let dims = ModelDims {
        vocab: cfg.vocab,
        embed_dim: cfg.embed_dim,
        hidden: cfg.hidden,
        layers: cfg.layers,
        types: cfg.types.max(3),
        classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(dims, &mut rng)?;
    // Larger weights than the training init so that every layer carries
    // signal of order one.
    for t in params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 5.0);
    }
    let batch = SyntheticBatch::random(cfg, classes, &mut rng);
    let inputs = batch.inputs();
    let opts =
        ForwardOptions { dropout_in: 0.0, dropout_out: 0.0, use_type: cfg.use_type, row_normalize: cfg.row_normalize };

    let (_, grads) = loss_and_grad::<ChaCha8Rng>(&inputs, &params, &opts, None)?;
    let mut analytic = grads.0;
    if let Some(corrupt) = corrupt {
        corrupt(&mut analytic);
    }
    let tensors = compare_gradients(&inputs, &params, &opts, &analytic, cfg.step)?;
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { config: *cfg, passed: max_rel_error < cfg.tolerance, max_rel_error, tensors })
}
