//! Graph convolution classifier with hand-written reverse-mode gradients.
//!
//! Forward pass for one sentence:
//!
//! ```text
//! E0   = (embed[ids] * in_mask) proj
//! p    = softmax(H q)
//! A*   = A_dis + mask(p[type_ids])          (optionally row-normalized)
//! El   = relu(A* E(l-1) Wl)                 l = 1..L
//! f    = mean(EL[aspect])  * out_mask
//! y    = f Z + b
//! loss = -log softmax(y)[label]
//! ```
//!
//! `A_dis` is a constant input: the curvature that produced it is chosen by
//! the bandit and is never differentiated.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{softmax, type_adjacency, type_weights};
use crate::tensor::Matrix;

/// Token id reserved for padding and out-of-vocabulary words.
pub const UNK_TOKEN_ID: usize = 0;

pub const INIT_BOUND: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub types: usize,
    pub classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let ModelDims { vocab, embed_dim, hidden, layers, types, classes } = *self;
        if vocab == 0 || embed_dim == 0 || hidden == 0 || layers == 0 || types < 2 || classes < 2 {
            return Err(Error::Config(format!("invalid model dimensions {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embed: Matrix,
    pub proj: Matrix,
    pub gcn_w: Vec<Matrix>,
    pub type_h: Matrix,
    /// Query vector stored as a `1 x D` row.
    pub type_q: Matrix,
    pub clf_z: Matrix,
    /// Bias stored as a `1 x C` row.
    pub clf_b: Matrix,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        let b = INIT_BOUND;
        Ok(ModelParams {
            embed: Matrix::uniform(dims.vocab, dims.embed_dim, b, rng),
            proj: Matrix::uniform(dims.embed_dim, dims.hidden, b, rng),
            gcn_w: (0..dims.layers).map(|_| Matrix::uniform(dims.hidden, dims.hidden, b, rng)).collect(),
            type_h: Matrix::uniform(dims.types, dims.hidden, b, rng),
            type_q: Matrix::uniform(1, dims.hidden, b, rng),
            clf_z: Matrix::uniform(dims.hidden, dims.classes, b, rng),
            clf_b: Matrix::uniform(1, dims.classes, b, rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        ModelParams {
            embed: z(&self.embed),
            proj: z(&self.proj),
            gcn_w: self.gcn_w.iter().map(z).collect(),
            type_h: z(&self.type_h),
            type_q: z(&self.type_q),
            clf_z: z(&self.clf_z),
            clf_b: z(&self.clf_b),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.embed.rows(),
            embed_dim: self.embed.cols(),
            hidden: self.proj.cols(),
            layers: self.gcn_w.len(),
            types: self.type_h.rows(),
            classes: self.clf_z.cols(),
        }
    }

    /// Checks that all tensor shapes agree with each other.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        let expect = [
            ("proj", &self.proj, (d.embed_dim, d.hidden)),
            ("type_H", &self.type_h, (d.types, d.hidden)),
            ("type_q", &self.type_q, (1, d.hidden)),
            ("clf_Z", &self.clf_z, (d.hidden, d.classes)),
            ("clf_b", &self.clf_b, (1, d.classes)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::Shape(format!("{name} is {:?}, expected {shape:?}", m.shape())));
            }
        }
        for (l, w) in self.gcn_w.iter().enumerate() {
            if w.shape() != (d.hidden, d.hidden) {
                return Err(Error::Shape(format!("gcn_w[{l}] is {:?}", w.shape())));
            }
        }
        Ok(())
    }

    /// Named views of every trainable tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("embed".to_string(), &self.embed), ("proj".to_string(), &self.proj)];
        out.extend(self.gcn_w.iter().enumerate().map(|(l, w)| (format!("gcn_w[{l}]"), w)));
        out.push(("type_H".into(), &self.type_h));
        out.push(("type_q".into(), &self.type_q));
        out.push(("clf_Z".into(), &self.clf_z));
        out.push(("clf_b".into(), &self.clf_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embed, &mut self.proj];
        out.extend(self.gcn_w.iter_mut());
        out.push(&mut self.type_h);
        out.push(&mut self.type_q);
        out.push(&mut self.clf_z);
        out.push(&mut self.clf_b);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }
}

/// Gradients of the loss, shaped like [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub ModelParams);

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients(params.zeros_like())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (name, m) in self.0.tensors() {
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok(())
    }
}

impl std::ops::Deref for Gradients {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl std::ops::DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

/// One sentence ready for the network.
#[derive(Clone, Copy, Debug)]
pub struct GraphInput<'a> {
    pub token_ids: &'a [usize],
    /// Distance adjacency, constant with respect to the parameters.
    pub a_dis: &'a Matrix,
    pub type_ids: &'a [Vec<usize>],
    pub topo: &'a [Vec<u8>],
    pub aspect: (usize, usize),
    pub label: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardOptions {
    pub dropout_in: f64,
    pub dropout_out: f64,
    /// Include the type adjacency.
    pub use_type: bool,
    /// Divide each row of the merged adjacency by its sum.
    pub row_normalize: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { dropout_in: 0.7, dropout_out: 0.1, use_type: true, row_normalize: false }
    }
}

impl ForwardOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("dropout_in", self.dropout_in), ("dropout_out", self.dropout_out)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {r}")));
            }
        }
        Ok(())
    }

    pub fn without_dropout(self) -> Self {
        ForwardOptions { dropout_in: 0.0, dropout_out: 0.0, ..self }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Embedding rows after input dropout.
    x0: Matrix,
    in_mask: Option<Matrix>,
    /// Per-type weights, when the type view is active.
    type_p: Option<Vec<f64>>,
    /// Merged adjacency before normalization.
    a_raw: Matrix,
    row_sums: Option<Vec<f64>>,
    /// Adjacency used by the layers.
    a: Matrix,
    /// `E(l-1)` for each layer; `layer_in[0] = E0`.
    layer_in: Vec<Matrix>,
    /// `A* E(l-1)` for each layer.
    agg: Vec<Matrix>,
    /// Pre-activations `A* E(l-1) Wl`.
    pre: Vec<Matrix>,
    output: Matrix,
    out_mask: Option<Vec<f64>>,
    pooled: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    pub fn adjacency(&self) -> &Matrix {
        &self.a
    }

    /// Final token features `E^L`.
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// Layer outputs `E^1 .. E^L`.
    pub fn layer_outputs(&self) -> impl Iterator<Item = &Matrix> {
        self.layer_in.iter().skip(1).chain(std::iter::once(&self.output))
    }

    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    pub fn encoded(&self) -> &Matrix {
        &self.layer_in[0]
    }
}

fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Matrix {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let data = (0..rows * cols).map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 }).collect();
    Matrix::from_vec(rows, cols, data).expect("mask shape")
}

/// Embedding lookup followed by the linear projection. `mask` multiplies the
/// looked-up rows elementwise.
pub fn encode(token_ids: &[usize], params: &ModelParams, mask: Option<&Matrix>) -> Result<(Matrix, Matrix)> {
    let vocab = params.embed.rows();
    let mut x0 = Matrix::zeros(token_ids.len(), params.embed.cols());
    for (i, &id) in token_ids.iter().enumerate() {
        if id >= vocab {
            return Err(Error::Config(format!("token id {id} outside vocabulary of {vocab}")));
        }
        x0.row_mut(i).copy_from_slice(params.embed.row(id));
    }
    if let Some(mask) = mask {
        for (x, m) in x0.data_mut().iter_mut().zip(mask.data()) {
            *x *= m;
        }
    }
    let e0 = x0.matmul(&params.proj)?;
    Ok((x0, e0))
}

/// One graph convolution: `relu(A E W)`.
pub fn gcn_layer(adj: &Matrix, input: &Matrix, weight: &Matrix) -> Result<Matrix> {
    let out = adj.matmul(input)?.matmul(weight)?.map(relu);
    if !out.is_finite() {
        return Err(Error::NonFinite("graph convolution output".into()));
    }
    Ok(out)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Merged adjacency for the current parameters, before normalization.
pub fn merged_adjacency(input: &GraphInput<'_>, params: &ModelParams, use_type: bool) -> Result<Matrix> {
    let n = input.token_ids.len();
    if input.a_dis.shape() != (n, n) {
        return Err(Error::Shape(format!("distance adjacency {:?} for {n} tokens", input.a_dis.shape())));
    }
    if !use_type {
        return Ok(input.a_dis.clone());
    }
    let p = type_weights(&params.type_h, params.type_q.row(0))?;
    input.a_dis.add(&type_adjacency(input.type_ids, input.topo, &p)?)
}

/// Runs the network on one sentence. Dropout is applied only when `rng` is
/// given.
pub fn forward<R: Rng + ?Sized>(
    input: &GraphInput<'_>,
    params: &ModelParams,
    opts: &ForwardOptions,
    mut rng: Option<&mut R>,
) -> Result<ForwardCache> {
    let n = input.token_ids.len();
    let (start, end) = input.aspect;
    if start >= end || end > n {
        return Err(Error::Config(format!("aspect span [{start}, {end}) invalid for {n} tokens")));
    }
    if input.a_dis.shape() != (n, n) || input.type_ids.len() != n || input.topo.len() != n {
        return Err(Error::Shape(format!("graph views do not match {n} tokens")));
    }

    let in_mask = match rng.as_deref_mut() {
        Some(r) if opts.dropout_in > 0.0 => Some(dropout_mask(n, params.embed.cols(), opts.dropout_in, r)),
        _ => None,
    };
    let (x0, e0) = encode(input.token_ids, params, in_mask.as_ref())?;

    let (type_p, a_raw) = if opts.use_type {
        let p = type_weights(&params.type_h, params.type_q.row(0))?;
        let a_type = type_adjacency(input.type_ids, input.topo, &p)?;
        (Some(p), input.a_dis.add(&a_type)?)
    } else {
        (None, input.a_dis.clone())
    };
    let (a, row_sums) = if opts.row_normalize {
        let sums: Vec<f64> = (0..n).map(|i| a_raw.row(i).iter().sum()).collect();
        let mut a = a_raw.clone();
        for (i, &s) in sums.iter().enumerate() {
            if s <= 0.0 {
                return Err(Error::NonFinite(format!("adjacency row {i} sums to zero")));
            }
            a.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
        (a, Some(sums))
    } else {
        (a_raw.clone(), None)
    };

    let mut layer_in = Vec::with_capacity(params.gcn_w.len());
    let mut agg = Vec::with_capacity(params.gcn_w.len());
    let mut pre = Vec::with_capacity(params.gcn_w.len());
    let mut cur = e0;
    for w in &params.gcn_w {
        let ae = a.matmul(&cur)?;
        let z = ae.matmul(w)?;
        let next = z.map(relu);
        if !next.is_finite() {
            return Err(Error::NonFinite("graph convolution output".into()));
        }
        layer_in.push(cur);
        agg.push(ae);
        pre.push(z);
        cur = next;
    }
    let output = cur;

    let hidden = output.cols();
    let m = (end - start) as f64;
    let mut pooled = vec![0.0; hidden];
    for i in start..end {
        for (p, v) in pooled.iter_mut().zip(output.row(i)) {
            *p += v / m;
        }
    }
    let out_mask = match rng {
        Some(r) if opts.dropout_out > 0.0 => Some(dropout_mask(1, hidden, opts.dropout_out, r).data().to_vec()),
        _ => None,
    };
    let features: Vec<f64> = match &out_mask {
        Some(mask) => pooled.iter().zip(mask).map(|(a, b)| a * b).collect(),
        None => pooled.clone(),
    };
    let classes = params.clf_z.cols();
    let mut logits = params.clf_b.row(0).to_vec();
    for (d, &fv) in features.iter().enumerate() {
        for (c, l) in logits.iter_mut().enumerate().take(classes) {
            *l += fv * params.clf_z[(d, c)];
        }
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }

    Ok(ForwardCache { x0, in_mask, type_p, a_raw, row_sums, a, layer_in, agg, pre, output, out_mask, pooled, logits })
}

/// Forward pass without dropout.
pub fn infer(input: &GraphInput<'_>, params: &ModelParams, opts: &ForwardOptions) -> Result<ForwardCache> {
    forward::<rand::rngs::ThreadRng>(input, params, opts, None)
}

/// Index of the largest logit; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `-log softmax(logits)[label]`, computed with log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Accumulates `scale * d loss / d params` for one sentence into `grads`.
pub fn backward(
    input: &GraphInput<'_>,
    params: &ModelParams,
    cache: &ForwardCache,
    scale: f64,
    grads: &mut Gradients,
) -> Result<()> {
    let n = input.token_ids.len();
    let hidden = params.proj.cols();
    let classes = params.clf_z.cols();

    let mut dlogits = softmax(&cache.logits)?;
    dlogits[input.label] -= 1.0;
    dlogits.iter_mut().for_each(|v| *v *= scale);

    let features: Vec<f64> = match &cache.out_mask {
        Some(mask) => cache.pooled.iter().zip(mask).map(|(a, b)| a * b).collect(),
        None => cache.pooled.clone(),
    };
    for (c, g) in dlogits.iter().enumerate() {
        grads.clf_b[(0, c)] += g;
    }
    let mut dfeat = vec![0.0; hidden];
    for d in 0..hidden {
        for c in 0..classes {
            grads.clf_z[(d, c)] += features[d] * dlogits[c];
            dfeat[d] += params.clf_z[(d, c)] * dlogits[c];
        }
    }
    if let Some(mask) = &cache.out_mask {
        dfeat.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
    }

    let (start, end) = input.aspect;
    let m = (end - start) as f64;
    let mut d_out = Matrix::zeros(n, hidden);
    for i in start..end {
        for (g, &v) in d_out.row_mut(i).iter_mut().zip(&dfeat) {
            *g = v / m;
        }
    }

    let mut d_adj = Matrix::zeros(n, n);
    for l in (0..params.gcn_w.len()).rev() {
        let mut dz = d_out;
        for (g, &z) in dz.data_mut().iter_mut().zip(cache.pre[l].data()) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        grads.gcn_w[l].add_assign(&cache.agg[l].t_matmul(&dz)?);
        let d_agg = dz.matmul_t(&params.gcn_w[l])?;
        d_adj.add_assign(&d_agg.matmul_t(&cache.layer_in[l])?);
        d_out = cache.a.t_matmul(&d_agg)?;
    }

    // d_out is now dE0.
    grads.proj.add_assign(&cache.x0.t_matmul(&d_out)?);
    let mut dx0 = d_out.matmul_t(&params.proj)?;
    if let Some(mask) = &cache.in_mask {
        for (g, m) in dx0.data_mut().iter_mut().zip(mask.data()) {
            *g *= m;
        }
    }
    for (i, &id) in input.token_ids.iter().enumerate() {
        for (g, v) in grads.embed.row_mut(id).iter_mut().zip(dx0.row(i)) {
            *g += v;
        }
    }

    if let Some(p) = &cache.type_p {
        let d_raw = match &cache.row_sums {
            Some(sums) => {
                let mut d_raw = Matrix::zeros(n, n);
                for i in 0..n {
                    let s = sums[i];
                    let dot: f64 = d_adj.row(i).iter().zip(cache.a_raw.row(i)).map(|(g, a)| g * a).sum();
                    for j in 0..n {
                        d_raw[(i, j)] = d_adj[(i, j)] / s - dot / (s * s);
                    }
                }
                d_raw
            }
            None => d_adj,
        };
        let mut dp = vec![0.0; p.len()];
        for i in 0..n {
            for j in 0..n {
                if input.topo[i][j] != 0 {
                    dp[input.type_ids[i][j]] += d_raw[(i, j)];
                }
            }
        }
        let dot: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
        let q = params.type_q.row(0);
        for (u, (&pu, &dpu)) in p.iter().zip(&dp).enumerate() {
            let dlogit = pu * (dpu - dot);
            if dlogit == 0.0 {
                continue;
            }
            for d in 0..hidden {
                grads.type_h[(u, d)] += dlogit * q[d];
                grads.type_q[(0, d)] += dlogit * params.type_h[(u, d)];
            }
        }
    }
    Ok(())
}

/// Mean cross-entropy over a batch, without dropout.
pub fn batch_loss(batch: &[GraphInput<'_>], params: &ModelParams, opts: &ForwardOptions) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut total = 0.0;
    for input in batch {
        let cache = infer(input, params, opts)?;
        total += cross_entropy(&cache.logits, input.label);
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its gradient. Dropout masks are drawn from `rng` when
/// given.
pub fn loss_and_grad<R: Rng + ?Sized>(
    batch: &[GraphInput<'_>],
    params: &ModelParams,
    opts: &ForwardOptions,
    mut rng: Option<&mut R>,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(params);
    let mut total = 0.0;
    for input in batch {
        let cache = forward(input, params, opts, rng.as_deref_mut())?;
        total += cross_entropy(&cache.logits, input.label);
        backward(input, params, &cache, scale, &mut grads)?;
    }
    grads.ensure_finite()?;
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, grads))
}
