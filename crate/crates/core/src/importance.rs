//! Edge importance from tree distance and dependency type.
//!
//! The production distance weight is
//!
//! ```text
//! imp(t) = (1 - (t/T)^T) * exp(-K t)
//! ```
//!
//! where `T` is the distance cap and `K` the curvature searched by the
//! bandit. The power factor pins `imp(T) = 0`; the exponential factor shapes
//! the decay in between. The linear-with-cutoff form `max(0, 1 - t/K)` is kept
//! as a control.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceVariant {
    Combined,
    LinearCut,
    PowerOnly,
    ExpOnly,
}

impl DistanceVariant {
    pub fn name(self) -> &'static str {
        match self {
            DistanceVariant::Combined => "combined",
            DistanceVariant::LinearCut => "linear_cut",
            DistanceVariant::PowerOnly => "power_only",
            DistanceVariant::ExpOnly => "exp_only",
        }
    }
}

impl fmt::Display for DistanceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(DistanceVariant::Combined),
            "linear_cut" => Ok(DistanceVariant::LinearCut),
            "power_only" | "power" => Ok(DistanceVariant::PowerOnly),
            "exp_only" | "exp" => Ok(DistanceVariant::ExpOnly),
            other => Err(Error::Config(format!("unknown distance variant {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceFnConfig {
    /// Distance cap `T`.
    pub cap: u32,
    /// Curvature, or slope for the linear control.
    pub k: f64,
    pub variant: DistanceVariant,
}

impl DistanceFnConfig {
    pub fn new(variant: DistanceVariant, k: f64, cap: u32) -> Result<Self> {
        let cfg = DistanceFnConfig { cap, k, variant };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cap < 1 {
            return Err(Error::Config("distance cap T must be >= 1".into()));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Config(format!("K must be positive, got {}", self.k)));
        }
        if self.variant == DistanceVariant::LinearCut && self.k > self.cap as f64 {
            return Err(Error::Config(format!("linear_cut slope K={} exceeds T={}", self.k, self.cap)));
        }
        Ok(())
    }

    fn check(&self, t: u32) -> Result<()> {
        if t > self.cap {
            return Err(Error::Domain { t, cap: self.cap });
        }
        Ok(())
    }
}

pub fn imp_linear_cut(t: u32, cfg: &DistanceFnConfig) -> Result<f64> {
    cfg.check(t)?;
    let t = t as f64;
    Ok(if t < cfg.k { 1.0 - t / cfg.k } else { 0.0 })
}

pub fn imp_power(t: u32, cfg: &DistanceFnConfig) -> Result<f64> {
    cfg.check(t)?;
    if t == 0 {
        return Ok(1.0);
    }
    let ratio = t as f64 / cfg.cap as f64;
    Ok(1.0 - ratio.powi(cfg.cap as i32))
}

pub fn imp_exp(t: u32, cfg: &DistanceFnConfig) -> Result<f64> {
    cfg.check(t)?;
    Ok((-cfg.k * t as f64).exp())
}

/// Distance weight for the configured variant.
pub fn imp_dis(t: u32, cfg: &DistanceFnConfig) -> Result<f64> {
    match cfg.variant {
        DistanceVariant::Combined => Ok(imp_power(t, cfg)? * imp_exp(t, cfg)?),
        DistanceVariant::LinearCut => imp_linear_cut(t, cfg),
        DistanceVariant::PowerOnly => imp_power(t, cfg),
        DistanceVariant::ExpOnly => imp_exp(t, cfg),
    }
}

/// Elementwise [`imp_dis`] over a distance matrix. Distances are evaluated
/// once per distinct value.
pub fn distance_adjacency(dist: &[Vec<u32>], cfg: &DistanceFnConfig) -> Result<Matrix> {
    let table = (0..=cfg.cap).map(|t| imp_dis(t, cfg)).collect::<Result<Vec<f64>>>()?;
    let n = dist.len();
    let mut out = Matrix::zeros(n, n);
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Shape(format!("distance row {i} has {} entries, expected {n}", row.len())));
        }
        for (j, &t) in row.iter().enumerate() {
            out[(i, j)] = *table.get(t as usize).ok_or(Error::Domain { t, cap: cfg.cap })?;
        }
    }
    Ok(out)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Per-type weights `softmax(H q)`.
pub fn type_weights(type_features: &Matrix, query: &[f64]) -> Result<Vec<f64>> {
    if type_features.cols() != query.len() {
        return Err(Error::Shape(format!(
            "type features have {} columns, query has {}",
            type_features.cols(),
            query.len()
        )));
    }
    let logits: Vec<f64> =
        (0..type_features.rows()).map(|u| type_features.row(u).iter().zip(query).map(|(h, q)| h * q).sum()).collect();
    softmax(&logits)
}

/// Gathers per-type weights into the masked `N x N` type adjacency.
pub fn type_adjacency(type_ids: &[Vec<usize>], topo: &[Vec<u8>], weights: &[f64]) -> Result<Matrix> {
    let n = type_ids.len();
    if topo.len() != n {
        return Err(Error::Shape(format!("type matrix has {n} rows, topology {}", topo.len())));
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if topo[i][j] != 0 {
                let u = type_ids[i][j];
                out[(i, j)] = *weights
                    .get(u)
                    .ok_or_else(|| Error::Shape(format!("type id {u} outside vocabulary of {}", weights.len())))?;
            }
        }
    }
    Ok(out)
}

/// Type adjacency computed directly from type features and query.
pub fn type_importance(
    type_ids: &[Vec<usize>],
    topo: &[Vec<u8>],
    type_features: &Matrix,
    query: &[f64],
) -> Result<Matrix> {
    type_adjacency(type_ids, topo, &type_weights(type_features, query)?)
}

/// Merged edge weights, each in `[0, 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedAdjacency(pub Matrix);

pub fn merge_adjacency(dis: &Matrix, ty: &Matrix) -> Result<InducedAdjacency> {
    Ok(InducedAdjacency(dis.add(ty)?))
}

/// Samples of the configured variant at every integer distance in `[0, T]`.
pub fn emit_curve(cfg: &DistanceFnConfig) -> Result<Vec<(u32, f64)>> {
    cfg.validate()?;
    (0..=cfg.cap).map(|t| Ok((t, imp_dis(t, cfg)?))).collect()
}
