//! Aspect sentiment classification over dependency graphs whose edges are
//! weighted by tree distance and dependency type.
//!
//! The pipeline runs CoNLL-U trees through [`graph`] (distance, type and
//! topology views), [`importance`] (edge weights), and [`model`] (graph
//! convolutions, aspect pooling, softmax classifier). [`training`] drives it
//! with Adam while a [`bandit`] tunes the distance curvature from validation
//! accuracy.

#![allow(clippy::needless_range_loop)]

pub mod adam;
pub mod bandit;
pub mod checkpoint;
pub mod conllu;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod importance;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
