//! Manifold matching of two paired data sets.
//!
//! The pipeline selects a single k-nearest-neighbor graph from the sum of
//! both spaces' scaled dissimilarities, computes shortest-path distances
//! within each space over that shared graph, embeds each geodesic matrix by
//! classical MDS and aligns the two embeddings with an orthogonal Procrustes
//! rotation (or CCA). Baseline embedders (MDS, Isomap, LLE with separate
//! neighborhoods) and the matching-ratio / testing-power criteria are
//! provided for comparison experiments.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod datasets;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod linalg;
pub mod matching;
pub mod paths;
mod serde_nested;

pub use error::{MmsjError, Result};
