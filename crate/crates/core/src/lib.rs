//! Linear multimodal contrastive learning.
//!
//! Under linear encoders `g1(x) = G1 x` and `g2(x̃) = G2 x̃`, a broad family
//! of contrastive losses (including CLIP/InfoNCE) is minimized by a
//! truncated SVD of a weighted cross-covariance between the two modalities.
//! This crate provides the spectral primitives, synthetic spiked-model data,
//! the loss family and its weight tables, closed-form and iterative solvers,
//! spectral cleaning of many-to-many pairings, and an experiment harness.

#![allow(clippy::needless_range_loop)]

pub mod bsgmp;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod losses;
pub mod solvers;

pub use bsgmp::{BipartiteGraph, Partition};
pub use datagen::{LabeledBipartite, ModelParams, NoiseFamily, PairedDataset};
pub use error::{MmclError, Result};
pub use harness::{ExperimentConfig, MetricRow};
pub use linalg::{Mat, Subspace, SvdResult};
pub use losses::{ContrastiveWeights, EncoderPair, LossSpec};
pub use solvers::{EdgeEstimate, FitResult};
