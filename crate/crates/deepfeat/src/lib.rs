//! Texture features and unsupervised group features for image scoring.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`imagery`] — grayscale images are quantized and summarized as
//!    gray-level co-occurrence matrices (GLCMs) under a chosen spatial
//!    relationship; flattened GLCMs are the base feature vectors, optionally
//!    filtered through a mask built from representative patches.
//! 2. [`clustering`] and [`rpforest`] — unsupervised learners turn the base
//!    features into *group* features: cluster IDs from K-means and from
//!    hierarchical dendrograms cut at many heights, and leaf IDs from
//!    ensembles of random projection trees.
//! 3. [`forest`] — a random-forest classifier over the augmented table
//!    (continuous base columns + categorical group columns), with per-class
//!    vote vectors and a linear rule for combining two classifiers.
//! 4. [`harness`] and [`synth`] — repeated-holdout experiments with optional
//!    training-label noise, Gaussian-mixture benchmark generators, a PCA
//!    baseline, and a feature-correlation census.
//!
//! See the crate `examples/` directory for one runnable program per
//! capability, and the `deepfeat` binary for the same operations as CLI
//! subcommands.

pub mod clustering;
pub mod error;
pub mod forest;
pub mod harness;
pub mod imagery;
pub mod matrix;
pub mod rng;
pub mod rpforest;
pub mod synth;
pub mod toydata;

pub mod cli;
mod ioutil;

pub use error::{Error, Result};
pub use matrix::{ColumnKind, DeepFeatureSet, DenseMatrix, FeatureMatrix};
