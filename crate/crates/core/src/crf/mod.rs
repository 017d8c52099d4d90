//! Two-label linear-chain CRF over hashed sparse features.
//!
//! A path `y` over features `x` scores
//! `start[y0] + Σ_t emit(x_t, y_t) + Σ_t trans[y_{t-1}][y_t] + end[y_{L-1}]`
//! where `emit(x, y)` sums the label-`y` emission weights of the active
//! features. All inference runs in log space in `f64`.

mod inference;
mod io;
mod train;

use thiserror::Error;

use crate::corpus::Label;
use crate::features::{FeatureVector, FEATURE_DIM};

pub use inference::{
    log_partition, log_potentials, marginals, path_score, posterior_decode, viterbi,
};
pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{nll, nll_and_grad, train, EpochLog, Gradient, Optimizer, TrainConfig, TrainLog};

pub const NUM_LABELS: usize = 2;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("sequence {index}: {features} feature vectors but {labels} labels")]
    LengthMismatch {
        index: usize,
        features: usize,
        labels: usize,
    },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("not a model file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported model version {0} (this build reads version {MODEL_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model file declares {0} labels; only 2 are supported")]
    UnsupportedLabels(u32),
    #[error("model file is truncated")]
    Truncated,
    #[error("model file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("model contains a non-finite weight")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One labeled training sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<Label>,
}

impl Sequence {
    pub fn new(features: Vec<FeatureVector>, labels: Vec<Label>) -> Self {
        Self { features, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    feature_dim: usize,
    pub start: [f64; NUM_LABELS],
    pub end: [f64; NUM_LABELS],
    /// `transition[prev][next]`.
    pub transition: [[f64; NUM_LABELS]; NUM_LABELS],
    /// Label-major: weight of feature `j` for label `y` lives at
    /// `y * feature_dim + j`.
    emission: Vec<f64>,
}

impl Default for CrfModel {
    fn default() -> Self {
        Self::new(FEATURE_DIM)
    }
}

impl CrfModel {
    /// All-zero model over `feature_dim` hashed features.
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            start: [0.0; NUM_LABELS],
            end: [0.0; NUM_LABELS],
            transition: [[0.0; NUM_LABELS]; NUM_LABELS],
            emission: vec![0.0; NUM_LABELS * feature_dim],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_labels(&self) -> usize {
        NUM_LABELS
    }

    #[inline]
    pub fn emission(&self, label: Label, feature: u32) -> f64 {
        self.emission[label.index() * self.feature_dim + feature as usize]
    }

    #[inline]
    pub fn emission_mut(&mut self, label: Label, feature: u32) -> &mut f64 {
        &mut self.emission[label.index() * self.feature_dim + feature as usize]
    }

    pub fn emission_weights(&self) -> &[f64] {
        &self.emission
    }

    pub fn emission_weights_mut(&mut self) -> &mut [f64] {
        &mut self.emission
    }

    pub fn is_finite(&self) -> bool {
        self.start.iter().all(|w| w.is_finite())
            && self.end.iter().all(|w| w.is_finite())
            && self.transition.iter().flatten().all(|w| w.is_finite())
            && self.emission.iter().all(|w| w.is_finite())
    }

    /// Squared L2 norm of every weight.
    pub fn squared_norm(&self) -> f64 {
        let small: f64 = self
            .start
            .iter()
            .chain(&self.end)
            .chain(self.transition.iter().flatten())
            .map(|w| w * w)
            .sum();
        small + self.emission.iter().map(|w| w * w).sum::<f64>()
    }
}
