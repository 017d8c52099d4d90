use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::inference::{
    backward, forward, log_potentials, log_z_from, marginals_from, path_score_from,
};
use super::{CrfError, CrfModel, Sequence, NUM_LABELS};
use crate::corpus::Label;
use crate::exec::{derive_seed, map_indexed, Execution};
use crate::features::{FeatureVector, FEATURE_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `w -= step * g`
    Sgd,
    /// Diagonal AdaGrad: `w -= step * g / sqrt(Σ g²)`.
    #[default]
    Adagrad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    /// Seeds the feature-dropout masks. Weights start at zero.
    pub init_seed: u64,
    pub step_size: f64,
    pub l2: f64,
    pub feature_dropout: f64,
    /// Stop after this many epochs without dev-loss improvement.
    pub patience: Option<usize>,
    pub optimizer: Optimizer,
    pub feature_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 12,
            shuffle_seed: 1024,
            init_seed: 1024,
            step_size: 0.05,
            l2: 1e-4,
            feature_dropout: 0.075,
            patience: None,
            optimizer: Optimizer::Adagrad,
            feature_dim: FEATURE_DIM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CrfError> {
        let bad = |m: &str| Err(CrfError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return bad("step_size must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if !(0.0..1.0).contains(&self.feature_dropout) {
            return bad("feature_dropout must lie in [0, 1)");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        Ok(())
    }
}

/// Gradient of the regularised negative log-likelihood.
///
/// The dense parameters (`start`, `end`, `transition`) include the L2 term.
/// Emission entries hold only the data term for features that occurred in
/// the batch; the full emission gradient is `data + l2 * w` (see
/// [`Gradient::emission_total`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub start: [f64; NUM_LABELS],
    pub end: [f64; NUM_LABELS],
    pub transition: [[f64; NUM_LABELS]; NUM_LABELS],
    pub emission: BTreeMap<u32, [f64; NUM_LABELS]>,
    pub l2: f64,
}

impl Gradient {
    fn zero(l2: f64) -> Self {
        Self {
            start: [0.0; NUM_LABELS],
            end: [0.0; NUM_LABELS],
            transition: [[0.0; NUM_LABELS]; NUM_LABELS],
            emission: BTreeMap::new(),
            l2,
        }
    }

    pub fn emission_total(&self, model: &CrfModel, label: Label, feature: u32) -> f64 {
        let data = self
            .emission
            .get(&feature)
            .map_or(0.0, |g| g[label.index()]);
        data + self.l2 * model.emission(label, feature)
    }
}

struct SeqGrad {
    loss: f64,
    start: [f64; NUM_LABELS],
    end: [f64; NUM_LABELS],
    transition: [[f64; NUM_LABELS]; NUM_LABELS],
    /// `(feature, [d/dw_human, d/dw_machine])` in token order.
    emission: Vec<(u32, [f64; NUM_LABELS])>,
}

fn check_lengths(batch: &[Sequence]) -> Result<(), CrfError> {
    for (index, s) in batch.iter().enumerate() {
        if s.features.len() != s.labels.len() {
            return Err(CrfError::LengthMismatch {
                index,
                features: s.features.len(),
                labels: s.labels.len(),
            });
        }
    }
    Ok(())
}

fn sequence_nll(model: &CrfModel, features: &[FeatureVector], labels: &[Label]) -> f64 {
    let pot = log_potentials(model, features);
    log_z_from(model, &pot) - path_score_from(model, &pot, labels)
}

#[allow(clippy::needless_range_loop)]
fn sequence_grad(model: &CrfModel, features: &[FeatureVector], labels: &[Label]) -> SeqGrad {
    let n = labels.len();
    let mut g = SeqGrad {
        loss: 0.0,
        start: [0.0; NUM_LABELS],
        end: [0.0; NUM_LABELS],
        transition: [[0.0; NUM_LABELS]; NUM_LABELS],
        emission: Vec::new(),
    };
    if n == 0 {
        return g;
    }
    let pot = log_potentials(model, features);
    let alpha = forward(model, &pot);
    let beta = backward(model, &pot);
    let log_z = log_z_from(model, &pot);
    let marg = marginals_from(&alpha, &beta, log_z);
    g.loss = log_z - path_score_from(model, &pot, labels);

    for y in 0..NUM_LABELS {
        g.start[y] = marg[0][y];
        g.end[y] = marg[n - 1][y];
    }
    g.start[labels[0].index()] -= 1.0;
    g.end[labels[n - 1].index()] -= 1.0;

    for t in 1..n {
        for a in 0..NUM_LABELS {
            for b in 0..NUM_LABELS {
                g.transition[a][b] +=
                    (alpha[t - 1][a] + model.transition[a][b] + pot[t][b] + beta[t][b] - log_z)
                        .exp();
            }
        }
        g.transition[labels[t - 1].index()][labels[t].index()] -= 1.0;
    }

    g.emission
        .reserve(features.iter().map(FeatureVector::len).sum());
    for (t, fv) in features.iter().enumerate() {
        let mut d = marg[t];
        d[labels[t].index()] -= 1.0;
        for &j in fv.indices() {
            g.emission.push((j, d));
        }
    }
    g
}

/// Negative log-likelihood of a batch, without regularisation.
pub fn nll(model: &CrfModel, batch: &[Sequence], exec: Execution) -> Result<f64, CrfError> {
    check_lengths(batch)?;
    let losses = map_indexed(exec, batch, |_, s| {
        sequence_nll(model, &s.features, &s.labels)
    });
    Ok(losses.iter().sum())
}

/// `Σ (log Z − gold score) + (l2/2)·‖w‖²` and its gradient.
///
/// Per-sequence work may run in parallel; contributions are reduced in batch
/// order, so the result is bit-identical for every [`Execution`].
pub fn nll_and_grad(
    model: &CrfModel,
    batch: &[Sequence],
    l2: f64,
    exec: Execution,
) -> Result<(f64, Gradient), CrfError> {
    check_lengths(batch)?;
    let parts = map_indexed(exec, batch, |_, s| {
        sequence_grad(model, &s.features, &s.labels)
    });
    let mut grad = Gradient::zero(l2);
    let mut loss = 0.0;
    for p in parts {
        loss += p.loss;
        for y in 0..NUM_LABELS {
            grad.start[y] += p.start[y];
            grad.end[y] += p.end[y];
            for z in 0..NUM_LABELS {
                grad.transition[y][z] += p.transition[y][z];
            }
        }
        for (j, d) in p.emission {
            let e = grad.emission.entry(j).or_insert([0.0; NUM_LABELS]);
            e[0] += d[0];
            e[1] += d[1];
        }
    }
    if l2 > 0.0 {
        loss += 0.5 * l2 * model.squared_norm();
        for y in 0..NUM_LABELS {
            grad.start[y] += l2 * model.start[y];
            grad.end[y] += l2 * model.end[y];
            for z in 0..NUM_LABELS {
                grad.transition[y][z] += l2 * model.transition[y][z];
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Regularised objective over the full training set after the epoch.
    pub train_loss: f64,
    /// Unregularised NLL over the dev set after the epoch.
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub warnings: Vec<String>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_loss\n");
        for e in &self.epochs {
            let dev = e.dev_loss.map(|d| d.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, dev));
        }
        out
    }
}

struct Accumulators {
    small: [f64; 8],
    emission: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-8;

#[inline]
fn adagrad(w: &mut f64, acc: &mut f64, g: f64, step: f64) {
    if g != 0.0 {
        *acc += g * g;
        *w -= step * g / (acc.sqrt() + ADAGRAD_EPS);
    }
}

fn apply(
    model: &mut CrfModel,
    grad: &Gradient,
    config: &TrainConfig,
    acc: &mut Option<Accumulators>,
) {
    let step = config.step_size;
    let dim = model.feature_dim();
    match acc {
        None => {
            for y in 0..NUM_LABELS {
                model.start[y] -= step * grad.start[y];
                model.end[y] -= step * grad.end[y];
                for z in 0..NUM_LABELS {
                    model.transition[y][z] -= step * grad.transition[y][z];
                }
            }
            if grad.l2 > 0.0 {
                let decay = 1.0 - step * grad.l2;
                for w in model.emission_weights_mut() {
                    *w *= decay;
                }
            }
            for (&j, d) in &grad.emission {
                for y in Label::ALL {
                    *model.emission_mut(y, j) -= step * d[y.index()];
                }
            }
        }
        Some(acc) => {
            for y in 0..NUM_LABELS {
                adagrad(&mut model.start[y], &mut acc.small[y], grad.start[y], step);
                adagrad(&mut model.end[y], &mut acc.small[2 + y], grad.end[y], step);
                for z in 0..NUM_LABELS {
                    adagrad(
                        &mut model.transition[y][z],
                        &mut acc.small[4 + 2 * y + z],
                        grad.transition[y][z],
                        step,
                    );
                }
            }
            let l2 = grad.l2;
            let weights = model.emission_weights_mut();
            for y in 0..NUM_LABELS {
                let row = &mut weights[y * dim..(y + 1) * dim];
                let acc_row = &mut acc.emission[y * dim..(y + 1) * dim];
                let mut data = grad.emission.iter().peekable();
                for j in 0..dim {
                    let mut g = l2 * row[j];
                    if let Some((&k, d)) = data.peek() {
                        if k as usize == j {
                            g += d[y];
                            data.next();
                        }
                    }
                    adagrad(&mut row[j], &mut acc_row[j], g, step);
                }
            }
        }
    }
}

/// Mini-batch training from an all-zero model.
///
/// Each epoch shuffles the training order with a generator seeded once from
/// `shuffle_seed`; each sequence's dropout mask is seeded from
/// `(init_seed, epoch, index)`. The result is identical for every
/// [`Execution`].
pub fn train(
    train_set: &[Sequence],
    dev_set: &[Sequence],
    config: &TrainConfig,
    exec: Execution,
) -> Result<(CrfModel, TrainLog), CrfError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(CrfError::EmptyTrainingSet);
    }
    check_lengths(train_set)?;
    check_lengths(dev_set)?;
    if let Some(s) = train_set
        .iter()
        .flat_map(|s| s.features.iter())
        .flat_map(|f| f.indices())
        .find(|&&j| j as usize >= config.feature_dim)
    {
        return Err(CrfError::InvalidConfig(format!(
            "feature index {s} exceeds feature_dim {}",
            config.feature_dim
        )));
    }

    let mut log = TrainLog::default();
    let mut seen = [false; NUM_LABELS];
    for l in train_set.iter().flat_map(|s| &s.labels) {
        seen[l.index()] = true;
    }
    if !(seen[0] && seen[1]) {
        let msg = "training set contains a single label; the model will be degenerate".to_string();
        warn!("{msg}");
        log.warnings.push(msg);
    }

    let mut model = CrfModel::new(config.feature_dim);
    let mut acc = match config.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adagrad => Some(Accumulators {
            small: [0.0; 8],
            emission: vec![0.0; NUM_LABELS * config.feature_dim],
        }),
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut best_dev = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sequence> = chunk
                .iter()
                .map(|&i| {
                    let s = &train_set[i];
                    if config.feature_dropout > 0.0 {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                            config.init_seed,
                            epoch as u64,
                            i as u64,
                        ));
                        Sequence::new(
                            s.features
                                .iter()
                                .map(|f| f.dropout(config.feature_dropout, &mut rng))
                                .collect(),
                            s.labels.clone(),
                        )
                    } else {
                        s.clone()
                    }
                })
                .collect();
            let (_, grad) = nll_and_grad(&model, &batch, config.l2, exec)?;
            apply(&mut model, &grad, config, &mut acc);
        }

        let train_loss = nll(&model, train_set, exec)? + 0.5 * config.l2 * model.squared_norm();
        let dev_loss = if dev_set.is_empty() {
            None
        } else {
            Some(nll(&model, dev_set, exec)?)
        };
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            train_loss,
            dev_loss,
        });
        if let (Some(patience), Some(d)) = (config.patience, dev_loss) {
            if d < best_dev {
                best_dev = d;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    if !model.is_finite() {
        return Err(CrfError::NonFinite);
    }
    Ok((model, log))
}
