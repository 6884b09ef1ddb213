//! Feature extractors and the classification head.
//!
//! The trainable extractor and the frozen reward extractor share one type;
//! freezing is a deep copy that the trainer never hands to an optimizer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{argmax, LabelState, SoftLabel};
use crate::mlp::{Activation, Dense, Gradients, Mlp, Sgd, Tape};
use crate::parallel;

pub type ExtractorParams = Mlp;
pub type ClassifierParams = Mlp;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_EMBED_DIM: usize = 16;

/// `d -> hidden (tanh) -> embed_dim (linear)`.
pub fn new_extractor(input_dim: usize, hidden: usize, embed_dim: usize, seed: u64) -> ExtractorParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(
        &[input_dim, hidden, embed_dim],
        Activation::Tanh,
        Activation::Identity,
        &mut rng,
    )
}

/// Linear head producing logits.
pub fn new_classifier(embed_dim: usize, num_classes: usize, seed: u64) -> ClassifierParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(
        &[embed_dim, num_classes],
        Activation::Identity,
        Activation::Identity,
        &mut rng,
    )
}

/// Single linear layer that copies its input.
pub fn identity_extractor(dim: usize) -> ExtractorParams {
    let mut layer = Dense::zeros(dim, dim, Activation::Identity);
    for i in 0..dim {
        layer.weights[i * dim + i] = 1.0;
    }
    Mlp { layers: vec![layer] }
}

/// Row-major `n x dim` matrix of embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Embeddings {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            Error::check_dim("embedding row", dim, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

pub fn forward(params: &ExtractorParams, features: &[f64]) -> Result<Vec<f64>> {
    params.forward(features)
}

pub fn forward_with_tape(params: &ExtractorParams, features: &[f64]) -> Result<(Vec<f64>, Tape)> {
    params.forward_with_tape(features)
}

/// Embeds every instance of the state.
pub fn embed_state(params: &ExtractorParams, state: &LabelState) -> Result<Embeddings> {
    Error::check_dim("extractor input", params.input_dim(), state.feature_dim())?;
    let rows = parallel::map(&state.instances, |x| params.forward(&x.features))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Embeddings {
        dim: params.output_dim(),
        data: rows.concat(),
    })
}

/// Embeds every instance and keeps the tapes for backpropagation.
pub fn embed_state_with_tapes(
    params: &ExtractorParams,
    state: &LabelState,
) -> Result<(Embeddings, Vec<Tape>)> {
    Error::check_dim("extractor input", params.input_dim(), state.feature_dim())?;
    let pairs = parallel::map(&state.instances, |x| params.forward_with_tape(&x.features))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(pairs.len() * params.output_dim());
    let mut tapes = Vec::with_capacity(pairs.len());
    for (e, t) in pairs {
        data.extend_from_slice(&e);
        tapes.push(t);
    }
    Ok((
        Embeddings {
            dim: params.output_dim(),
            data,
        },
        tapes,
    ))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn classify(psi: &ClassifierParams, embedding: &[f64]) -> Result<SoftLabel> {
    let logits = psi.forward(embedding)?;
    Ok(SoftLabel::from_simplex(softmax(&logits)))
}

/// Deep copy used as the frozen reward extractor.
pub fn freeze_copy(params: &ExtractorParams) -> ExtractorParams {
    params.clone()
}

/// Settings for supervised (soft cross-entropy) training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisedConfig {
    pub epochs: usize,
    /// Initial learning rate; divided by ten at the halfway epoch.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl SupervisedConfig {
    fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.epochs / 2 {
            self.lr
        } else {
            self.lr * 0.1
        }
    }
}

/// Soft cross-entropy `-sum_j y_j log p_j`.
pub fn soft_cross_entropy(target: &SoftLabel, predicted: &[f64]) -> f64 {
    target
        .probs()
        .iter()
        .zip(predicted)
        .filter(|(y, _)| **y > 0.0)
        .map(|(y, p)| -y * p.max(f64::MIN_POSITIVE).ln())
        .sum()
}

/// Mean soft cross-entropy of `psi . theta` over the state.
pub fn dataset_loss(theta: &ExtractorParams, psi: &ClassifierParams, state: &LabelState) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in state.instances.iter().zip(&state.labels) {
        let p = classify(psi, &theta.forward(&x.features)?)?;
        total += soft_cross_entropy(y, p.probs());
    }
    Ok(total / state.len() as f64)
}

/// Fraction of instances whose predicted class equals `targets[i]`.
pub fn classifier_accuracy(
    theta: &ExtractorParams,
    psi: &ClassifierParams,
    state: &LabelState,
    targets: &[usize],
) -> Result<f64> {
    Error::check_dim("classifier accuracy", state.len(), targets.len())?;
    let preds = parallel::map(&state.instances, |x| -> Result<usize> {
        let logits = psi.forward(&theta.forward(&x.features)?)?;
        Ok(argmax(&logits))
    });
    let mut hits = 0;
    for (p, &t) in preds.into_iter().zip(targets) {
        if p? == t {
            hits += 1;
        }
    }
    Ok(hits as f64 / targets.len().max(1) as f64)
}

/// Mean soft cross-entropy over `batch` and its gradients with respect to
/// the extractor and the classifier.
pub fn batch_gradients(
    theta: &ExtractorParams,
    psi: &ClassifierParams,
    state: &LabelState,
    batch: &[usize],
) -> Result<(f64, Gradients, Gradients)> {
    let mut g_theta = Gradients::zeros_like(theta);
    let mut g_psi = Gradients::zeros_like(psi);
    if batch.is_empty() {
        return Ok((0.0, g_theta, g_psi));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for &i in batch {
        let x = state
            .instances
            .get(i)
            .ok_or_else(|| Error::domain(format!("instance {i} out of range")))?;
        let (emb, t_tape) = theta.forward_with_tape(&x.features)?;
        let (logits, c_tape) = psi.forward_with_tape(&emb)?;
        let probs = softmax(&logits);
        let target = &state.labels[i];
        loss += soft_cross_entropy(target, &probs);
        // d CE / d logits = p - y for targets on the simplex
        let up: Vec<f64> = probs
            .iter()
            .zip(target.probs())
            .map(|(p, y)| (p - y) * scale)
            .collect();
        let d_emb = psi.backward(&c_tape, &up, &mut g_psi);
        theta.backward(&t_tape, &d_emb, &mut g_theta);
    }
    Ok((loss * scale, g_theta, g_psi))
}

/// Mini-batch soft cross-entropy training of `psi . theta`, in place. Returns
/// the mean training loss of each epoch. Zero epochs is a no-op.
pub fn train_supervised(
    theta: &mut ExtractorParams,
    psi: &mut ClassifierParams,
    state: &LabelState,
    cfg: &SupervisedConfig,
) -> Result<Vec<f64>> {
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    Error::check_dim("extractor input", theta.input_dim(), state.feature_dim())?;
    Error::check_dim("classifier input", psi.input_dim(), theta.output_dim())?;
    Error::check_dim("classifier classes", psi.output_dim(), state.num_classes())?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt_theta = Sgd::new(theta, cfg.momentum, cfg.weight_decay);
    let mut opt_psi = Sgd::new(psi, cfg.momentum, cfg.weight_decay);
    let mut order: Vec<usize> = (0..state.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, g_theta, g_psi) = batch_gradients(theta, psi, state, batch)?;
            epoch_loss += loss * batch.len() as f64;
            opt_theta.step(theta, &g_theta, lr);
            opt_psi.step(psi, &g_psi, lr);
        }
        let mean = epoch_loss / state.len() as f64;
        if !mean.is_finite() || !theta.is_finite() || !psi.is_finite() {
            return Err(Error::Divergence(format!(
                "supervised training produced non-finite values at epoch {epoch}"
            )));
        }
        history.push(mean);
    }
    Ok(history)
}

/// Warm-up training on the given (noisy) labels. Requires at least one epoch.
pub fn pretrain(
    theta: &ExtractorParams,
    psi: &ClassifierParams,
    state: &LabelState,
    cfg: &SupervisedConfig,
) -> Result<(ExtractorParams, ClassifierParams, Vec<f64>)> {
    if cfg.epochs == 0 {
        return Err(Error::Config("pretraining needs at least one epoch".into()));
    }
    let mut theta = theta.clone();
    let mut psi = psi.clone();
    let history = train_supervised(&mut theta, &mut psi, state, cfg)?;
    Ok((theta, psi, history))
}
