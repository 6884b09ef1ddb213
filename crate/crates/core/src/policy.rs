//! The stochastic correction policy.
//!
//! For every instance the policy aggregates the current labels of its
//! k nearest neighbors (embedding space of the trainable extractor) into a
//! predicted label `y_bar`, and turns the disagreement between `y_bar` and the
//! instance's current class into a correction probability:
//!
//! ```text
//! p_i = sum_j [y_bar_j >  y_bar_c] y_bar_j
//!     / sum_j [y_bar_j >= y_bar_c] y_bar_j        c = argmax of current label
//! ```
//!
//! Actions are independent Bernoulli draws; a corrected instance takes `y_bar`
//! as its new (soft) label.
//!
//! The log-probability gradient treats the comparison masks and the neighbor
//! membership as constants of the forward pass and differentiates through the
//! attention weights and the aggregated labels only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::{embed_state_with_tapes, Embeddings, ExtractorParams};
use crate::error::{Error, Result};
use crate::label::{argmax_class, ActionVector, LabelState, SoftLabel};
use crate::mlp::{Gradients, Tape};
use crate::neighbors::{aggregate_labels, neighbor_sets, NeighborSet};
use crate::parallel;

/// Lower bound on the argument of every log in the log-probability.
pub const LOG_PROB_EPS: f64 = 1e-12;

const BACKWARD_CHUNK: usize = 64;

/// Correction probability of an instance whose current class is
/// `current_class`, given the neighborhood prediction `y_bar`.
///
/// The value is 0 exactly when `current_class` is an argmax of `y_bar`, and 1
/// exactly when `y_bar` puts no mass on `current_class`.
pub fn correction_probability(y_bar: &SoftLabel, current_class: usize) -> Result<f64> {
    let probs = y_bar.probs();
    let reference = *probs.get(current_class).ok_or_else(|| {
        Error::domain(format!(
            "class {current_class} out of range for {} classes",
            probs.len()
        ))
    })?;
    let (mut above, mut at_least) = (0.0, 0.0);
    for &v in probs {
        if v > reference {
            above += v;
        }
        if v >= reference {
            at_least += v;
        }
    }
    let p = above / at_least;
    if !p.is_finite() {
        return Err(Error::Divergence(format!(
            "correction probability is not finite for {probs:?}"
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct PolicyOutput {
    /// `p(a_i = 1)` per instance.
    pub probs: Vec<f64>,
    /// Neighborhood label predictions `y_bar_i`.
    pub predicted: Vec<SoftLabel>,
    pub neighborhoods: Vec<NeighborSet>,
    /// Argmax class of each current label.
    pub current_classes: Vec<usize>,
    pub embeddings: Embeddings,
    pub tau: f64,
    tapes: Vec<Tape>,
}

impl PolicyOutput {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub fn policy_forward(
    theta: &ExtractorParams,
    state: &LabelState,
    k: usize,
    tau: f64,
) -> Result<PolicyOutput> {
    let (embeddings, tapes) = embed_state_with_tapes(theta, state)?;
    let (neighborhoods, _) = neighbor_sets(&embeddings, k, tau)?;
    let predicted = neighborhoods
        .iter()
        .map(|set| aggregate_labels(set, &state.labels))
        .collect::<Result<Vec<_>>>()?;
    let current_classes: Vec<usize> = state.labels.iter().map(argmax_class).collect();
    let probs = predicted
        .iter()
        .zip(&current_classes)
        .map(|(y, &c)| correction_probability(y, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyOutput {
        probs,
        predicted,
        neighborhoods,
        current_classes,
        embeddings,
        tau,
        tapes,
    })
}

/// Independent Bernoulli draw per instance.
pub fn sample_action<R: Rng + ?Sized>(output: &PolicyOutput, rng: &mut R) -> ActionVector {
    ActionVector::new(output.probs.iter().map(|&p| rng.random::<f64>() < p).collect())
}

pub fn sample_action_seeded(output: &PolicyOutput, seed: u64) -> ActionVector {
    sample_action(output, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Deterministic transition: corrected instances take their predicted label,
/// all others keep their current label unchanged.
pub fn transition(
    state: &LabelState,
    action: &ActionVector,
    output: &PolicyOutput,
) -> Result<LabelState> {
    Error::check_dim("transition action", state.len(), action.len())?;
    Error::check_dim("transition policy output", state.len(), output.len())?;
    let labels = state
        .labels
        .iter()
        .zip(&output.predicted)
        .zip(action.decisions())
        .map(|((current, predicted), &a)| if a { predicted.clone() } else { current.clone() })
        .collect();
    Ok(state.successor(labels))
}

/// `log p` or `log(1 - p)` with the argument of the log bounded below by
/// `LOG_PROB_EPS`.
fn bernoulli_log(p: f64, corrected: bool) -> f64 {
    if corrected {
        p.max(LOG_PROB_EPS).ln()
    } else {
        (1.0 - p.min(1.0 - LOG_PROB_EPS)).ln()
    }
}

/// `log pi(a | s)` under independent Bernoulli actions.
pub fn log_prob(output: &PolicyOutput, action: &ActionVector) -> Result<f64> {
    Error::check_dim("log-prob action", output.len(), action.len())?;
    let mut total = 0.0;
    for (i, (&p, &a)) in output.probs.iter().zip(action.decisions()).enumerate() {
        if a && p == 0.0 {
            return Err(Error::domain(format!(
                "instance {i} is corrected although its correction probability is 0"
            )));
        }
        total += bernoulli_log(p, a);
    }
    Ok(total)
}

/// Gradient of `log pi(a | s)` with respect to one instance's neighborhood
/// prediction `y_bar_i`. `None` when the term is locally constant: the
/// probability is structurally 0 or the log argument is clamped.
fn d_log_prob_d_prediction(y_bar: &[f64], current_class: usize, corrected: bool) -> Option<Vec<f64>> {
    let reference = y_bar[current_class];
    let (mut above, mut at_least) = (0.0, 0.0);
    for &v in y_bar {
        if v > reference {
            above += v;
        }
        if v >= reference {
            at_least += v;
        }
    }
    let p = above / at_least;
    if above == 0.0 || (corrected && p <= LOG_PROB_EPS) || (!corrected && p >= 1.0 - LOG_PROB_EPS) {
        return None;
    }
    let d_log = if corrected { 1.0 / p } else { -1.0 / (1.0 - p) };
    let denom_sq = at_least * at_least;
    Some(
        y_bar
            .iter()
            .map(|&v| {
                let in_num = if v > reference { at_least } else { 0.0 };
                let in_den = if v >= reference { above } else { 0.0 };
                d_log * (in_num - in_den) / denom_sq
            })
            .collect(),
    )
}

/// Per-instance embedding gradients contributed by instance `i`'s term.
fn embedding_contributions(
    output: &PolicyOutput,
    labels: &[SoftLabel],
    i: usize,
    corrected: bool,
) -> Vec<(usize, Vec<f64>)> {
    let set = &output.neighborhoods[i];
    let Some(g_pred) =
        d_log_prob_d_prediction(output.predicted[i].probs(), output.current_classes[i], corrected)
    else {
        return Vec::new();
    };
    // through y_bar = sum_j alpha_j y_j
    let g_alpha: Vec<f64> = set
        .indices
        .iter()
        .map(|&j| labels[j].probs().iter().zip(&g_pred).map(|(y, g)| y * g).sum())
        .collect();
    // through the softmax over sim / tau
    let mean: f64 = set.attention.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();
    let e_i = output.embeddings.row(i);
    let norm_i = e_i.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dim = output.embeddings.dim;
    let mut g_query = vec![0.0; dim];
    let mut out = Vec::with_capacity(set.indices.len() + 1);
    for ((&j, &a), &ga) in set.indices.iter().zip(&set.attention).zip(&g_alpha) {
        let g_sim = a * (ga - mean) / output.tau;
        let e_j = output.embeddings.row(j);
        let norm_j = e_j.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_i == 0.0 || norm_j == 0.0 || g_sim == 0.0 {
            continue;
        }
        let inv = 1.0 / (norm_i * norm_j);
        let cos = e_i.iter().zip(e_j).map(|(x, y)| x * y).sum::<f64>() * inv;
        let mut g_nb = vec![0.0; dim];
        for d in 0..dim {
            g_query[d] += g_sim * (e_j[d] * inv - cos * e_i[d] / (norm_i * norm_i));
            g_nb[d] = g_sim * (e_i[d] * inv - cos * e_j[d] / (norm_j * norm_j));
        }
        out.push((j, g_nb));
    }
    out.push((i, g_query));
    out
}

/// `d log pi(a | s) / d theta` with masks and neighbor sets held fixed.
pub fn log_prob_gradient(
    theta: &ExtractorParams,
    state: &LabelState,
    action: &ActionVector,
    output: &PolicyOutput,
) -> Result<Gradients> {
    let n = state.len();
    Error::check_dim("policy gradient action", n, action.len())?;
    Error::check_dim("policy gradient output", n, output.len())?;
    Error::check_dim("policy gradient tapes", n, output.tapes.len())?;
    let decisions = action.decisions();

    let contributions =
        parallel::map_range(n, |i| embedding_contributions(output, &state.labels, i, decisions[i]));
    let dim = output.embeddings.dim;
    let mut g_emb = vec![vec![0.0; dim]; n];
    for list in contributions {
        for (j, g) in list {
            for (acc, v) in g_emb[j].iter_mut().zip(g) {
                *acc += v;
            }
        }
    }

    let chunks = n.div_ceil(BACKWARD_CHUNK);
    let partials = parallel::map_range(chunks, |c| {
        let mut g = Gradients::zeros_like(theta);
        for idx in c * BACKWARD_CHUNK..((c + 1) * BACKWARD_CHUNK).min(n) {
            if g_emb[idx].iter().any(|&v| v != 0.0) {
                theta.backward(&output.tapes[idx], &g_emb[idx], &mut g);
            }
        }
        g
    });
    let mut total = Gradients::zeros_like(theta);
    for g in &partials {
        total.add_assign(g);
    }
    Ok(total)
}

/// One actor step: `theta + lr * q * grad log pi(a | s)`.
pub fn policy_gradient_step(
    theta: &ExtractorParams,
    state: &LabelState,
    action: &ActionVector,
    output: &PolicyOutput,
    q_value: f64,
    lr: f64,
) -> Result<ExtractorParams> {
    if !q_value.is_finite() {
        return Err(Error::Divergence(format!("Q estimate {q_value} is not finite")));
    }
    let mut next = theta.clone();
    if q_value == 0.0 || lr == 0.0 {
        return Ok(next);
    }
    let grad = log_prob_gradient(theta, state, action, output)?;
    if !grad.is_finite() {
        return Err(Error::Divergence("policy gradient is not finite".into()));
    }
    next.apply(lr * q_value, &grad);
    Ok(next)
}
