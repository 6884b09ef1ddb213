//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the library's neighbor, attention or reward code;
//! the oracles work on plain `Vec<f64>` rows and are written for clarity, not
//! speed.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relabel_core::label::{Instance, LabelState, SoftLabel};
use relabel_core::mlp::{Gradients, Mlp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Random point on the simplex with every entry strictly positive.
pub fn random_simplex(rng: &mut impl Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

pub fn random_soft_label(rng: &mut impl Rng, c: usize) -> SoftLabel {
    SoftLabel::new(random_simplex(rng, c)).unwrap()
}

pub fn state_from(rows: &[Vec<f64>], labels: Vec<SoftLabel>) -> LabelState {
    let instances = rows
        .iter()
        .enumerate()
        .map(|(i, r)| Instance::new(i, r.clone()).unwrap())
        .collect();
    LabelState::new(Arc::new(instances), labels).unwrap()
}

/// Random features with random soft labels.
pub fn random_soft_state(rng: &mut impl Rng, n: usize, d: usize, c: usize) -> LabelState {
    let rows = random_rows(rng, n, d);
    let labels = (0..n).map(|_| random_soft_label(rng, c)).collect();
    state_from(&rows, labels)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

/// Full sort of every other row by (distance, index).
pub fn brute_knn(rows: &[Vec<f64>], query: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&j| j != query)
        .map(|j| (dist2(&rows[query], &rows[j]), j))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, j)| j).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// KL divergence with 1e-8 added to every entry of both arguments, then
/// renormalised.
pub fn naive_kl(p: &[f64], q: &[f64]) -> f64 {
    let eps = 1e-8;
    let zp: f64 = p.iter().map(|v| v + eps).sum();
    let zq: f64 = q.iter().map(|v| v + eps).sum();
    let mut kl = 0.0;
    for j in 0..p.len() {
        let a = (p[j] + eps) / zp;
        let b = (q[j] + eps) / zq;
        kl += a * (a / b).ln();
    }
    kl.max(0.0)
}

/// Attention-weighted neighbor aggregate of `labels` around `query`.
pub fn naive_aggregate(
    rows: &[Vec<f64>],
    labels: &[Vec<f64>],
    query: usize,
    neighbors: &[usize],
    tau: f64,
) -> Vec<f64> {
    let scores: Vec<f64> = neighbors
        .iter()
        .map(|&j| cosine(&rows[query], &rows[j]) / tau)
        .collect();
    let w = naive_softmax(&scores);
    let mut agg = vec![0.0; labels[0].len()];
    for (&j, &a) in neighbors.iter().zip(&w) {
        for c in 0..agg.len() {
            agg[c] += a * labels[j][c];
        }
    }
    agg
}

/// Label consistency reward from embeddings, computed from scratch.
pub fn naive_lcr(rows: &[Vec<f64>], labels: &[Vec<f64>], k: usize, tau: f64) -> f64 {
    let n = rows.len();
    let mut total = 0.0;
    for i in 0..n {
        let nb = brute_knn(rows, i, k);
        let agg = naive_aggregate(rows, labels, i, &nb, tau);
        total += naive_kl(&labels[i], &agg);
    }
    -total / n as f64
}

pub fn flatten(g: &Gradients) -> Vec<f64> {
    g.iter().collect()
}

/// Central finite-difference gradient of `f` with respect to every parameter.
pub fn finite_difference(net: &Mlp, h: f64, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let n = net.num_params();
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let mut plus = net.clone();
        *plus.params_mut().nth(p).unwrap() += h;
        let mut minus = net.clone();
        *minus.params_mut().nth(p).unwrap() -= h;
        out.push((f(&plus) - f(&minus)) / (2.0 * h));
    }
    out
}

/// `|a - b| / max(|a| + |b|, floor)` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-10)
}

/// `log pi(a | s)` at extractor `theta`, with the neighbor lists, current
/// classes and comparison masks taken from a reference forward pass.
pub struct FrozenPolicy {
    pub neighbors: Vec<Vec<usize>>,
    pub current: Vec<usize>,
    /// `above[i][c]`: class `c` strictly beat the current class.
    pub above: Vec<Vec<bool>>,
    /// `at_least[i][c]`: class `c` tied or beat the current class.
    pub at_least: Vec<Vec<bool>>,
    pub tau: f64,
}

impl FrozenPolicy {
    pub fn from_reference(
        neighbors: Vec<Vec<usize>>,
        predicted: &[Vec<f64>],
        current: Vec<usize>,
        tau: f64,
    ) -> Self {
        let above = predicted
            .iter()
            .zip(&current)
            .map(|(y, &c)| y.iter().map(|&v| v > y[c]).collect())
            .collect();
        let at_least = predicted
            .iter()
            .zip(&current)
            .map(|(y, &c)| y.iter().map(|&v| v >= y[c]).collect())
            .collect();
        Self {
            neighbors,
            current,
            above,
            at_least,
            tau,
        }
    }

    pub fn log_prob(&self, theta: &Mlp, state: &LabelState, action: &[bool]) -> f64 {
        let eps = 1e-12;
        let rows: Vec<Vec<f64>> = state
            .instances
            .iter()
            .map(|x| theta.forward(&x.features).unwrap())
            .collect();
        let labels: Vec<Vec<f64>> = state.labels.iter().map(|l| l.probs().to_vec()).collect();
        let mut total = 0.0;
        for i in 0..rows.len() {
            let y = naive_aggregate(&rows, &labels, i, &self.neighbors[i], self.tau);
            let mut num = 0.0;
            let mut den = 0.0;
            for c in 0..y.len() {
                if self.above[i][c] {
                    num += y[c];
                }
                if self.at_least[i][c] {
                    den += y[c];
                }
            }
            let p = num / den;
            total += if action[i] {
                p.max(eps).ln()
            } else {
                (1.0 - p.min(1.0 - eps)).ln()
            };
        }
        total
    }
}
