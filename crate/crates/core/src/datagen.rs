//! Synthetic Gaussian-blob datasets with symmetric or instance-dependent label
//! noise.
//!
//! Instance-dependent noise uses a distance-based ambiguity score: with class
//! centroids `mu_c`, an instance's class posterior is `softmax_c(-|x - mu_c|)`
//! and its ambiguity is one minus the posterior of its true class. Flip
//! probabilities are proportional to ambiguity and rescaled so that the
//! expected flip fraction equals the requested rate. A flipped instance draws
//! its new class from the posterior restricted to the wrong classes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embed::softmax;
use crate::error::{Error, Result};
use crate::label::{GroundTruth, Instance, LabelState};
use crate::neighbors::squared_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub per_class: usize,
}

impl BlobSpec {
    pub fn new(means: Vec<Vec<f64>>, sigma: f64, per_class: usize) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        for m in &means {
            Error::check_dim("class mean", d, m.len())?;
        }
        for a in 0..means.len() {
            for b in a + 1..means.len() {
                if means[a] == means[b] {
                    return Err(Error::Config(format!("classes {a} and {b} share a mean")));
                }
            }
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("invalid standard deviation {sigma}")));
        }
        if per_class == 0 {
            return Err(Error::Config("samples per class must be positive".into()));
        }
        Ok(Self {
            means,
            sigma,
            per_class,
        })
    }

    /// Means on scaled coordinate axes so that every pair of means is
    /// `separation` apart. Requires `classes <= dim`.
    pub fn axis_aligned(
        classes: usize,
        dim: usize,
        separation: f64,
        sigma: f64,
        per_class: usize,
    ) -> Result<Self> {
        if classes > dim {
            return Err(Error::Config(format!(
                "axis-aligned layout needs classes ({classes}) <= dim ({dim})"
            )));
        }
        let scale = separation / std::f64::consts::SQRT_2;
        let means = (0..classes)
            .map(|c| {
                let mut m = vec![0.0; dim];
                m[c] = scale;
                m
            })
            .collect();
        Self::new(means, sigma, per_class)
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }
}

/// Class-major samples around each mean, labelled with their true class.
pub fn generate_blobs(spec: &BlobSpec, seed: u64) -> Result<(LabelState, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(spec.per_class * spec.num_classes());
    let mut truth = Vec::with_capacity(instances.capacity());
    for (c, mean) in spec.means.iter().enumerate() {
        for _ in 0..spec.per_class {
            let features = mean
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + spec.sigma * z
                })
                .collect();
            instances.push(Instance::new(instances.len(), features)?);
            truth.push(c);
        }
    }
    let state = LabelState::from_hard_labels(Arc::new(instances), &truth, spec.num_classes())?;
    Ok((state, GroundTruth::new(truth)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Idn,
    Symmetric,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idn" => Ok(NoiseKind::Idn),
            "symmetric" | "sym" => Ok(NoiseKind::Symmetric),
            other => Err(Error::Config(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Config(format!("noise rate must be in [0, 1), got {rate}")))
    }
}

fn other_class<R: Rng>(truth: usize, num_classes: usize, rng: &mut R) -> usize {
    let r = rng.random_range(0..num_classes - 1);
    if r >= truth {
        r + 1
    } else {
        r
    }
}

/// Each label moves to a uniformly random different class with probability
/// `rate`.
pub fn inject_symmetric_noise(
    truth: &GroundTruth,
    rate: f64,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    check_rate(rate)?;
    if num_classes < 2 {
        return Err(Error::Config("label noise needs at least two classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(truth
        .labels
        .iter()
        .map(|&t| {
            if rng.random::<f64>() < rate {
                other_class(t, num_classes, &mut rng)
            } else {
                t
            }
        })
        .collect())
}

fn class_centroids(instances: &[Instance], truth: &GroundTruth, num_classes: usize) -> Result<Vec<Vec<f64>>> {
    let d = instances.first().map_or(0, Instance::dim);
    let mut sums = vec![vec![0.0; d]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (x, &t) in instances.iter().zip(&truth.labels) {
        if t >= num_classes {
            return Err(Error::domain(format!("true class {t} out of range")));
        }
        counts[t] += 1;
        for (s, v) in sums[t].iter_mut().zip(&x.features) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    Ok(sums)
}

fn class_posteriors(x: &Instance, centroids: &[Vec<f64>]) -> Vec<f64> {
    let scores: Vec<f64> = centroids
        .iter()
        .map(|m| -squared_distance(&x.features, m).sqrt())
        .collect();
    softmax(&scores)
}

/// `1 - softmax_c(-|x - mu_c|)[true class]` per instance.
pub fn ambiguity(instances: &[Instance], truth: &GroundTruth, num_classes: usize) -> Result<Vec<f64>> {
    Error::check_dim("ambiguity truth", instances.len(), truth.len())?;
    let centroids = class_centroids(instances, truth, num_classes)?;
    Ok(instances
        .iter()
        .zip(&truth.labels)
        .map(|(x, &t)| 1.0 - class_posteriors(x, &centroids)[t])
        .collect())
}

/// Per-instance flip probabilities `min(1, s * a_i)` with `s` chosen so that
/// their mean equals `rate`.
pub fn idn_flip_probabilities(ambiguity: &[f64], rate: f64) -> Result<Vec<f64>> {
    check_rate(rate)?;
    if rate == 0.0 || ambiguity.is_empty() {
        return Ok(vec![0.0; ambiguity.len()]);
    }
    let n = ambiguity.len() as f64;
    let mean_at = |s: f64| ambiguity.iter().map(|a| (s * a).min(1.0)).sum::<f64>() / n;
    let positive = ambiguity.iter().filter(|&&a| a > 0.0).count() as f64;
    if positive / n < rate {
        return Err(Error::domain(format!(
            "only {positive} instances have positive ambiguity; cannot reach rate {rate}"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while mean_at(hi) < rate {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ambiguity.iter().map(|a| (hi * a).min(1.0)).collect())
}

/// Instance-dependent noise; returns the noisy class of every instance.
pub fn inject_idn_noise(
    instances: &[Instance],
    truth: &GroundTruth,
    num_classes: usize,
    rate: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    check_rate(rate)?;
    if num_classes < 2 {
        return Err(Error::Config("label noise needs at least two classes".into()));
    }
    let centroids = class_centroids(instances, truth, num_classes)?;
    let amb = ambiguity(instances, truth, num_classes)?;
    let flip = idn_flip_probabilities(&amb, rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(instances
        .iter()
        .zip(&truth.labels)
        .zip(&flip)
        .map(|((x, &t), &p)| {
            if rng.random::<f64>() >= p {
                return t;
            }
            let post = class_posteriors(x, &centroids);
            let wrong_mass: f64 = post.iter().enumerate().filter(|&(c, _)| c != t).map(|(_, v)| v).sum();
            let mut u = rng.random::<f64>() * wrong_mass;
            let mut pick = if t == 0 { 1 } else { 0 };
            for (c, &v) in post.iter().enumerate() {
                if c == t {
                    continue;
                }
                pick = c;
                if u < v {
                    break;
                }
                u -= v;
            }
            pick
        })
        .collect())
}

/// Applies a noise model to a clean state, returning the noisy state.
pub fn apply_noise(clean: &LabelState, truth: &GroundTruth, noise: &NoiseSpec) -> Result<LabelState> {
    let c = clean.num_classes();
    let noisy = match noise.kind {
        NoiseKind::Symmetric => inject_symmetric_noise(truth, noise.rate, c, noise.seed)?,
        NoiseKind::Idn => inject_idn_noise(&clean.instances, truth, c, noise.rate, noise.seed)?,
    };
    LabelState::from_hard_labels(Arc::clone(&clean.instances), &noisy, c)
}
