//! Dataset, label and trajectory data model.
//!
//! States are immutable values: a transition builds a new [`LabelState`] that
//! shares the instance list with its predecessor and owns a fresh label list.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a soft label.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub index: usize,
    pub features: Vec<f64>,
}

impl Instance {
    pub fn new(index: usize, features: Vec<f64>) -> Result<Self> {
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "instance {index}: feature {pos} is not finite"
            )));
        }
        Ok(Self { index, features })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("soft label must have at least one class"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::domain(format!("soft label entry {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::domain(format!("soft label sums to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Wraps a vector that is a simplex point by construction (softmax output,
    /// convex combination of valid labels).
    pub(crate) fn from_simplex(probs: Vec<f64>) -> Self {
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL,
            "not a simplex point: {probs:?}"
        );
        Self(probs)
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_valid(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|p| (0.0..=1.0).contains(p)) && (sum - 1.0).abs() <= SIMPLEX_TOL
    }
}

pub fn one_hot(class_index: usize, num_classes: usize) -> Result<SoftLabel> {
    if class_index >= num_classes {
        return Err(Error::domain(format!(
            "class index {class_index} out of range for {num_classes} classes"
        )));
    }
    let mut v = vec![0.0; num_classes];
    v[class_index] = 1.0;
    Ok(SoftLabel(v))
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax_class(label: &SoftLabel) -> usize {
    argmax(label.probs())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

/// True class indices. Only the evaluator consumes this type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
}

impl GroundTruth {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    pub instances: Arc<Vec<Instance>>,
    pub labels: Vec<SoftLabel>,
    pub step: usize,
}

impl LabelState {
    pub fn new(instances: Arc<Vec<Instance>>, labels: Vec<SoftLabel>) -> Result<Self> {
        Error::check_dim("label state", instances.len(), labels.len())?;
        if let Some(first) = instances.first() {
            let d = first.dim();
            if let Some(bad) = instances.iter().find(|x| x.dim() != d) {
                return Err(Error::Dimension {
                    context: "instance features",
                    expected: d,
                    got: bad.dim(),
                });
            }
        }
        if let Some(first) = labels.first() {
            let c = first.num_classes();
            if let Some(bad) = labels.iter().find(|y| y.num_classes() != c) {
                return Err(Error::Dimension {
                    context: "soft label classes",
                    expected: c,
                    got: bad.num_classes(),
                });
            }
        }
        Ok(Self {
            instances,
            labels,
            step: 0,
        })
    }

    /// Builds the initial state from hard class indices.
    pub fn from_hard_labels(
        instances: Arc<Vec<Instance>>,
        classes: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        let labels = classes
            .iter()
            .map(|&c| one_hot(c, num_classes))
            .collect::<Result<Vec<_>>>()?;
        Self::new(instances, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.first().map_or(0, SoftLabel::num_classes)
    }

    pub fn feature_dim(&self) -> usize {
        self.instances.first().map_or(0, Instance::dim)
    }

    pub fn hard_labels(&self) -> Vec<usize> {
        self.labels.iter().map(argmax_class).collect()
    }

    /// Same instances, new labels, step incremented.
    pub(crate) fn successor(&self, labels: Vec<SoftLabel>) -> Self {
        Self {
            instances: Arc::clone(&self.instances),
            labels,
            step: self.step + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVector(Vec<bool>);

impl ActionVector {
    pub fn new(decisions: Vec<bool>) -> Self {
        Self(decisions)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn decisions(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_corrected(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: LabelState,
    pub action: ActionVector,
    pub reward: f64,
    pub q_value: f64,
}

/// A rollout: `steps[t]` holds `(s^t, a^t, R(s^t, a^t), Q(s^t, a^t))`, and
/// `final_state` is `s^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub final_state: LabelState,
}

impl Trajectory {
    pub fn num_states(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn num_actions(&self) -> usize {
        self.steps.len()
    }

    pub fn states(&self) -> impl Iterator<Item = &LabelState> {
        self.steps
            .iter()
            .map(|s| &s.state)
            .chain(std::iter::once(&self.final_state))
    }
}

/// Fraction of instances whose argmax label equals the true class.
pub fn label_accuracy(state: &LabelState, truth: &GroundTruth) -> Result<f64> {
    Error::check_dim("label accuracy", truth.len(), state.len())?;
    if state.is_empty() {
        return Err(Error::domain("label accuracy of an empty state"));
    }
    let hits = state
        .labels
        .iter()
        .zip(&truth.labels)
        .filter(|(y, &t)| argmax_class(y) == t)
        .count();
    Ok(hits as f64 / state.len() as f64)
}
