//! Reinforcement-learning label correction for noisy training sets.
//!
//! A stochastic policy decides, per instance, whether to replace the current
//! label with an attention-weighted vote of its k nearest neighbors in the
//! embedding space of a trainable extractor. The policy is trained with an
//! actor-critic method whose rewards measure k-NN label consistency under a
//! frozen copy of the extractor; the trained policy then cleans the training
//! set before the classifier is fine-tuned.
//!
//! Module map:
//! - [`label`]: instances, soft labels, states, actions, trajectories
//! - [`mlp`], [`embed`]: networks with manual backprop, warm-up training
//! - [`neighbors`]: exact k-NN and attention aggregation
//! - [`policy`]: correction probabilities, sampling, transitions, log-prob gradients
//! - [`reward`], [`critic`]: rewards, state histograms, Q network
//! - [`trainer`], [`experiment`]: training loop, deployment, full pipeline
//! - [`datagen`], [`io`]: synthetic data, CSV and checkpoint files

pub mod critic;
pub mod datagen;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod io;
pub mod label;
pub mod mlp;
pub mod neighbors;
mod parallel;
pub mod policy;
pub mod reward;
pub mod trainer;

pub use error::{Error, Result};
pub use label::{
    argmax_class, label_accuracy, one_hot, ActionVector, GroundTruth, Instance, LabelState,
    SoftLabel, Trajectory,
};
pub use trainer::{Ablations, RunMetrics, TrainConfig};
