//! Browser bindings for a small label-cleaning playground.
//!
//! A [`Scene`] holds noisy 2-D Gaussian blobs. Each call to [`Scene::step`]
//! runs one correction step of the neighborhood policy, using the raw
//! coordinates as the embedding, and records the label accuracy.

use std::f64::consts::TAU;

use relabel_core::datagen::{apply_noise, generate_blobs, BlobSpec, NoiseKind, NoiseSpec};
use relabel_core::embed::{identity_extractor, ExtractorParams};
use relabel_core::policy::{policy_forward, sample_action_seeded, transition, PolicyOutput};
use relabel_core::{label_accuracy, GroundTruth, LabelState, SoftLabel};
use wasm_bindgen::prelude::*;

fn js_err(e: relabel_core::Error) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Scene {
    state: LabelState,
    truth: GroundTruth,
    extractor: ExtractorParams,
    k: usize,
    tau: f64,
    seed: u64,
    output: PolicyOutput,
    trace: Vec<f64>,
    last_corrected: Vec<u32>,
}

#[wasm_bindgen]
impl Scene {
    /// Blobs with means evenly spaced on a circle of the given radius, unit
    /// spread, and labels flipped at `noise_rate`. `idn` selects
    /// instance-dependent noise instead of symmetric noise.
    #[wasm_bindgen(constructor)]
    pub fn new(
        classes: usize,
        per_class: usize,
        radius: f64,
        noise_rate: f64,
        idn: bool,
        seed: u64,
    ) -> Result<Scene, String> {
        let means = (0..classes)
            .map(|c| {
                let angle = TAU * c as f64 / classes as f64;
                vec![radius * angle.cos(), radius * angle.sin()]
            })
            .collect();
        let spec = BlobSpec::new(means, 1.0, per_class).map_err(js_err)?;
        let (clean, truth) = generate_blobs(&spec, seed).map_err(js_err)?;
        let noise = NoiseSpec {
            kind: if idn { NoiseKind::Idn } else { NoiseKind::Symmetric },
            rate: noise_rate,
            seed: seed.wrapping_add(1),
        };
        let state = apply_noise(&clean, &truth, &noise).map_err(js_err)?;
        let extractor = identity_extractor(2);
        let (k, tau) = (10, 0.5);
        let output = policy_forward(&extractor, &state, k, tau).map_err(js_err)?;
        let trace = vec![label_accuracy(&state, &truth).map_err(js_err)?];
        Ok(Scene {
            state,
            truth,
            extractor,
            k,
            tau,
            seed,
            output,
            trace,
            last_corrected: Vec::new(),
        })
    }

    /// Changes the neighborhood size and attention temperature used by later
    /// steps.
    pub fn configure(&mut self, k: usize, tau: f64) -> Result<(), String> {
        let output = policy_forward(&self.extractor, &self.state, k, tau).map_err(js_err)?;
        self.k = k;
        self.tau = tau;
        self.output = output;
        Ok(())
    }

    /// Samples one action from the policy, applies it, and returns the new
    /// label accuracy.
    pub fn step(&mut self) -> Result<f64, String> {
        let step_seed = self.seed ^ (self.trace.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let action = sample_action_seeded(&self.output, step_seed);
        self.last_corrected = action
            .decisions()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i as u32)
            .collect();
        self.state = transition(&self.state, &action, &self.output).map_err(js_err)?;
        self.output = policy_forward(&self.extractor, &self.state, self.k, self.tau).map_err(js_err)?;
        let acc = label_accuracy(&self.state, &self.truth).map_err(js_err)?;
        self.trace.push(acc);
        Ok(acc)
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.state.num_classes()
    }

    /// Interleaved `x, y` coordinates.
    pub fn points(&self) -> Vec<f64> {
        self.state
            .instances
            .iter()
            .flat_map(|x| x.features.iter().copied())
            .collect()
    }

    /// Argmax class of every current label.
    pub fn labels(&self) -> Vec<u32> {
        self.state.hard_labels().into_iter().map(|c| c as u32).collect()
    }

    pub fn truth(&self) -> Vec<u32> {
        self.truth.labels.iter().map(|&c| c as u32).collect()
    }

    /// Correction probability of every instance in the current state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.output.probs.clone()
    }

    /// Instances corrected by the most recent step.
    pub fn last_corrected(&self) -> Vec<u32> {
        self.last_corrected.clone()
    }

    /// Label accuracy after every step, starting with the noisy labels.
    pub fn accuracy_trace(&self) -> Vec<f64> {
        self.trace.clone()
    }

    /// Neighbor indices of instance `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> Vec<u32> {
        self.output
            .neighborhoods
            .get(i)
            .map(|set| set.indices.iter().map(|&j| j as u32).collect())
            .unwrap_or_default()
    }

    /// Attention-weighted neighbor label of instance `i`.
    pub fn predicted(&self, i: usize) -> Vec<f64> {
        self.output
            .predicted
            .get(i)
            .map(|y| y.probs().to_vec())
            .unwrap_or_default()
    }

    /// Index of the instance closest to `(x, y)`.
    pub fn nearest(&self, x: f64, y: f64) -> Option<usize> {
        self.state
            .instances
            .iter()
            .map(|inst| {
                let (dx, dy) = (inst.features[0] - x, inst.features[1] - y);
                dx * dx + dy * dy
            })
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }
}

/// Probability of replacing a label of class `current` given the neighbor
/// vote `predicted`; `predicted` is normalized first.
#[wasm_bindgen]
pub fn correction_probability(predicted: Vec<f64>, current: usize) -> Result<f64, String> {
    let total: f64 = predicted.iter().sum();
    if !(total > 0.0) {
        return Err("vote must have positive mass".into());
    }
    let label = SoftLabel::new(predicted.iter().map(|v| v / total).collect()).map_err(js_err)?;
    relabel_core::policy::correction_probability(&label, current).map_err(js_err)
}
