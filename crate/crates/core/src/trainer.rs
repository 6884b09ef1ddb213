//! Actor-critic policy training, label-cleaning deployment and classifier
//! fine-tuning.
//!
//! One training epoch perturbs the base state, then for `t = 0..T`:
//! forward the policy, sample an action, transition, score the next state with
//! the frozen extractor, evaluate `Q` on the next state's reward histogram,
//! take one actor step, and (from `t = 1`) one SARSA critic step on the
//! previous transition.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::critic::{critic_update, encode_rewards, q_value, td_error, CriticParams, StateCode};
use crate::embed::{
    classifier_accuracy, embed_state, train_supervised, ClassifierParams, ExtractorParams,
    SupervisedConfig,
};
use crate::error::{Error, Result};
use crate::label::{
    argmax_class, one_hot, ActionVector, GroundTruth, LabelState, Trajectory, TrajectoryStep,
};
use crate::policy::{policy_forward, policy_gradient_step, sample_action, transition};
use crate::reward::{composite_reward, RewardModel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Drop the noisy-label alignment term from the composite reward.
    pub no_nla: bool,
    /// Drop the label-consistency term from the composite reward.
    pub no_lcr: bool,
    /// Start every training epoch from the unperturbed base state.
    pub no_init_random: bool,
    /// Score rewards with the live policy extractor instead of the frozen copy.
    pub shared_extractor: bool,
}

impl Ablations {
    pub fn enable(&mut self, name: &str) -> Result<()> {
        match name {
            "no_nla" => self.no_nla = true,
            "no_lcr" => self.no_lcr = true,
            "no_init_random" => self.no_init_random = true,
            "shared_extractor" => self.shared_extractor = true,
            other => return Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub k: usize,
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub n_bins: usize,
    /// Training trajectory length.
    #[serde(rename = "T")]
    pub trajectory_len: usize,
    /// Deployment trajectory length.
    #[serde(rename = "T_prime")]
    pub deploy_len: usize,
    pub warmup_epochs: usize,
    pub policy_epochs: usize,
    pub finetune_epochs: usize,
    /// Actor step size. Not given by the method description; tuned on blobs.
    pub lr_theta: f64,
    /// Critic step size. Not given by the method description; tuned on blobs.
    pub lr_critic: f64,
    /// Initial rate for warm-up and fine-tuning, divided by ten halfway.
    pub lr_pretrain: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub init_flip_fraction: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub critic_hidden: usize,
    pub seed: u64,
    pub ablations: Ablations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 10,
            tau: 0.5,
            lambda: 0.5,
            gamma: 0.9,
            n_bins: 100,
            trajectory_len: 10,
            deploy_len: 25,
            warmup_epochs: 50,
            policy_epochs: 200,
            finetune_epochs: 100,
            lr_theta: 1e-3,
            lr_critic: 1e-3,
            lr_pretrain: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            init_flip_fraction: 0.02,
            hidden: crate::embed::DEFAULT_HIDDEN,
            embed_dim: crate::embed::DEFAULT_EMBED_DIM,
            critic_hidden: crate::critic::DEFAULT_CRITIC_HIDDEN,
            seed: 0,
            ablations: Ablations::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.lambda >= 0.0) {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if self.n_bins == 0 {
            return fail("n_bins must be at least 1".into());
        }
        if self.trajectory_len == 0 {
            return fail("T must be at least 1".into());
        }
        if !(self.lr_theta >= 0.0) || !(self.lr_critic >= 0.0) {
            return fail("actor and critic learning rates must be non-negative".into());
        }
        if !(self.lr_pretrain > 0.0) {
            return fail(format!("lr_pretrain must be positive, got {}", self.lr_pretrain));
        }
        if !(0.0..1.0).contains(&self.init_flip_fraction) {
            return fail(format!(
                "init_flip_fraction must be in [0, 1), got {}",
                self.init_flip_fraction
            ));
        }
        if self.hidden == 0 || self.embed_dim == 0 || self.critic_hidden == 0 || self.batch_size == 0 {
            return fail("layer widths and batch size must be positive".into());
        }
        Ok(())
    }

    pub fn supervised(&self, epochs: usize, seed: u64) -> SupervisedConfig {
        SupervisedConfig {
            epochs,
            lr: self.lr_pretrain,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// Stream identifiers for deriving independent seeds from the run seed.
pub mod streams {
    pub const INIT_EXTRACTOR: u64 = 1;
    pub const INIT_CLASSIFIER: u64 = 2;
    pub const INIT_CRITIC: u64 = 3;
    pub const PRETRAIN: u64 = 4;
    pub const POLICY: u64 = 5;
    pub const DEPLOY: u64 = 6;
    pub const FINETUNE: u64 = 7;
}

/// SplitMix64 mix of `seed` and `stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One row of `rewards.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub lcr: f64,
    pub nla: f64,
    pub composite: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub pretrain_loss: Vec<f64>,
    pub rewards: Vec<StepRecord>,
    /// Label accuracy after each deployment step, step 0 included.
    pub correction_accuracy: Vec<f64>,
    pub finetune_loss: Vec<f64>,
    pub test_accuracy: Option<f64>,
    /// Wall-clock seconds per phase. Not part of any metrics file.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunMetrics {
    /// Mean composite reward of each training epoch.
    pub fn epoch_mean_rewards(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for r in &self.rewards {
            if out.len() <= r.epoch {
                out.resize(r.epoch + 1, (0.0, 0));
            }
            out[r.epoch].0 += r.composite;
            out[r.epoch].1 += 1;
        }
        out.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }

    /// Everything except timings, for reproducibility checks.
    pub fn same_outcome(&self, other: &RunMetrics) -> bool {
        self.pretrain_loss == other.pretrain_loss
            && self.rewards == other.rewards
            && self.correction_accuracy == other.correction_accuracy
            && self.finetune_loss == other.finetune_loss
            && self.test_accuracy == other.test_accuracy
    }
}

/// Replaces `floor(flip_fraction * N)` uniformly chosen labels with a one-hot
/// of a uniformly chosen different class.
pub fn randomize_initial_state<R: Rng + ?Sized>(
    base: &LabelState,
    flip_fraction: f64,
    rng: &mut R,
) -> Result<LabelState> {
    if !(0.0..1.0).contains(&flip_fraction) {
        return Err(Error::Config(format!(
            "flip fraction must be in [0, 1), got {flip_fraction}"
        )));
    }
    let n = base.len();
    let c = base.num_classes();
    let count = (flip_fraction * n as f64).floor() as usize;
    let mut labels = base.labels.clone();
    if count == 0 || c < 2 {
        return Ok(LabelState {
            instances: Arc::clone(&base.instances),
            labels,
            step: 0,
        });
    }
    for i in sample(rng, n, count) {
        let current = argmax_class(&labels[i]);
        let r = rng.random_range(0..c - 1);
        let new_class = if r >= current { r + 1 } else { r };
        labels[i] = one_hot(new_class, c)?;
    }
    Ok(LabelState {
        instances: Arc::clone(&base.instances),
        labels,
        step: 0,
    })
}

pub fn randomize_initial_state_seeded(base: &LabelState, flip_fraction: f64, seed: u64) -> Result<LabelState> {
    randomize_initial_state(base, flip_fraction, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Owns the mutable actor and critic parameters for a training run.
pub struct PolicyTrainer<'a> {
    config: &'a TrainConfig,
    base: &'a LabelState,
    omega: ExtractorParams,
    frozen_rewards: Option<RewardModel>,
    theta: ExtractorParams,
    phi: CriticParams,
    rng: ChaCha8Rng,
}

impl<'a> PolicyTrainer<'a> {
    pub fn new(
        config: &'a TrainConfig,
        base: &'a LabelState,
        theta: ExtractorParams,
        omega: ExtractorParams,
        phi: CriticParams,
    ) -> Result<Self> {
        config.validate()?;
        Error::check_dim("critic input", config.n_bins, phi.input_dim())?;
        let frozen_rewards = if config.ablations.shared_extractor {
            None
        } else {
            Some(RewardModel::from_embeddings(
                embed_state(&omega, base)?,
                config.k,
                config.tau,
            )?)
        };
        Ok(Self {
            config,
            base,
            omega,
            frozen_rewards,
            theta,
            phi,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::POLICY)),
        })
    }

    pub fn theta(&self) -> &ExtractorParams {
        &self.theta
    }

    pub fn phi(&self) -> &CriticParams {
        &self.phi
    }

    pub fn omega(&self) -> &ExtractorParams {
        &self.omega
    }

    pub fn into_params(self) -> (ExtractorParams, CriticParams) {
        (self.theta, self.phi)
    }

    /// Runs one epoch and returns its trajectory and reward records.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<(Trajectory, Vec<StepRecord>)> {
        let cfg = self.config;
        let flip = if cfg.ablations.no_init_random {
            0.0
        } else {
            cfg.init_flip_fraction
        };
        let mut state = randomize_initial_state(self.base, flip, &mut self.rng)?;
        let mut steps = Vec::with_capacity(cfg.trajectory_len);
        let mut records = Vec::with_capacity(cfg.trajectory_len);
        let mut previous: Option<(f64, StateCode)> = None;

        for t in 0..cfg.trajectory_len {
            let diag = |e: Error| match e {
                Error::Divergence(msg) => {
                    Error::Divergence(format!("epoch {epoch}, step {t}: {msg}"))
                }
                other => other,
            };
            let output = policy_forward(&self.theta, &state, cfg.k, cfg.tau).map_err(diag)?;
            let action = sample_action(&output, &mut self.rng);
            let next = transition(&state, &action, &output)?;

            let live;
            let model = match &self.frozen_rewards {
                Some(m) => m,
                None => {
                    live = RewardModel::new(&self.theta, &next, cfg.k, cfg.tau)?;
                    &live
                }
            };
            let lcr = if cfg.ablations.no_lcr { 0.0 } else { model.lcr(&next.labels)? };
            let nla = if cfg.ablations.no_nla {
                0.0
            } else {
                model.nla(&next.labels, &action)?
            };
            let reward = composite_reward(lcr, nla, cfg.lambda);
            if !reward.is_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}, step {t}: reward is not finite (lcr {lcr}, nla {nla})"
                )));
            }
            let code = encode_rewards(&model.instance_rewards(&next.labels)?, cfg.n_bins)?;
            let q = q_value(&self.phi, &code)?;
            if !q.is_finite() {
                return Err(Error::Divergence(format!("epoch {epoch}, step {t}: Q is not finite")));
            }

            self.theta = policy_gradient_step(&self.theta, &state, &action, &output, q, cfg.lr_theta)
                .map_err(diag)?;

            if let Some((r_prev, code_prev)) = &previous {
                let q_prev = q_value(&self.phi, code_prev)?;
                let delta = td_error(*r_prev, q, q_prev, cfg.gamma);
                self.phi = critic_update(&self.phi, code_prev, delta, cfg.lr_critic).map_err(diag)?;
            }

            records.push(StepRecord {
                epoch,
                step: t,
                lcr,
                nla,
                composite: reward,
                q,
            });
            steps.push(TrajectoryStep {
                state,
                action,
                reward,
                q_value: q,
            });
            previous = Some((reward, code));
            state = next;
        }
        Ok((
            Trajectory {
                steps,
                final_state: state,
            },
            records,
        ))
    }
}

/// Trains the policy extractor and the critic for `config.policy_epochs`.
pub fn train_policy(
    config: &TrainConfig,
    dataset: &LabelState,
    theta: ExtractorParams,
    omega: ExtractorParams,
    phi: CriticParams,
) -> Result<(ExtractorParams, CriticParams, RunMetrics)> {
    let mut trainer = PolicyTrainer::new(config, dataset, theta, omega, phi)?;
    let mut metrics = RunMetrics::default();
    for epoch in 0..config.policy_epochs {
        let (_, records) = trainer.run_epoch(epoch)?;
        if log::log_enabled!(log::Level::Debug) {
            let mean = records.iter().map(|r| r.composite).sum::<f64>() / records.len() as f64;
            log::debug!("policy epoch {epoch}: mean reward {mean:.6}");
        }
        metrics.rewards.extend(records);
    }
    let (theta, phi) = trainer.into_params();
    Ok((theta, phi, metrics))
}

/// States and actions of a cleaning pass; `states[0]` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub states: Vec<LabelState>,
    pub actions: Vec<ActionVector>,
}

impl Deployment {
    pub fn final_state(&self) -> &LabelState {
        self.states.last().expect("deployment always holds its initial state")
    }

    /// Label accuracy of every state against the truth.
    pub fn accuracy_trace(&self, truth: &GroundTruth) -> Result<Vec<f64>> {
        self.states
            .iter()
            .map(|s| crate::label::label_accuracy(s, truth))
            .collect()
    }
}

/// Runs the trained policy for `config.deploy_len` steps from the unperturbed
/// dataset.
pub fn deploy_cleaning(
    theta: &ExtractorParams,
    dataset: &LabelState,
    config: &TrainConfig,
) -> Result<Deployment> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, streams::DEPLOY));
    let mut states = Vec::with_capacity(config.deploy_len + 1);
    let mut actions = Vec::with_capacity(config.deploy_len);
    states.push(LabelState {
        step: 0,
        ..dataset.clone()
    });
    for _ in 0..config.deploy_len {
        let current = states.last().unwrap();
        let output = policy_forward(theta, current, config.k, config.tau)?;
        let action = sample_action(&output, &mut rng);
        let next = transition(current, &action, &output)?;
        actions.push(action);
        states.push(next);
    }
    Ok(Deployment { states, actions })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    pub loss_history: Vec<f64>,
    pub test_accuracy: Option<f64>,
}

/// Soft cross-entropy fine-tuning of `psi . theta` on the cleaned labels.
pub fn finetune_classifier(
    theta: &ExtractorParams,
    psi: &ClassifierParams,
    cleaned: &LabelState,
    cfg: &SupervisedConfig,
    test: Option<(&LabelState, &GroundTruth)>,
) -> Result<(ExtractorParams, ClassifierParams, FinetuneReport)> {
    let mut theta = theta.clone();
    let mut psi = psi.clone();
    let loss_history = train_supervised(&mut theta, &mut psi, cleaned, cfg)?;
    let test_accuracy = test
        .map(|(x, truth)| classifier_accuracy(&theta, &psi, x, &truth.labels))
        .transpose()?;
    Ok((
        theta,
        psi,
        FinetuneReport {
            loss_history,
            test_accuracy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Instance;

    fn base(n: usize, c: usize) -> LabelState {
        let xs = (0..n)
            .map(|i| Instance::new(i, vec![i as f64, 0.0]).unwrap())
            .collect();
        let classes: Vec<usize> = (0..n).map(|i| i % c).collect();
        LabelState::from_hard_labels(Arc::new(xs), &classes, c).unwrap()
    }

    #[test]
    fn zero_flip_fraction_is_identity() {
        let b = base(50, 3);
        let s = randomize_initial_state_seeded(&b, 0.0, 1).unwrap();
        assert_eq!(s.labels, b.labels);
    }

    #[test]
    fn flips_exact_count_to_other_classes() {
        let b = base(100, 4);
        for seed in 0..10 {
            let s = randomize_initial_state_seeded(&b, 0.1, seed).unwrap();
            let changed: Vec<usize> = (0..100).filter(|&i| s.labels[i] != b.labels[i]).collect();
            assert_eq!(changed.len(), 10);
            for i in changed {
                assert_ne!(argmax_class(&s.labels[i]), argmax_class(&b.labels[i]));
            }
        }
        assert!(randomize_initial_state_seeded(&b, 1.0, 0).is_err());
    }

    #[test]
    fn defaults_match_published_settings() {
        let c = TrainConfig::default();
        assert_eq!((c.lambda, c.tau, c.gamma, c.n_bins, c.k), (0.5, 0.5, 0.9, 100, 10));
        assert_eq!((c.trajectory_len, c.deploy_len), (10, 25));
        assert_eq!((c.lr_pretrain, c.weight_decay, c.momentum), (0.01, 5e-4, 0.9));
        c.validate().unwrap();
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let ok: TrainConfig = serde_json::from_str(r#"{"k": 5, "T": 3}"#).unwrap();
        assert_eq!((ok.k, ok.trajectory_len, ok.deploy_len), (5, 3, 25));
        assert!(serde_json::from_str::<TrainConfig>(r#"{"kk": 5}"#).is_err());
    }

    #[test]
    fn seeds_are_stream_separated() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn unknown_ablation_is_rejected() {
        let mut a = Ablations::default();
        a.enable("no_nla").unwrap();
        assert!(a.no_nla);
        assert!(a.enable("nope").is_err());
    }
}
