//! End-to-end pipeline: warm-up, policy training, cleaning, fine-tuning.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::critic::{new_critic, CriticParams};
use crate::datagen::{apply_noise, generate_blobs, BlobSpec, NoiseKind, NoiseSpec};
use crate::embed::{
    freeze_copy, new_classifier, new_extractor, pretrain, ClassifierParams, ExtractorParams,
};
use crate::error::Result;
use crate::label::{GroundTruth, LabelState};
use crate::trainer::{
    deploy_cleaning, derive_seed, finetune_classifier, streams, train_policy, Deployment,
    RunMetrics, TrainConfig,
};

/// Gaussian-blob train/test fixture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobFixture {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    /// Distance between every pair of class means.
    pub separation: f64,
    pub sigma: f64,
    pub noise: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl Default for BlobFixture {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class: 200,
            test_per_class: 100,
            dim: 10,
            separation: 6.0,
            sigma: 1.0,
            noise: NoiseKind::Idn,
            rate: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    /// Training set with noisy labels.
    pub train: LabelState,
    pub train_truth: GroundTruth,
    /// Clean held-out set drawn from the same class means.
    pub test: LabelState,
    pub test_truth: GroundTruth,
}

impl BlobFixture {
    pub fn spec(&self, per_class: usize) -> Result<BlobSpec> {
        BlobSpec::axis_aligned(self.classes, self.dim, self.separation, self.sigma, per_class)
    }

    pub fn build(&self) -> Result<Fixture> {
        let (clean, train_truth) = generate_blobs(&self.spec(self.per_class)?, derive_seed(self.seed, 100))?;
        let noise = NoiseSpec {
            kind: self.noise,
            rate: self.rate,
            seed: derive_seed(self.seed, 200),
        };
        let train = apply_noise(&clean, &train_truth, &noise)?;
        let (test, test_truth) = generate_blobs(
            &self.spec(self.test_per_class.max(1))?,
            derive_seed(self.seed, 300),
        )?;
        Ok(Fixture {
            train,
            train_truth,
            test,
            test_truth,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub metrics: RunMetrics,
    pub pretrained: ExtractorParams,
    /// Extractor after policy training, the one used for cleaning.
    pub policy: ExtractorParams,
    /// Extractor after fine-tuning.
    pub theta: ExtractorParams,
    pub psi: ClassifierParams,
    pub phi: CriticParams,
    pub deployment: Deployment,
}

/// Initial extractor and classifier for a run.
pub fn initial_networks(config: &TrainConfig, input_dim: usize, num_classes: usize) -> (ExtractorParams, ClassifierParams) {
    (
        new_extractor(
            input_dim,
            config.hidden,
            config.embed_dim,
            derive_seed(config.seed, streams::INIT_EXTRACTOR),
        ),
        new_classifier(
            config.embed_dim,
            num_classes,
            derive_seed(config.seed, streams::INIT_CLASSIFIER),
        ),
    )
}

pub fn initial_critic(config: &TrainConfig) -> CriticParams {
    new_critic(
        config.n_bins,
        config.critic_hidden,
        derive_seed(config.seed, streams::INIT_CRITIC),
    )
}

/// Warm-up on the noisy labels; zero warm-up epochs keeps the initial weights.
pub fn warm_up(
    config: &TrainConfig,
    train: &LabelState,
) -> Result<(ExtractorParams, ClassifierParams, Vec<f64>)> {
    let (theta, psi) = initial_networks(config, train.feature_dim(), train.num_classes());
    if config.warmup_epochs == 0 {
        return Ok((theta, psi, Vec::new()));
    }
    let sup = config.supervised(config.warmup_epochs, derive_seed(config.seed, streams::PRETRAIN));
    pretrain(&theta, &psi, train, &sup)
}

/// Runs every phase. `truth` is only used to score the cleaning trace after
/// the fact; `test` only to score the final classifier.
pub fn run_pipeline(
    config: &TrainConfig,
    train: &LabelState,
    truth: Option<&GroundTruth>,
    test: Option<(&LabelState, &GroundTruth)>,
) -> Result<PipelineOutput> {
    config.validate()?;
    let mut timings = Vec::new();

    let clock = Instant::now();
    let (pretrained, psi, pretrain_loss) = warm_up(config, train)?;
    timings.push(("pretrain".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let omega = freeze_copy(&pretrained);
    let (theta, phi, policy_metrics) =
        train_policy(config, train, pretrained.clone(), omega, initial_critic(config))?;
    timings.push(("train_policy".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let deployment = deploy_cleaning(&theta, train, config)?;
    timings.push(("deploy".to_string(), clock.elapsed().as_secs_f64()));

    let correction_accuracy = match truth {
        Some(t) => deployment.accuracy_trace(t)?,
        None => Vec::new(),
    };

    let clock = Instant::now();
    let sup = config.supervised(config.finetune_epochs, derive_seed(config.seed, streams::FINETUNE));
    let (finetuned, psi, report) =
        finetune_classifier(&theta, &psi, deployment.final_state(), &sup, test)?;
    timings.push(("finetune".to_string(), clock.elapsed().as_secs_f64()));

    Ok(PipelineOutput {
        metrics: RunMetrics {
            pretrain_loss,
            rewards: policy_metrics.rewards,
            correction_accuracy,
            finetune_loss: report.loss_history,
            test_accuracy: report.test_accuracy,
            timings,
        },
        pretrained,
        policy: theta,
        theta: finetuned,
        psi,
        phi,
        deployment,
    })
}
