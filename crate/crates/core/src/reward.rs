//! Rewards computed on the next state with the frozen extractor.
//!
//! - label consistency: `-mean_i KL(y_i || sum_{j in N(i)} alpha_ij y_j)` over
//!   all instances;
//! - noisy-label alignment: the same divergence, averaged over the corrected
//!   instances only, with neighbors drawn from the uncorrected ones;
//! - composite: `exp(lcr + lambda * nla)`, which lies in `(0, 1]`;
//! - per-instance reward `exp(-KL_i)`, the input of the critic's histogram.

use crate::embed::{embed_state, Embeddings, ExtractorParams};
use crate::error::{Error, Result};
use crate::label::{ActionVector, LabelState, SoftLabel};
use crate::neighbors::{aggregate_labels, attention_weights, knn_masked, neighbor_sets, NeighborSet};
use crate::parallel;

/// Additive smoothing applied to both arguments of the KL divergence.
pub const KL_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub lcr: f64,
    pub nla: f64,
    pub composite: f64,
}

/// `KL(p || q)` after mixing both distributions with `KL_SMOOTHING` mass per
/// class. Finite for any pair of soft labels; exactly 0 when `p == q`.
pub fn kl_divergence(p: &SoftLabel, q: &SoftLabel) -> f64 {
    let c = p.num_classes() as f64;
    let norm = 1.0 + c * KL_SMOOTHING;
    let kl: f64 = p
        .probs()
        .iter()
        .zip(q.probs())
        .map(|(&pj, &qj)| {
            let ps = (pj + KL_SMOOTHING) / norm;
            let qs = (qj + KL_SMOOTHING) / norm;
            ps * (ps / qs).ln()
        })
        .sum();
    kl.max(0.0)
}

pub fn composite_reward(lcr: f64, nla: f64, lambda: f64) -> f64 {
    (lcr + lambda * nla).exp()
}

/// Reward evaluator bound to one set of (frozen) embeddings.
#[derive(Debug, Clone)]
pub struct RewardModel {
    embeddings: Embeddings,
    neighborhoods: Vec<NeighborSet>,
    k: usize,
    tau: f64,
}

impl RewardModel {
    pub fn new(omega: &ExtractorParams, state: &LabelState, k: usize, tau: f64) -> Result<Self> {
        Self::from_embeddings(embed_state(omega, state)?, k, tau)
    }

    pub fn from_embeddings(embeddings: Embeddings, k: usize, tau: f64) -> Result<Self> {
        let (neighborhoods, _) = neighbor_sets(&embeddings, k, tau)?;
        Ok(Self {
            embeddings,
            neighborhoods,
            k,
            tau,
        })
    }

    pub fn embeddings(&self) -> &Embeddings {
        &self.embeddings
    }

    pub fn neighborhoods(&self) -> &[NeighborSet] {
        &self.neighborhoods
    }

    fn check_len(&self, n: usize) -> Result<()> {
        Error::check_dim("reward labels", self.neighborhoods.len(), n)
    }

    /// `KL(y_i || neighborhood aggregate)` for every instance.
    pub fn instance_divergences(&self, labels: &[SoftLabel]) -> Result<Vec<f64>> {
        self.check_len(labels.len())?;
        parallel::map(&self.neighborhoods, |set| {
            aggregate_labels(set, labels).map(|agg| kl_divergence(&labels[set.query], &agg))
        })
        .into_iter()
        .collect()
    }

    pub fn instance_rewards(&self, labels: &[SoftLabel]) -> Result<Vec<f64>> {
        Ok(self
            .instance_divergences(labels)?
            .into_iter()
            .map(|kl| (-kl).exp())
            .collect())
    }

    pub fn lcr(&self, labels: &[SoftLabel]) -> Result<f64> {
        let kls = self.instance_divergences(labels)?;
        Ok(-kls.iter().sum::<f64>() / kls.len() as f64)
    }

    pub fn nla(&self, labels: &[SoftLabel], action: &ActionVector) -> Result<f64> {
        self.check_len(labels.len())?;
        Error::check_dim("reward action", labels.len(), action.len())?;
        let corrected: Vec<usize> = action
            .decisions()
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect();
        if corrected.is_empty() {
            return Ok(0.0);
        }
        if corrected.len() == labels.len() {
            log::warn!("every instance was corrected; no clean anchors, alignment reward set to 0");
            return Ok(0.0);
        }
        let clean: Vec<bool> = action.decisions().iter().map(|&a| !a).collect();
        let kls = parallel::map(&corrected, |&i| -> Result<f64> {
            let indices = knn_masked(&self.embeddings, i, self.k, &clean)?;
            let attention = attention_weights(&self.embeddings, i, &indices, self.tau)?.weights;
            let set = NeighborSet {
                query: i,
                indices,
                attention,
            };
            Ok(kl_divergence(&labels[i], &aggregate_labels(&set, labels)?))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(-kls.iter().sum::<f64>() / kls.len() as f64)
    }

    pub fn evaluate(
        &self,
        labels: &[SoftLabel],
        action: &ActionVector,
        lambda: f64,
    ) -> Result<RewardBreakdown> {
        let lcr = self.lcr(labels)?;
        let nla = self.nla(labels, action)?;
        Ok(RewardBreakdown {
            lcr,
            nla,
            composite: composite_reward(lcr, nla, lambda),
        })
    }
}

pub fn reward_lcr(next_state: &LabelState, omega: &ExtractorParams, k: usize, tau: f64) -> Result<f64> {
    RewardModel::new(omega, next_state, k, tau)?.lcr(&next_state.labels)
}

pub fn reward_nla(
    next_state: &LabelState,
    action: &ActionVector,
    omega: &ExtractorParams,
    k: usize,
    tau: f64,
) -> Result<f64> {
    RewardModel::new(omega, next_state, k, tau)?.nla(&next_state.labels, action)
}

pub fn instance_reward(
    index: usize,
    next_state: &LabelState,
    omega: &ExtractorParams,
    k: usize,
    tau: f64,
) -> Result<f64> {
    if index >= next_state.len() {
        return Err(Error::domain(format!("instance {index} out of range")));
    }
    let model = RewardModel::new(omega, next_state, k, tau)?;
    let set = &model.neighborhoods[index];
    let agg = aggregate_labels(set, &next_state.labels)?;
    Ok((-kl_divergence(&next_state.labels[index], &agg)).exp())
}
