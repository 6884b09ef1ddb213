//! The critic: a histogram encoding of the next state and a small Q network
//! trained with on-policy (SARSA) semi-gradient TD updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mlp::{Activation, Gradients, Mlp};

pub type CriticParams = Mlp;

pub const DEFAULT_CRITIC_HIDDEN: usize = 32;

/// Fraction of instances whose per-instance reward falls in each of the
/// `n_bins` half-open intervals `((j-1)/n, j/n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCode(Vec<f64>);

impl StateCode {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Zero-based bin of a reward in `(0, 1]`.
pub fn bin_index(reward: f64, n_bins: usize) -> usize {
    let n = n_bins as f64;
    let mut j = (reward * n).ceil() as isize;
    // `ceil` on a rounded product can be off by one at interval edges.
    if j >= 1 && reward <= (j - 1) as f64 / n {
        j -= 1;
    } else if reward > j as f64 / n {
        j += 1;
    }
    // Underflow to 0 lands in the first bin.
    (j.clamp(1, n_bins as isize) - 1) as usize
}

pub fn encode_rewards(rewards: &[f64], n_bins: usize) -> Result<StateCode> {
    if n_bins == 0 {
        return Err(Error::Config("number of bins must be at least 1".into()));
    }
    if rewards.is_empty() {
        return Err(Error::domain("cannot encode an empty state"));
    }
    let mut counts = vec![0usize; n_bins];
    for &r in rewards {
        if !r.is_finite() {
            return Err(Error::Divergence(format!("instance reward {r} is not finite")));
        }
        counts[bin_index(r, n_bins)] += 1;
    }
    let n = rewards.len() as f64;
    Ok(StateCode(counts.into_iter().map(|c| c as f64 / n).collect()))
}

pub fn new_critic(n_bins: usize, hidden: usize, seed: u64) -> CriticParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Mlp::new(&[n_bins, hidden, 1], Activation::Tanh, Activation::Identity, &mut rng)
}

pub fn q_value(phi: &CriticParams, code: &StateCode) -> Result<f64> {
    Ok(phi.forward(code.values())?[0])
}

/// `dQ/dphi` at `code`.
pub fn q_gradient(phi: &CriticParams, code: &StateCode) -> Result<Gradients> {
    let (_, tape) = phi.forward_with_tape(code.values())?;
    let mut g = Gradients::zeros_like(phi);
    phi.backward(&tape, &[1.0], &mut g);
    Ok(g)
}

/// `r_prev + gamma * q_curr - q_prev`
pub fn td_error(r_prev: f64, q_curr: f64, q_prev: f64, gamma: f64) -> f64 {
    r_prev + gamma * q_curr - q_prev
}

/// `phi + beta * delta * dQ(code_prev)/dphi`; the bootstrap target is treated
/// as a constant.
pub fn critic_update(phi: &CriticParams, code_prev: &StateCode, delta: f64, beta: f64) -> Result<CriticParams> {
    if !delta.is_finite() {
        return Err(Error::Divergence(format!("TD error {delta} is not finite")));
    }
    let mut next = phi.clone();
    if delta == 0.0 || beta == 0.0 {
        return Ok(next);
    }
    let grad = q_gradient(phi, code_prev)?;
    next.apply(beta * delta, &grad);
    if !next.is_finite() {
        return Err(Error::Divergence("critic parameters became non-finite".into()));
    }
    Ok(next)
}
