use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Init, Mlp};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Stochastic,
    Deterministic,
}

/// Separate actor and critic networks with a state-independent log-std.
/// Actions are `tanh`-squashed Gaussian draws mapped affinely onto `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actor: Mlp,
    pub critic: Mlp,
    pub log_std: DVector<f64>,
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Squashed and mapped into the bounds.
    pub action: Vec<f64>,
    /// Pre-squash Gaussian draw.
    pub raw: Vec<f64>,
    /// Log-density of `action`, including the squash and affine Jacobian.
    pub log_prob: f64,
    /// Log-density of `raw` under the Gaussian; what the PPO ratio uses.
    pub log_prob_raw: f64,
    pub value: f64,
}

/// `ln(1 − tanh²u)`, stable for large `|u|`.
fn log_one_minus_tanh2(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u.abs() - (-2.0 * u.abs()).exp().ln_1p())
}

pub fn squash(u: f64, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * 0.5 * (u.tanh() + 1.0)
}

/// `Σ_j [−½ ((u−μ)/σ)² − ln σ − ½ ln 2π]`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(u)
        .map(|((&m, &ls), &x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

impl Policy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], bounds: Vec<[f64; 2]>, init_log_std: f64, rng: &mut R) -> Self {
        let act = bounds.len();
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(act);
        let mut critic_sizes = sizes;
        critic_sizes.push(1);
        let gain = std::f64::consts::SQRT_2;
        let actor = Mlp::new(&actor_sizes, Init { hidden_gain: gain, output_gain: 0.01 }, rng);
        let critic = Mlp::new(&critic_sizes, Init { hidden_gain: gain, output_gain: 1.0 }, rng);
        Self { actor, critic, log_std: DVector::from_element(act, init_log_std), bounds }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.inputs()
    }

    pub fn act_dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn map_action(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.bounds).map(|(&u, &b)| squash(u, b)).collect()
    }

    /// Change of variables from `raw` to the mapped action.
    pub fn squash_log_jacobian(&self, raw: &[f64]) -> f64 {
        raw.iter().zip(&self.bounds).map(|(&u, &[lo, hi])| (0.5 * (hi - lo)).ln() + log_one_minus_tanh2(u)).sum()
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward_one(obs)[0]
    }

    pub fn values(&self, obs: &DMatrix<f64>) -> Vec<f64> {
        self.critic.forward(obs).row(0).iter().copied().collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], mode: SampleMode, rng: &mut R) -> Result<PolicySample> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Dimension(format!("observation of length {} for a policy expecting {}", obs.len(), self.obs_dim())));
        }
        let mean = self.actor.forward_one(obs);
        let value = self.value(obs);
        if mean.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(Error::NonFinite("policy network output".into()));
        }
        let raw: Vec<f64> = match mode {
            SampleMode::Deterministic => mean.iter().copied().collect(),
            SampleMode::Stochastic => mean
                .iter()
                .zip(self.log_std.iter())
                .map(|(&m, &ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        let log_prob_raw = gaussian_log_prob(mean.as_slice(), self.log_std.as_slice(), &raw);
        let log_prob = log_prob_raw - self.squash_log_jacobian(&raw);
        Ok(PolicySample { action: self.map_action(&raw), raw, log_prob, log_prob_raw, value })
    }

    /// Entropy of the pre-squash Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.log_std.len() + self.critic.num_params()
    }

    /// Flattened as `[actor, log_std, critic]`.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        self.actor.write_params(&mut v);
        v.extend_from_slice(self.log_std.as_slice());
        self.critic.write_params(&mut v);
        v
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut k = self.actor.read_params(p);
        let n = self.log_std.len();
        self.log_std.as_mut_slice().copy_from_slice(&p[k..k + n]);
        k += n;
        self.critic.read_params(&p[k..]);
    }
}
