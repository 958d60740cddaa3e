use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::policy::Policy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyperparams {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Steps collected per environment per iteration.
    pub rollout_len: usize,
    pub num_envs: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    /// Epochs stop early once the mean approximate KL exceeds this.
    pub target_kl: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Iterations between checkpoints.
    pub checkpoint_every: usize,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 10,
            minibatch: 64,
            rollout_len: 128,
            num_envs: 40,
            ent_coef: 0.0,
            vf_coef: 0.5,
            target_kl: 0.03,
            max_grad_norm: 0.5,
            total_steps: 7_000_000,
            hidden: vec![256, 128, 64],
            init_log_std: 0.0,
            checkpoint_every: 10,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip ratio must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.rollout_len == 0 || self.num_envs == 0 {
            return bad("epochs, minibatch, rollout_len and num_envs must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// `dones[t]` marks that the episode ended with step `t`; `last_value` is
/// `V` of the state after the final step (ignored if that step was terminal).
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts to mean 0 and scales to std 1, unless the spread is degenerate.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return;
    }
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}

/// Columns are samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: DMatrix<f64>,
    pub raw: DMatrix<f64>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.old_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_prob.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])]);
        Batch {
            obs: pick(&self.obs),
            raw: pick(&self.raw),
            old_log_prob: idx.iter().map(|&i| self.old_log_prob[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// `L = −mean(min(ρA, clip(ρ)A)) + c_v · ½ mean((V − R)²) − c_e · H` and its
/// gradient in [`Policy::params`] order.
pub fn loss_and_grad(policy: &Policy, mb: &Batch, hp: &PpoHyperparams) -> (LossTerms, Vec<f64>) {
    let b = mb.len() as f64;
    let act = policy.act_dim();
    let actor_cache = policy.actor.forward_cache(&mb.obs);
    let mean = actor_cache.output();
    let critic_cache = policy.critic.forward_cache(&mb.obs);
    let values = critic_cache.output();
    let sd: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();

    let mut d_mean = DMatrix::zeros(act, mb.len());
    let mut d_log_std = vec![0.0; act];
    let mut d_value = DMatrix::zeros(1, mb.len());
    let mut terms = LossTerms::default();
    for i in 0..mb.len() {
        let mut logp = 0.0;
        let mut z = vec![0.0; act];
        for j in 0..act {
            z[j] = (mb.raw[(j, i)] - mean[(j, i)]) / sd[j];
            logp += -0.5 * z[j] * z[j] - policy.log_std[j] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        let log_ratio = logp - mb.old_log_prob[i];
        let ratio = log_ratio.exp();
        let a = mb.advantages[i];
        let s1 = ratio * a;
        let s2 = ratio.clamp(1.0 - hp.clip, 1.0 + hp.clip) * a;
        terms.policy_loss -= s1.min(s2) / b;
        if (ratio - 1.0).abs() > hp.clip {
            terms.clip_fraction += 1.0 / b;
        }
        terms.approx_kl += ((ratio - 1.0) - log_ratio) / b;
        // ∂L/∂logp for this sample
        let g = if s1 <= s2 { -a * ratio / b } else { 0.0 };
        for j in 0..act {
            d_mean[(j, i)] = g * z[j] / sd[j];
            d_log_std[j] += g * (z[j] * z[j] - 1.0);
        }
        let err = values[(0, i)] - mb.returns[i];
        terms.value_loss += 0.5 * err * err / b;
        d_value[(0, i)] = hp.vf_coef * err / b;
    }
    terms.entropy = policy.entropy();
    for d in d_log_std.iter_mut() {
        *d -= hp.ent_coef;
    }
    terms.loss = terms.policy_loss + hp.vf_coef * terms.value_loss - hp.ent_coef * terms.entropy;

    let mut grad = Vec::with_capacity(policy.num_params());
    policy.actor.backward(&actor_cache, &d_mean).write(&mut grad);
    grad.extend_from_slice(&d_log_std);
    policy.critic.backward(&critic_cache, &d_value).write(&mut grad);
    (terms, grad)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub epochs: usize,
}

/// Clipped-surrogate epochs over shuffled minibatches. Advantages are
/// normalized over the whole batch first.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Policy,
    adam: &mut Adam,
    batch: &Batch,
    hp: &PpoHyperparams,
    rng: &mut R,
) -> Result<UpdateMetrics> {
    let mut batch = batch.clone();
    normalize_advantages(&mut batch.advantages);
    let n = batch.len();
    let mut metrics = UpdateMetrics::default();
    if n == 0 {
        return Ok(metrics);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut count = 0.0;
    let mut params = policy.params();
    for epoch in 0..hp.epochs {
        order.shuffle(rng);
        let mut epoch_kl = 0.0;
        let mut chunks = 0.0;
        for idx in order.chunks(hp.minibatch) {
            let mb = batch.select(idx);
            let (t, mut grad) = loss_and_grad(policy, &mb, hp);
            if !t.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("PPO loss in epoch {epoch}")));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if hp.max_grad_norm > 0.0 && norm > hp.max_grad_norm {
                let s = hp.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            adam.step(&mut params, &grad);
            policy.set_params(&params);
            metrics.policy_loss += t.policy_loss;
            metrics.value_loss += t.value_loss;
            metrics.entropy += t.entropy;
            metrics.clip_fraction += t.clip_fraction;
            metrics.approx_kl += t.approx_kl;
            count += 1.0;
            epoch_kl += t.approx_kl;
            chunks += 1.0;
        }
        metrics.epochs = epoch + 1;
        if hp.target_kl > 0.0 && epoch_kl / chunks > hp.target_kl {
            break;
        }
    }
    metrics.policy_loss /= count;
    metrics.value_loss /= count;
    metrics.entropy /= count;
    metrics.clip_fraction /= count;
    metrics.approx_kl /= count;
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_special_cases() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.5, 0.4, 0.3];
        let d = [false, false, false];
        let (adv, _) = compute_gae(&r, &v, &d, 0.2, 0.9, 0.0);
        assert_abs_diff_eq!(adv[0], 1.0 + 0.9 * 0.4 - 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(adv[2], 3.0 + 0.9 * 0.2 - 0.3, epsilon = 1e-15);
        let (adv, ret) = compute_gae(&r, &[0.0; 3], &[false, false, true], 9.0, 1.0, 1.0);
        assert_eq!(adv, vec![6.0, 5.0, 3.0]);
        assert_eq!(ret, adv);
        let (adv, _) = compute_gae(&[1.0], &[0.0], &[true], 0.0, 0.99, 0.95);
        assert_eq!(adv, vec![1.0]);
    }

    #[test]
    fn done_cuts_the_bootstrap() {
        let (adv, _) = compute_gae(&[0.0, 0.0], &[0.0, 0.0], &[true, false], 5.0, 1.0, 1.0);
        assert_eq!(adv, vec![0.0, 5.0]);
    }

    #[test]
    fn zero_advantages_skip_normalization() {
        let mut a = vec![0.0; 5];
        normalize_advantages(&mut a);
        assert_eq!(a, vec![0.0; 5]);
        let mut a = vec![1.0, 2.0, 3.0];
        normalize_advantages(&mut a);
        assert_abs_diff_eq!(a.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    fn toy_batch(policy: &Policy, rng: &mut ChaCha8Rng, n: usize) -> Batch {
        let obs = DMatrix::from_fn(policy.obs_dim(), n, |_, _| rng.random_range(-1.0..1.0));
        let mean = policy.actor.forward(&obs);
        let raw = DMatrix::from_fn(policy.act_dim(), n, |r, c| mean[(r, c)] + 0.3 * rng.random_range(-1.0..1.0));
        let old = (0..n)
            .map(|c| {
                let m: Vec<f64> = mean.column(c).iter().copied().collect();
                let u: Vec<f64> = raw.column(c).iter().copied().collect();
                super::super::policy::gaussian_log_prob(&m, policy.log_std.as_slice(), &u) + rng.random_range(-0.05..0.05)
            })
            .collect();
        Batch {
            obs,
            raw,
            old_log_prob: old,
            advantages: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn identical_policy_has_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Policy::new(3, &[4], vec![[-1.0, 1.0]], 0.0, &mut rng);
        let mut b = toy_batch(&p, &mut rng, 16);
        let mean = p.actor.forward(&b.obs);
        for c in 0..16 {
            b.old_log_prob[c] = super::super::policy::gaussian_log_prob(&[mean[(0, c)]], p.log_std.as_slice(), &[b.raw[(0, c)]]);
        }
        let (t, _) = loss_and_grad(&p, &b, &PpoHyperparams::default());
        assert_eq!(t.clip_fraction, 0.0);
        assert_abs_diff_eq!(t.approx_kl, 0.0, epsilon = 1e-15);
        b.advantages = vec![0.0; 16];
        let (t, _) = loss_and_grad(&p, &b, &PpoHyperparams::default());
        assert_eq!(t.policy_loss, 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Policy::new(3, &[6, 5], vec![[-1.5, 1.5], [0.0, 1.0]], -0.4, &mut rng);
        let b = toy_batch(&p, &mut rng, 12);
        let hp = PpoHyperparams { ent_coef: 0.01, ..PpoHyperparams::default() };
        let (_, grad) = loss_and_grad(&p, &b, &hp);
        let params = p.params();
        let h = 1e-6;
        let mut q = p.clone();
        for i in 0..params.len() {
            let mut v = params.clone();
            v[i] += h;
            q.set_params(&v);
            let up = loss_and_grad(&q, &b, &hp).0.loss;
            v[i] -= 2.0 * h;
            q.set_params(&v);
            let down = loss_and_grad(&q, &b, &hp).0.loss;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(1e-4), "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
