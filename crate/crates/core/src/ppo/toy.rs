//! One-step bandit with a Gaussian reward bump, used to check that the
//! update rule actually optimizes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compute_gae, ppo_update, Adam, Batch, Policy, PpoHyperparams, SampleMode};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyProblem {
    pub optimum: f64,
    pub width: f64,
    pub bounds: [f64; 2],
    pub samples_per_update: usize,
    /// Converged once the deterministic action is this close to the optimum.
    pub tolerance: f64,
}

impl Default for ToyProblem {
    fn default() -> Self {
        Self { optimum: 0.4, width: 0.15, bounds: [-1.0, 1.0], samples_per_update: 64, tolerance: 0.02 }
    }
}

impl ToyProblem {
    pub fn reward(&self, a: f64) -> f64 {
        (-0.5 * ((a - self.optimum) / self.width).powi(2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRun {
    /// First update after which the deterministic action stayed within tolerance.
    pub converged_at: Option<usize>,
    pub final_action: f64,
    /// Per-update `(deterministic action, log_std)`.
    pub trace: Vec<(f64, f64)>,
}

pub fn solve_toy(problem: &ToyProblem, updates: usize, seed: u64) -> Result<ToyRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hp = PpoHyperparams {
        learning_rate: 3e-3,
        epochs: 4,
        minibatch: 32,
        hidden: vec![8, 8],
        target_kl: 0.0,
        ..PpoHyperparams::default()
    };
    let mut policy = Policy::new(1, &hp.hidden, vec![problem.bounds], -0.5, &mut rng);
    let mut adam = Adam::new(policy.num_params(), hp.learning_rate);
    let obs = [1.0];
    let mut trace = Vec::with_capacity(updates);
    let mut converged_at = None;
    for u in 0..updates {
        let n = problem.samples_per_update;
        let mut raw = DMatrix::zeros(1, n);
        let mut logp = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for c in 0..n {
            let s = policy.sample(&obs, SampleMode::Stochastic, &mut rng)?;
            raw[(0, c)] = s.raw[0];
            logp.push(s.log_prob_raw);
            rewards.push(problem.reward(s.action[0]));
            values.push(s.value);
        }
        let (adv, ret) = compute_gae(&rewards, &values, &vec![true; n], 0.0, hp.gamma, hp.lambda);
        let batch = Batch { obs: DMatrix::from_element(1, n, 1.0), raw, old_log_prob: logp, advantages: adv, returns: ret };
        ppo_update(&mut policy, &mut adam, &batch, &hp, &mut rng)?;
        let a = policy.sample(&obs, SampleMode::Deterministic, &mut rng)?.action[0];
        trace.push((a, policy.log_std[0]));
        if (a - problem.optimum).abs() <= problem.tolerance {
            converged_at.get_or_insert(u + 1);
        } else {
            converged_at = None;
        }
    }
    let final_action = trace.last().map_or(f64::NAN, |t| t.0);
    Ok(ToyRun { converged_at, final_action, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_within_500_updates() {
        let p = ToyProblem::default();
        let run = solve_toy(&p, 500, 7).unwrap();
        let at = run.converged_at.expect("toy bandit did not converge");
        assert!(at <= 500);
        assert!((run.final_action - p.optimum).abs() <= p.tolerance);
    }
}
