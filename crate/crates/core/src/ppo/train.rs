use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_gae, ppo_update, Adam, Batch, Policy, PpoHyperparams, SampleMode, UpdateMetrics};
use crate::env::{Action, EnvConfig, LoopEnv, Observation};
use crate::error::{file_err, Error, Result};
use crate::onestep::csv_err;

pub const CHECKPOINT_FORMAT: &str = "loopcat-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub global_step: u64,
    pub mean_reward: f64,
    pub mean_fidelity: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Episodes completed during the rollout.
    pub episodes: usize,
}

#[derive(Debug, Default)]
struct Rollout {
    obs: Vec<Vec<f64>>,
    raw: Vec<Vec<f64>>,
    log_prob: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    last_value: f64,
    /// `(total reward, best fidelity)` of each completed episode.
    episodes: Vec<(f64, f64)>,
}

fn collect(env: &mut LoopEnv, policy: &Policy, rng: &mut ChaCha8Rng, steps: usize) -> Result<Rollout> {
    let mut r = Rollout::default();
    let mut obs: Observation = env.reset();
    let mut total = 0.0;
    for _ in 0..steps {
        let s = policy.sample(&obs.0, SampleMode::Stochastic, rng)?;
        let out = env.step(Action::new(s.action[0], s.action[1]))?;
        total += out.reward;
        r.obs.push(std::mem::take(&mut obs.0));
        r.raw.push(s.raw);
        r.log_prob.push(s.log_prob_raw);
        r.values.push(s.value);
        r.rewards.push(out.reward);
        r.dones.push(out.done);
        if out.done {
            r.episodes.push((total, env.record().best_fidelity));
            total = 0.0;
            obs = env.reset();
        } else {
            obs = out.observation;
        }
    }
    r.last_value = if r.dones.last().copied().unwrap_or(true) { 0.0 } else { policy.value(&obs.0) };
    Ok(r)
}

/// Vectorized PPO over independent loop environments.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub env_config: EnvConfig,
    pub hp: PpoHyperparams,
    pub seed: u64,
    pub policy: Policy,
    pub adam: Adam,
    learner_rng: ChaCha8Rng,
    envs: Vec<LoopEnv>,
    action_rngs: Vec<ChaCha8Rng>,
    pub global_step: u64,
    pub iteration: u64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    env_config: EnvConfig,
    hp: PpoHyperparams,
    seed: u64,
    policy: Policy,
    adam: Adam,
    learner_rng: ChaCha8Rng,
    env_rngs: Vec<ChaCha8Rng>,
    action_rngs: Vec<ChaCha8Rng>,
    global_step: u64,
    iteration: u64,
    curve: Vec<CurvePoint>,
}

impl Trainer {
    pub fn new(env_config: EnvConfig, hp: PpoHyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        env_config.validate()?;
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let obs_dim = Observation::len_for(env_config.cutoff.dim());
        let bounds = vec![env_config.r_bounds, env_config.tau_bounds];
        let policy = Policy::new(obs_dim, &hp.hidden, bounds, hp.init_log_std, &mut master);
        let adam = Adam::new(policy.num_params(), hp.learning_rate);
        let learner_rng = ChaCha8Rng::seed_from_u64(master.random());
        let mut envs = Vec::with_capacity(hp.num_envs);
        let mut action_rngs = Vec::with_capacity(hp.num_envs);
        for _ in 0..hp.num_envs {
            envs.push(LoopEnv::new(EnvConfig { seed: master.random(), ..env_config })?);
            action_rngs.push(ChaCha8Rng::seed_from_u64(master.random()));
        }
        Ok(Self { env_config, hp, seed, policy, adam, learner_rng, envs, action_rngs, global_step: 0, iteration: 0, curve: Vec::new() })
    }

    /// One rollout across all environments followed by one PPO update.
    /// Every iteration starts fresh episodes, so state between iterations
    /// is just the weights, optimizer moments and random streams.
    pub fn iterate(&mut self) -> Result<CurvePoint> {
        let policy = &self.policy;
        let steps = self.hp.rollout_len;
        let rollouts: Vec<Rollout> = self
            .envs
            .par_iter_mut()
            .zip(self.action_rngs.par_iter_mut())
            .map(|(env, rng)| collect(env, policy, rng, steps))
            .collect::<Result<_>>()?;

        let n: usize = rollouts.iter().map(|r| r.rewards.len()).sum();
        let obs_dim = self.policy.obs_dim();
        let act_dim = self.policy.act_dim();
        let mut obs = DMatrix::zeros(obs_dim, n);
        let mut raw = DMatrix::zeros(act_dim, n);
        let mut old_log_prob = Vec::with_capacity(n);
        let mut advantages = Vec::with_capacity(n);
        let mut returns = Vec::with_capacity(n);
        let mut col = 0;
        let mut episodes = Vec::new();
        for r in &rollouts {
            let (adv, ret) = compute_gae(&r.rewards, &r.values, &r.dones, r.last_value, self.hp.gamma, self.hp.lambda);
            for t in 0..r.rewards.len() {
                obs.column_mut(col).copy_from_slice(&r.obs[t]);
                raw.column_mut(col).copy_from_slice(&r.raw[t]);
                col += 1;
            }
            old_log_prob.extend_from_slice(&r.log_prob);
            advantages.extend(adv);
            returns.extend(ret);
            episodes.extend_from_slice(&r.episodes);
        }
        let batch = Batch { obs, raw, old_log_prob, advantages, returns };
        let m: UpdateMetrics = ppo_update(&mut self.policy, &mut self.adam, &batch, &self.hp, &mut self.learner_rng)?;
        self.global_step += n as u64;
        self.iteration += 1;
        let mean = |f: fn(&(f64, f64)) -> f64| {
            if episodes.is_empty() {
                0.0
            } else {
                episodes.iter().map(f).sum::<f64>() / episodes.len() as f64
            }
        };
        let point = CurvePoint {
            global_step: self.global_step,
            mean_reward: mean(|e| e.0),
            mean_fidelity: mean(|e| e.1),
            entropy: self.policy.entropy(),
            clip_fraction: m.clip_fraction,
            approx_kl: m.approx_kl,
            policy_loss: m.policy_loss,
            value_loss: m.value_loss,
            episodes: episodes.len(),
        };
        self.curve.push(point);
        Ok(point)
    }

    /// Trains until `total_steps`, checkpointing into `out_dir/checkpoints`
    /// and keeping `out_dir/curve.csv` current.
    pub fn train(&mut self, out_dir: Option<&Path>, mut progress: impl FnMut(&CurvePoint)) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        while self.global_step < self.hp.total_steps {
            let p = self.iterate()?;
            progress(&p);
            let last = self.global_step >= self.hp.total_steps;
            if let Some(dir) = out_dir {
                if last || (self.hp.checkpoint_every > 0 && self.iteration % self.hp.checkpoint_every as u64 == 0) {
                    let ckpt = dir.join("checkpoints").join(format!("ckpt_{:06}.json", self.iteration));
                    self.save_checkpoint(&ckpt)?;
                    written.push(ckpt);
                    write_curve_csv(&self.curve, &dir.join("curve.csv"))?;
                }
            }
        }
        Ok(written)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(file_err(dir))?;
        }
        let c = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            env_config: self.env_config,
            hp: self.hp.clone(),
            seed: self.seed,
            policy: self.policy.clone(),
            adam: self.adam.clone(),
            learner_rng: self.learner_rng.clone(),
            env_rngs: self.envs.iter().map(|e| e.rng().clone()).collect(),
            action_rngs: self.action_rngs.clone(),
            global_step: self.global_step,
            iteration: self.iteration,
            curve: self.curve.clone(),
        };
        let f = File::create(path).map_err(file_err(path))?;
        serde_json::to_writer(BufWriter::new(f), &c)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(file_err(path))?;
        let c: Checkpoint = serde_json::from_reader(BufReader::new(f))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion { found: c.version, expected: CHECKPOINT_VERSION });
        }
        if c.env_rngs.len() != c.hp.num_envs || c.action_rngs.len() != c.hp.num_envs {
            return Err(Error::Config("checkpoint holds the wrong number of environment streams".into()));
        }
        let mut envs = Vec::with_capacity(c.hp.num_envs);
        for rng in c.env_rngs {
            let mut env = LoopEnv::new(c.env_config)?;
            env.set_rng(rng);
            envs.push(env);
        }
        Ok(Self {
            env_config: c.env_config,
            hp: c.hp,
            seed: c.seed,
            policy: c.policy,
            adam: c.adam,
            learner_rng: c.learner_rng,
            envs,
            action_rngs: c.action_rngs,
            global_step: c.global_step,
            iteration: c.iteration,
            curve: c.curve,
        })
    }
}

/// Reads only the policy out of a checkpoint.
pub fn load_policy(path: &Path) -> Result<(Policy, EnvConfig)> {
    let t = Trainer::load_checkpoint(path)?;
    Ok((t.policy, t.env_config))
}

pub fn write_curve_csv(curve: &[CurvePoint], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(file_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for p in curve {
        w.serialize(p).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(file_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockCutoff;

    fn tiny() -> (EnvConfig, PpoHyperparams) {
        let env = EnvConfig { cutoff: FockCutoff::new(6).unwrap(), horizon: 4, target_alpha: 1.0, target_r: 0.5, r0: 0.5, ..EnvConfig::default() };
        let hp = PpoHyperparams { num_envs: 2, rollout_len: 16, minibatch: 8, epochs: 2, hidden: vec![8], total_steps: 64, ..PpoHyperparams::default() };
        (env, hp)
    }

    #[test]
    fn resume_reproduces_the_next_iteration() {
        let (env, hp) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let mut a = Trainer::new(env, hp, 11).unwrap();
        a.iterate().unwrap();
        let path = dir.path().join("c.json");
        a.save_checkpoint(&path).unwrap();
        let mut b = Trainer::load_checkpoint(&path).unwrap();
        let pa = a.iterate().unwrap();
        let pb = b.iterate().unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn same_seed_same_curve() {
        let (env, hp) = tiny();
        let run = || {
            let mut t = Trainer::new(env, hp.clone(), 3).unwrap();
            t.train(None, |_| {}).unwrap();
            t.curve
        };
        let c = run();
        assert_eq!(c.len(), 2);
        assert_eq!(c, run());
    }
}
