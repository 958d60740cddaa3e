use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Policy, SampleMode};
use crate::env::{Action, EnvConfig, EpisodeRecord, LoopEnv, LoopState, LOW_TAU, RESET_TAU};
use crate::error::{file_err, Result};
use crate::onestep::{csv_err, CatFitter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
    /// An output counts as a cat when its best-fit fidelity reaches this.
    pub success_threshold: f64,
    /// Smallest `α` accepted in the success fit.
    pub alpha_min: f64,
    pub fit_deficit_tolerance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes_per_seed: 250, seeds: vec![0, 1, 2, 3, 4], success_threshold: 0.95, alpha_min: 1.0, fit_deficit_tolerance: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub name: String,
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn uniform(name: &str, lo: f64, hi: f64, bins: usize, values: &[f64]) -> Self {
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + k as f64 * w).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lo) / w).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { name: name.into(), edges, counts }
    }

    /// One unit-wide bin per integer from 0 to the largest value.
    pub fn integer(name: &str, values: &[usize]) -> Self {
        let top = values.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0; top + 1];
        for &v in values {
            counts[v] += 1;
        }
        Self { name: name.into(), edges: (0..=top + 1).map(|k| k as f64 - 0.5).collect(), counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["bin_lo", "bin_hi", "count"]).map_err(|e| csv_err(path, e))?;
        for (k, c) in self.counts.iter().enumerate() {
            w.write_record([self.edges[k].to_string(), self.edges[k + 1].to_string(), c.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(file_err(path))?;
        Ok(())
    }
}

/// Per-episode outcome beyond the raw record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFit {
    pub fidelity: f64,
    pub alpha: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub success_threshold: f64,
    pub success_rate: f64,
    pub mean_best_fidelity: f64,
    pub mean_final_fidelity: f64,
    pub mean_fit_fidelity: f64,
    /// Episodes whose last action left the loop alone (`τ < 0.01`).
    pub ends_with_low_tau: f64,
    /// Episodes with at least one `τ ≥ 0.99` step.
    pub with_reset: f64,
    pub labels: BTreeMap<String, usize>,
    /// Best-fit fidelity, photons, active steps, steps between resets.
    pub histograms: Vec<Histogram>,
}

/// Steps up to the start of the trailing run of `τ ≈ 0`.
pub fn active_steps(r: &EpisodeRecord) -> usize {
    let mut end = r.steps.len();
    while end > 0 && r.steps[end - 1].tau < LOW_TAU {
        end -= 1;
    }
    end
}

/// Runs the deterministic policy. Episode `k` of seed `s` uses stream `k`
/// of the generator seeded with `s`, so episodes are independent of the
/// thread schedule.
pub fn evaluate(policy: &Policy, env: &EnvConfig, cfg: &EvalConfig) -> Result<(EvalReport, Vec<EpisodeRecord>, Vec<EpisodeFit>)> {
    let mut fitter = CatFitter::new(env.cutoff, cfg.fit_deficit_tolerance);
    fitter.bounds[0].0 = cfg.alpha_min;
    let jobs: Vec<(u64, u64)> = cfg.seeds.iter().flat_map(|&s| (0..cfg.episodes_per_seed as u64).map(move |k| (s, k))).collect();
    let results: Vec<(EpisodeRecord, EpisodeFit)> = jobs
        .par_iter()
        .map(|&(seed, k)| {
            let mut e = LoopEnv::new(EnvConfig { seed, ..*env })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            e.set_rng(rng);
            e.set_episode_index(k);
            let mut obs = e.reset();
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            loop {
                let s = policy.sample(&obs.0, SampleMode::Deterministic, &mut unused)?;
                let out = e.step(Action::new(s.action[0], s.action[1]))?;
                obs = out.observation;
                if out.done {
                    break;
                }
            }
            let rec = e.record();
            let fit = match e.state() {
                LoopState::Pure(s) => fitter.fit(s, rec.label.parity),
                LoopState::Mixed(r) => fitter.fit_density(r, rec.label.parity),
            };
            Ok((rec, EpisodeFit { fidelity: fit.fidelity, alpha: fit.alpha, r: fit.r }))
        })
        .collect::<Result<_>>()?;
    let (records, fits): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((summarize(&records, &fits, cfg), records, fits))
}

pub fn summarize(records: &[EpisodeRecord], fits: &[EpisodeFit], cfg: &EvalConfig) -> EvalReport {
    let n = records.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let mean = |it: &mut dyn Iterator<Item = f64>| if n == 0 { 0.0 } else { it.sum::<f64>() / n as f64 };
    let mut labels = BTreeMap::new();
    for r in records {
        *labels.entry(r.label.to_string()).or_insert(0) += 1;
    }
    let fit_f: Vec<f64> = fits.iter().map(|f| f.fidelity).collect();
    let photons: Vec<usize> = records.iter().map(|r| r.total_photons).collect();
    let steps: Vec<usize> = records.iter().map(active_steps).collect();
    let gaps: Vec<usize> = records.iter().flat_map(|r| r.gaps_between_resets()).collect();
    EvalReport {
        episodes: n,
        seeds: cfg.seeds.clone(),
        success_threshold: cfg.success_threshold,
        success_rate: frac(fit_f.iter().filter(|&&f| f >= cfg.success_threshold).count()),
        mean_best_fidelity: mean(&mut records.iter().map(|r| r.best_fidelity)),
        mean_final_fidelity: mean(&mut records.iter().map(|r| r.final_fidelity)),
        mean_fit_fidelity: mean(&mut fit_f.iter().copied()),
        ends_with_low_tau: frac(records.iter().filter(|r| r.steps.last().is_some_and(|s| s.tau < LOW_TAU)).count()),
        with_reset: frac(records.iter().filter(|r| r.steps.iter().any(|s| s.tau >= RESET_TAU)).count()),
        labels,
        histograms: vec![
            Histogram::uniform("output_fidelity", 0.0, 1.0, 20, &fit_f),
            Histogram::integer("photons", &photons),
            Histogram::integer("steps", &steps),
            Histogram::integer("steps_between_resets", &gaps),
        ],
    }
}
