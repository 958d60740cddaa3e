//! Command-line front end. Every subcommand writes its outputs plus a
//! `manifest.json` into the output directory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::breeding::{fail_mode_probability, Pipeline, Stage, TWO_ROUND_DESCRIPTOR};
use crate::env::{EnvConfig, LookupTable};
use crate::error::{file_err, Error, Result};
use crate::fock::{wigner, WignerGrid};
use crate::onestep::{sweep, tau2_grid, OneStepConfig, SweepKind};
use crate::plot::{histogram_chart, line_chart, wigner_chart};
use crate::ppo::{evaluate, load_policy, write_curve_csv, EvalConfig, PpoHyperparams, Trainer};

/// Marked on sweep plots for comparison.
pub const SWEEP_REFERENCE_TAU2: f64 = 0.12;

#[derive(Debug, Parser)]
#[command(name = "loopcat", version, about = "Optical loop simulation, PPO training and breeding")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LOOPCAT_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "LOOPCAT_OUT", default_value = "runs")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Full,
    Reduced,
    Smoke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    Fixed,
    Moving,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy.
    Train {
        /// TOML with `seed`, `[env]` and `[ppo]` tables; overrides the profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "reduced")]
        profile: Profile,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long, conflicts_with = "config")]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 250)]
        episodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
        /// Lookup table to append episodes to (default: `<out>/lookup.jsonl`).
        #[arg(long)]
        lookup: Option<PathBuf>,
    },
    /// Single-step τ sweep.
    Sweep {
        #[arg(value_enum)]
        kind: SweepArg,
        #[arg(long, default_value_t = 30)]
        cutoff: usize,
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        /// Start the loop in vacuum instead of the squeezed state.
        #[arg(long)]
        vacuum_loop: bool,
    },
    /// Run a breeding pipeline descriptor (default: the bundled two-round one).
    Breed {
        descriptor: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Validate and print the plan without simulating.
        #[arg(long)]
        dry_run: bool,
    },
    /// Query a lookup table for episodes starting with a given action prefix.
    Table {
        lookup: PathBuf,
        /// `r,tau,n` triples separated by `;`.
        #[arg(long, default_value = "")]
        prefix: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub ppo: PpoHyperparams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::profile(Profile::Full)
    }
}

impl TrainConfig {
    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Full => Self { seed: 0, env: EnvConfig::default(), ppo: PpoHyperparams::default() },
            Profile::Reduced => Self { seed: 0, env: EnvConfig::reduced(), ppo: PpoHyperparams { num_envs: 4, total_steps: 300_000, ..PpoHyperparams::default() } },
            Profile::Smoke => Self {
                seed: 0,
                env: EnvConfig::reduced(),
                ppo: PpoHyperparams { num_envs: 2, rollout_len: 32, minibatch: 16, epochs: 2, hidden: vec![16, 16], total_steps: 256, checkpoint_every: 2, ..PpoHyperparams::default() },
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(file_err(path))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(file_err(path))
}

fn parse_prefix(text: &str) -> Result<Vec<(f64, f64, usize)>> {
    let bad = || Error::InvalidParameter(format!("prefix {text:?} is not a list of r,tau,n triples"));
    text.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let f: Vec<&str> = t.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok((f[0].parse().map_err(|_| bad())?, f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?))
        })
        .collect()
}

struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(file_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn finish(mut self, command: &str, seed: Option<u64>) -> Result<()> {
        self.names.sort();
        let m = RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            outputs: self.names,
        };
        write_json(&self.dir.join("manifest.json"), &m)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cli.out;
    match cli.command {
        Command::Train { config, profile, seed, steps, resume } => train(&out, config, profile, seed, steps, resume),
        Command::Eval { checkpoint, episodes, seeds, threshold, lookup } => eval(&out, &checkpoint, episodes, seeds, threshold, lookup),
        Command::Sweep { kind, cutoff, step, vacuum_loop } => sweep_cmd(&out, kind, cutoff, step, vacuum_loop),
        Command::Breed { descriptor, seed, dry_run } => breed(&out, descriptor, seed, dry_run),
        Command::Table { lookup, prefix } => table(&lookup, &prefix),
    }
}

fn train(out: &Path, config: Option<PathBuf>, profile: Profile, seed: Option<u64>, steps: Option<u64>, resume: Option<PathBuf>) -> Result<()> {
    let mut o = Outputs::new(out)?;
    let mut trainer = match resume {
        Some(path) => Trainer::load_checkpoint(&path)?,
        None => {
            let mut cfg = match config {
                Some(p) => TrainConfig::from_toml(&read_text(&p)?)?,
                None => TrainConfig::profile(profile),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            write_json(&o.path("train_config.json"), &cfg)?;
            Trainer::new(cfg.env, cfg.ppo, cfg.seed)?
        }
    };
    if let Some(s) = steps {
        trainer.hp.total_steps = s;
    }
    let checkpoints = trainer.train(Some(out), |p| {
        eprintln!("step {:>9}  reward {:.4}  best F {:.4}  entropy {:.3}", p.global_step, p.mean_reward, p.mean_fidelity, p.entropy);
    })?;
    for c in &checkpoints {
        if let Ok(rel) = c.strip_prefix(out) {
            o.names.push(rel.to_string_lossy().into_owned());
        }
    }
    write_curve_csv(&trainer.curve, &o.path("curve.csv"))?;
    let reward: Vec<(f64, f64)> = trainer.curve.iter().map(|p| (p.global_step as f64, p.mean_reward)).collect();
    let fid: Vec<(f64, f64)> = trainer.curve.iter().map(|p| (p.global_step as f64, p.mean_fidelity)).collect();
    line_chart(&o.path("curve_reward.png"), &[reward], &[])?;
    line_chart(&o.path("curve_fidelity.png"), &[fid], &[])?;
    let last = checkpoints.last().cloned().unwrap_or_else(|| out.join("checkpoints").join("final.json"));
    if checkpoints.is_empty() {
        trainer.save_checkpoint(&last)?;
        o.names.push("checkpoints/final.json".into());
    }
    println!("{}", last.display());
    o.finish("train", Some(trainer.seed))
}

fn eval(out: &Path, checkpoint: &Path, episodes: usize, seeds: Vec<u64>, threshold: f64, lookup: Option<PathBuf>) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut o = Outputs::new(out)?;
    let (policy, env) = load_policy(checkpoint)?;
    let cfg = EvalConfig { episodes_per_seed: episodes, seeds, success_threshold: threshold, ..EvalConfig::default() };
    let (report, records, fits) = evaluate(&policy, &env, &cfg)?;
    write_json(&o.path("eval_report.json"), &report)?;
    let mut lines = String::new();
    for (r, f) in records.iter().zip(&fits) {
        lines.push_str(&serde_json::to_string(&(r, f))?);
        lines.push('\n');
    }
    let episodes_path = o.path("episodes.jsonl");
    std::fs::write(&episodes_path, lines).map_err(file_err(&episodes_path))?;
    for h in &report.histograms {
        h.write_csv(&o.path(&format!("hist_{}.csv", h.name)))?;
        histogram_chart(&o.path(&format!("hist_{}.png", h.name)), h)?;
    }
    LookupTable::new(lookup.unwrap_or_else(|| out.join("lookup.jsonl"))).append(&records)?;
    println!(
        "episodes {}  success {:.4}  mean best F {:.4}  ends with low tau {:.4}  with reset {:.4}",
        report.episodes, report.success_rate, report.mean_best_fidelity, report.ends_with_low_tau, report.with_reset
    );
    o.finish("eval", None)
}

fn sweep_cmd(out: &Path, kind: SweepArg, cutoff: usize, step: f64, vacuum_loop: bool) -> Result<()> {
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidParameter(format!("tau^2 step {step} outside (0, 1)")));
    }
    let mut o = Outputs::new(out)?;
    let base = if vacuum_loop { OneStepConfig::vacuum_loop() } else { OneStepConfig::default() };
    let config = base.with_cutoff(cutoff)?;
    let kind = match kind {
        SweepArg::Fixed => SweepKind::Fixed,
        SweepArg::Moving => SweepKind::Moving,
    };
    let table = sweep(&config, &tau2_grid(step), kind)?;
    table.write_cells_csv(&o.path("cells.csv"))?;
    table.write_rows_csv(&o.path("rows.csv"))?;
    table.write_meta_json(&o.path("meta.json"))?;
    let (curve, best) = match kind {
        SweepKind::Fixed => (table.rows.iter().map(|r| (r.tau2, r.average_fidelity)).collect::<Vec<_>>(), table.argmax_fixed()),
        SweepKind::Moving => (
            table.rows.iter().filter_map(|r| r.average_optimal_fidelity.map(|f| (r.tau2, f))).collect(),
            table.relevant_maximum(crate::onestep::RELEVANT_MIN_TAU2),
        ),
    };
    let mut marks = vec![SWEEP_REFERENCE_TAU2];
    marks.extend(best.map(|b| b.0));
    line_chart(&o.path("sweep.png"), &[curve], &marks)?;
    match best {
        Some((t2, f)) => println!("maximum at tau^2 = {t2} (F = {f})"),
        None => println!("no maximum found"),
    }
    o.finish("sweep", None)
}

fn breed(out: &Path, descriptor: Option<PathBuf>, seed: u64, dry_run: bool) -> Result<()> {
    let pipeline = match &descriptor {
        Some(p) if p.extension().is_some_and(|e| e == "json") => Pipeline::from_json(&read_text(p)?)?,
        Some(p) => Pipeline::from_toml(&read_text(p)?)?,
        None => Pipeline::from_toml(TWO_ROUND_DESCRIPTOR)?,
    };
    pipeline.validate()?;
    if dry_run {
        for s in &pipeline.stages {
            match s {
                Stage::Herald { name, n, .. } => println!("{name}: herald n={n}"),
                Stage::BreedCats { name, inputs, .. } => println!("{name}: breed cats {} x {}", inputs[0], inputs[1]),
                Stage::BreedGkp { name, inputs, .. } => println!("{name}: breed GKP {} x {}", inputs[0], inputs[1]),
            }
        }
        return Ok(());
    }
    let mut o = Outputs::new(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = pipeline.run(&mut rng)?;
    write_json(&o.path("breeding_report.json"), &result.reports)?;
    let cfg = &pipeline.config;
    let fail = fail_mode_probability(cfg.tau2.sqrt(), &cfg.one_step().with_cutoff(cfg.herald_cutoff.dim())?)?;
    write_json(&o.path("fail_modes.json"), &fail)?;
    let grid = WignerGrid::square(6.0, 121);
    for r in &result.reports {
        let bred = &result.states[&r.name];
        let rho = match &bred.mixture {
            Some(m) => m.clone(),
            None => bred.state.density(),
        };
        let w = wigner(&rho, &grid)?;
        wigner_chart(&o.path(&format!("wigner_{}.png", r.name)), &w, &grid)?;
        println!("{:<8} {:<10} F={:?} F(x=0)={:?}", r.name, r.kind, r.fidelity, r.fidelity_central);
    }
    o.finish("breed", Some(seed))
}

fn table(lookup: &Path, prefix: &str) -> Result<()> {
    let prefix = parse_prefix(prefix)?;
    for r in LookupTable::new(lookup).query(&prefix)? {
        println!("{}", serde_json::to_string(&r)?);
    }
    Ok(())
}
