//! The loop circuit as a Markov decision process.
//!
//! Each step injects `|0, r_j⟩` on mode 0, mixes it with the loop content on
//! mode 1 through a beamsplitter of transmission `τ_j`, counts photons on
//! mode 1 and keeps mode 0 as the new loop content. `τ = 1` resets the loop to
//! the fresh squeezed state; `τ = 0` leaves the loop untouched and sends the
//! injected state to the counter.

mod lookup;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    apply_gate, apply_gate_density, build_beamsplitter, build_rotation, fidelity_pure, fidelity_pure_mixed,
    loss_channel, loss_channel_mode, pnr_distribution, pnr_project, pnr_project_density, CMatrix, DensityMatrix,
    FockCutoff, Parity, PureState, C64, PROBABILITY_FLOOR,
};
use crate::onestep::TargetCats;

pub use lookup::{quantize, LookupTable, LOOKUP_FORMAT, LOOKUP_VERSION};

/// What the loop holds right after `reset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialLoop {
    /// `|0, r₀⟩`.
    Squeezed,
    Vacuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub cutoff: FockCutoff,
    pub r0: f64,
    pub initial_loop: InitialLoop,
    pub target_alpha: f64,
    pub target_r: f64,
    pub horizon: usize,
    pub reward_exponent: u32,
    /// Transmission of the loss channel in front of the detector.
    pub loss_eta: f64,
    /// Transmission of an optional loss channel on the kept loop mode.
    pub loop_loss_eta: f64,
    pub r_bounds: [f64; 2],
    pub tau_bounds: [f64; 2],
    pub squeeze_angle: f64,
    pub loop_phase: f64,
    pub early_termination: bool,
    /// `τ` below this counts towards early termination.
    pub terminate_tau: f64,
    pub terminate_after: usize,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            cutoff: FockCutoff::DEFAULT,
            r0: 1.38,
            initial_loop: InitialLoop::Squeezed,
            target_alpha: 3.0,
            target_r: 1.38,
            horizon: 10,
            reward_exponent: 50,
            loss_eta: 1.0,
            loop_loss_eta: 1.0,
            r_bounds: [-1.5, 1.5],
            tau_bounds: [0.0, 1.0],
            squeeze_angle: 0.0,
            loop_phase: 0.0,
            early_termination: true,
            terminate_tau: 0.01,
            terminate_after: 3,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Desk-scale training profile: cutoff 12, small target cat, short episodes.
    pub fn reduced() -> Self {
        Self {
            cutoff: FockCutoff::new(12).expect("static cutoff"),
            r0: 0.8,
            target_alpha: 1.5,
            target_r: 0.8,
            horizon: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizon < 1 {
            return bad("horizon must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.loss_eta) || !(0.0..=1.0).contains(&self.loop_loss_eta) {
            return bad(format!("loss transmissions {} / {} outside [0, 1]", self.loss_eta, self.loop_loss_eta));
        }
        if self.reward_exponent < 1 {
            return bad("reward exponent must be at least 1".into());
        }
        if !(self.r_bounds[0] <= self.r_bounds[1]) {
            return bad(format!("empty squeezing bounds {:?}", self.r_bounds));
        }
        let [t0, t1] = self.tau_bounds;
        if !(0.0 <= t0 && t0 <= t1 && t1 <= 1.0) {
            return bad(format!("transmission bounds {:?} not inside [0, 1]", self.tau_bounds));
        }
        Ok(())
    }

    fn lossless(&self) -> bool {
        self.loss_eta == 1.0 && self.loop_loss_eta == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub r: f64,
    pub tau: f64,
}

impl Action {
    pub fn new(r: f64, tau: f64) -> Self {
        Self { r, tau }
    }

    pub fn clamped(self, config: &EnvConfig) -> Self {
        let fix = |v: f64, [lo, hi]: [f64; 2]| if v.is_nan() { lo } else { v.clamp(lo, hi) };
        Self { r: fix(self.r, config.r_bounds), tau: fix(self.tau, config.tau_bounds) }
    }
}

/// `[Re(upper triangle), Im(upper triangle), diag]` of the loop density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn len_for(dim: usize) -> usize {
        dim * dim
    }

    pub fn encode(rho: &CMatrix) -> Self {
        let d = rho.nrows();
        let pairs = d * (d - 1) / 2;
        let mut v = vec![0.0; d * d];
        let mut k = 0;
        for i in 0..d {
            for j in i + 1..d {
                v[k] = rho[(i, j)].re;
                v[pairs + k] = rho[(i, j)].im;
                k += 1;
            }
        }
        for i in 0..d {
            v[2 * pairs + i] = rho[(i, i)].re;
        }
        Self(v)
    }

    fn encode_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        let d = a.len();
        let pairs = d * (d - 1) / 2;
        let mut v = vec![0.0; d * d];
        let mut k = 0;
        for i in 0..d {
            for j in i + 1..d {
                let c = a[i] * a[j].conj();
                v[k] = c.re;
                v[pairs + k] = c.im;
                k += 1;
            }
        }
        for i in 0..d {
            v[2 * pairs + i] = a[i].norm_sqr();
        }
        Self(v)
    }

    /// Rebuilds the Hermitian matrix the vector came from.
    pub fn decode(&self, dim: usize) -> Result<CMatrix> {
        if self.0.len() != dim * dim {
            return Err(Error::Dimension(format!("observation of length {} for cutoff {dim}", self.0.len())));
        }
        let pairs = dim * (dim - 1) / 2;
        let mut m = CMatrix::zeros(dim, dim);
        let mut k = 0;
        for i in 0..dim {
            for j in i + 1..dim {
                let c = C64::new(self.0[k], self.0[pairs + k]);
                m[(i, j)] = c;
                m[(j, i)] = c.conj();
                k += 1;
            }
        }
        for i in 0..dim {
            m[(i, i)] = C64::new(self.0[2 * pairs + i], 0.0);
        }
        Ok(m)
    }

    pub fn diagonal(&self, dim: usize) -> &[f64] {
        &self.0[dim * (dim - 1)..]
    }
}

/// Loop content: pure while everything is lossless.
#[derive(Debug, Clone, PartialEq)]
pub enum LoopState {
    Pure(PureState),
    Mixed(DensityMatrix),
}

impl LoopState {
    pub fn density(&self) -> DensityMatrix {
        match self {
            LoopState::Pure(s) => s.density(),
            LoopState::Mixed(r) => r.clone(),
        }
    }

    pub fn observation(&self) -> Observation {
        match self {
            LoopState::Pure(s) => Observation::encode_pure(s),
            LoopState::Mixed(r) => Observation::encode(r.matrix()),
        }
    }

    pub fn fidelity_with(&self, target: &PureState) -> f64 {
        match self {
            LoopState::Pure(s) => fidelity_pure(target, s),
            LoopState::Mixed(r) => fidelity_pure_mixed(target, r),
        }
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        match self {
            LoopState::Pure(s) => s.probabilities(),
            LoopState::Mixed(r) => r.photon_distribution(),
        }
    }

    /// Population on Fock levels of the wrong parity.
    pub fn parity_leak(&self, parity: Parity) -> f64 {
        self.photon_distribution().iter().enumerate().filter(|(n, _)| !parity.contains(*n)).map(|(_, p)| p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub n: usize,
    pub probability: f64,
    /// Best of the four target fidelities, before the exponent.
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub r: f64,
    pub tau: f64,
    pub n: usize,
    pub reward: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub parity: Parity,
    /// The last injected state was squeezed along `p` (`r < 0`).
    pub fourier: bool,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = match self.parity {
            Parity::Even => "even",
            Parity::Odd => "odd",
        };
        write!(f, "{p}/{}", if self.fourier { "fourier" } else { "plain" })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: u64,
    pub steps: Vec<StepRecord>,
    pub total_photons: usize,
    pub label: Label,
    pub best_fidelity: f64,
    pub final_fidelity: f64,
    pub terminated_early: bool,
}

/// Transmission at or above which a step counts as a reset.
pub const RESET_TAU: f64 = 0.99;

impl EpisodeRecord {
    pub fn resets(&self) -> usize {
        self.steps.iter().filter(|s| s.tau >= RESET_TAU).count()
    }

    /// Steps from each reset to the next one, or to the start of the final
    /// run of `τ ≈ 0` steps (or the episode end) for the last reset.
    pub fn gaps_between_resets(&self) -> Vec<usize> {
        let mut end = self.steps.len();
        while end > 0 && self.steps[end - 1].tau < LOW_TAU {
            end -= 1;
        }
        let resets: Vec<usize> = (0..end).filter(|&i| self.steps[i].tau >= RESET_TAU).collect();
        resets.iter().enumerate().map(|(k, &i)| resets.get(k + 1).copied().unwrap_or(end) - i).collect()
    }
}

/// Transmission below which a step leaves the loop alone.
pub const LOW_TAU: f64 = 0.01;

/// Parity from the photon total, Fourier flag from the sign of the last `r`.
pub fn classify_output(steps: &[StepRecord]) -> Label {
    let total: usize = steps.iter().map(|s| s.n).sum();
    Label { parity: Parity::of(total), fourier: steps.last().is_some_and(|s| s.r < 0.0) }
}

/// `(max_k F(ρ, target_k))^P` over the even/odd cats and their π/2 rotations.
#[derive(Debug, Clone)]
pub struct Reward {
    targets: TargetCats,
    exponent: u32,
}

impl Reward {
    pub fn new(config: &EnvConfig) -> Result<Self> {
        Ok(Self { targets: TargetCats::new(config.target_alpha, config.target_r, config.cutoff)?, exponent: config.reward_exponent })
    }

    pub fn best_fidelity(&self, state: &LoopState) -> f64 {
        self.targets.all().iter().map(|t| state.fidelity_with(t)).fold(0.0, f64::max)
    }

    pub fn of_fidelity(&self, fidelity: f64) -> f64 {
        fidelity.clamp(0.0, 1.0).powi(self.exponent as i32)
    }

    pub fn reward(&self, state: &LoopState) -> f64 {
        self.of_fidelity(self.best_fidelity(state))
    }

    pub fn targets(&self) -> &TargetCats {
        &self.targets
    }
}

/// One environment instance; owns its random stream.
#[derive(Debug, Clone)]
pub struct LoopEnv {
    config: EnvConfig,
    reward: Reward,
    rng: ChaCha8Rng,
    state: LoopState,
    steps: Vec<StepRecord>,
    low_tau_run: usize,
    done: bool,
    terminated_early: bool,
    episode: u64,
    best: f64,
}

impl LoopEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let reward = Reward::new(&config)?;
        let state = LoopState::Pure(Self::initial(&config));
        let mut env = Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            reward,
            state,
            steps: Vec::new(),
            low_tau_run: 0,
            done: false,
            terminated_early: false,
            episode: 0,
            best: 0.0,
        };
        env.best = env.reward.best_fidelity(&env.state);
        Ok(env)
    }

    fn initial(config: &EnvConfig) -> PureState {
        match config.initial_loop {
            InitialLoop::Squeezed => PureState::squeezed_vacuum(config.r0, config.squeeze_angle, config.cutoff),
            InitialLoop::Vacuum => PureState::vacuum(config.cutoff, 1),
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reward_fn(&self) -> &Reward {
        &self.reward
    }

    pub fn state(&self) -> &LoopState {
        &self.state
    }

    /// Replaces the loop content, e.g. to restore a saved state.
    pub fn set_state(&mut self, state: LoopState) {
        self.state = state;
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> usize {
        self.steps.len()
    }

    /// Starts a new episode; the random stream continues.
    pub fn reset(&mut self) -> Observation {
        self.state = LoopState::Pure(Self::initial(&self.config));
        self.steps.clear();
        self.low_tau_run = 0;
        self.done = false;
        self.terminated_early = false;
        self.best = self.reward.best_fidelity(&self.state);
        self.state.observation()
    }

    /// Starts a new episode on a fresh stream seeded with `seed`.
    pub fn reset_with_seed(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.config.seed = seed;
        self.reset()
    }

    pub fn observation(&self) -> Observation {
        self.state.observation()
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        self.advance(action, None)
    }

    /// Like [`step`](Self::step) but with the detector outcome given, as when
    /// replaying a recorded sequence.
    pub fn step_with_outcome(&mut self, action: Action, n: usize) -> Result<StepOutcome> {
        self.advance(action, Some(n))
    }

    fn advance(&mut self, action: Action, forced: Option<usize>) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::InvalidParameter("step on a finished episode".into()));
        }
        let a = action.clamped(&self.config);
        let c = self.config.cutoff;
        let input = PureState::squeezed_vacuum(a.r, self.config.squeeze_angle, c);
        let bs = build_beamsplitter(a.tau, c)?;
        let (n, probability, kept) = match &self.state {
            LoopState::Pure(loop_state) if self.config.loss_eta == 1.0 => {
                let joint = apply_gate(&PureState::product(&input, loop_state)?, &bs, &[0, 1])?;
                let n = match forced {
                    Some(n) => n,
                    None => {
                        let mut p = pnr_distribution(&joint, 1)?;
                        p.iter_mut().filter(|v| **v < PROBABILITY_FLOOR).for_each(|v| *v = 0.0);
                        crate::fock::sample_weighted(&p, &mut self.rng)?
                    }
                };
                let (prob, s) = pnr_project(&joint, 1, n)?;
                (n, prob, LoopState::Pure(s))
            }
            other => {
                let rho_in = input.density();
                let joint = DensityMatrix::new(rho_in.matrix().kronecker(other.density().matrix()), c, 2)?;
                let mut joint = apply_gate_density(&joint, &bs, &[0, 1])?;
                if self.config.loss_eta < 1.0 {
                    joint = loss_channel_mode(&joint, self.config.loss_eta, 1)?;
                }
                let n = match forced {
                    Some(n) => n,
                    None => {
                        let d = c.dim();
                        let m = joint.matrix();
                        let mut p: Vec<f64> = (0..d).map(|k| (0..d).map(|i| m[(i * d + k, i * d + k)].re).sum()).collect();
                        p.iter_mut().filter(|v| **v < PROBABILITY_FLOOR).for_each(|v| *v = 0.0);
                        crate::fock::sample_weighted(&p, &mut self.rng)?
                    }
                };
                let (prob, rho) = pnr_project_density(&joint, 1, n)?;
                (n, prob, LoopState::Mixed(rho))
            }
        };
        let mut kept = kept;
        if self.config.loop_loss_eta < 1.0 {
            kept = LoopState::Mixed(loss_channel(&kept.density(), self.config.loop_loss_eta)?);
        }
        if self.config.loop_phase != 0.0 {
            let rot = build_rotation(self.config.loop_phase, c);
            kept = match kept {
                LoopState::Pure(s) => LoopState::Pure(apply_gate(&s, &rot, &[0])?),
                LoopState::Mixed(r) => LoopState::Mixed(apply_gate_density(&r, &rot, &[0])?),
            };
        }
        self.state = kept;
        let fidelity = self.reward.best_fidelity(&self.state);
        let reward = self.reward.of_fidelity(fidelity);
        self.best = self.best.max(fidelity);
        self.steps.push(StepRecord { r: a.r, tau: a.tau, n, reward, fidelity });

        if a.tau < self.config.terminate_tau {
            self.low_tau_run += 1;
        } else {
            self.low_tau_run = 0;
        }
        if self.steps.len() >= self.config.horizon {
            self.done = true;
        } else if self.config.early_termination && self.low_tau_run >= self.config.terminate_after {
            self.done = true;
            self.terminated_early = true;
            // the frozen state would have earned the same reward on every remaining step
            let remaining = (self.config.horizon - self.steps.len()) as f64;
            return Ok(StepOutcome {
                observation: self.state.observation(),
                reward: reward * (1.0 + remaining),
                done: true,
                info: StepInfo { n, probability, fidelity },
            });
        }
        Ok(StepOutcome { observation: self.state.observation(), reward, done: self.done, info: StepInfo { n, probability, fidelity } })
    }

    /// Summary of the episode so far.
    pub fn record(&self) -> EpisodeRecord {
        EpisodeRecord {
            seed: self.config.seed,
            episode: self.episode,
            steps: self.steps.clone(),
            total_photons: self.steps.iter().map(|s| s.n).sum(),
            label: classify_output(&self.steps),
            best_fidelity: self.best,
            final_fidelity: self.reward.best_fidelity(&self.state),
            terminated_early: self.terminated_early,
        }
    }

    pub fn set_episode_index(&mut self, episode: u64) {
        self.episode = episode;
    }

    /// Whether the configuration keeps states pure.
    pub fn is_lossless(&self) -> bool {
        self.config.lossless()
    }
}

/// Reconstructs `ρ` from an observation as a [`DensityMatrix`].
pub fn decode_density(obs: &Observation, cutoff: FockCutoff) -> Result<DensityMatrix> {
    DensityMatrix::new(obs.decode(cutoff.dim())?, cutoff, 1)
}
