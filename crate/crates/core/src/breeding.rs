//! Cat and GKP breeding through a CZ gate and homodyne detection, plus the
//! four-register fail-mode calculator.
//!
//! Wiring: A is rotated by `frame`, B by `frame + π/2`; the pair goes through
//! `exp(i g q⊗q)` and the `p` quadrature of B is measured. At outcome `x` the
//! surviving wavefunction is `ψ_A(q)·χ_B(q − x)`, where `χ_B` is B's
//! wavefunction after its rotation, reflected.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    annihilation, apply_gate, apply_matrix, build_cz, build_rotation, build_squeeze, db_to_r, fidelity_pure,
    fidelity_pure_mixed, gkp_state, homodyne_marginal, homodyne_project, sample_weighted, CMatrix,
    DensityMatrix, FockCutoff, GkpLogical, HomodyneGrid, Parity, PureState,
};
use crate::onestep::{herald_all, OneStepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomodyneMode {
    /// Keep outcomes inside `±window` and report the acceptance probability.
    PostSelected,
    /// Sample an outcome and displace the output to undo its shift.
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BreedingConfig {
    pub tau2: f64,
    pub r0: f64,
    pub cz_gain: f64,
    pub mode: HomodyneMode,
    /// Post-selection half-width around `x = 0`.
    pub window: f64,
    /// Quadrature angle of the homodyne on the ancilla; π/2 reads `p`.
    pub measured_quadrature: f64,
    pub post_squeeze_db: f64,
    pub post_rotation: f64,
    /// Cutoff for the CZ and everything after it.
    pub cutoff: FockCutoff,
    /// Cutoff used to herald the input cats before padding.
    pub herald_cutoff: FockCutoff,
    pub acceptance_floor: f64,
}

impl Default for BreedingConfig {
    fn default() -> Self {
        Self {
            tau2: 0.146,
            r0: 1.38,
            cz_gain: 1.0,
            mode: HomodyneMode::PostSelected,
            window: 0.1,
            measured_quadrature: FRAC_PI_2,
            post_squeeze_db: 4.76,
            post_rotation: -std::f64::consts::FRAC_PI_4,
            cutoff: FockCutoff::new(60).expect("static cutoff"),
            herald_cutoff: FockCutoff::new(40).expect("static cutoff"),
            acceptance_floor: 1e-6,
        }
    }
}

impl BreedingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == HomodyneMode::PostSelected && !(self.window > 0.0) {
            return Err(Error::InvalidParameter(format!("post-selection window {} must be positive", self.window)));
        }
        if !(0.0..=1.0).contains(&self.tau2) {
            return Err(Error::InvalidParameter(format!("tau^2 = {} outside [0, 1]", self.tau2)));
        }
        if self.herald_cutoff.dim() > self.cutoff.dim() {
            return Err(Error::InvalidParameter("herald cutoff exceeds breeding cutoff".into()));
        }
        Ok(())
    }

    /// One-step settings matching the breeding inputs.
    pub fn one_step(&self) -> OneStepConfig {
        OneStepConfig { input_r: -self.r0, loop_r: self.r0, cutoff: self.herald_cutoff, ..OneStepConfig::default() }
    }
}

/// Result of one breeding round.
#[derive(Debug, Clone)]
pub struct Bred {
    /// Conditional output at the central outcome (post-selected) or the
    /// corrected output at the sampled outcome.
    pub state: PureState,
    /// Output averaged over the post-selection window.
    pub mixture: Option<DensityMatrix>,
    pub acceptance: Option<f64>,
    /// Homodyne outcome and the applied `q` displacement, in corrected mode.
    pub outcome: Option<f64>,
    pub correction: Option<f64>,
}

impl Bred {
    /// Fidelity with a pure target, using the windowed mixture when present.
    pub fn fidelity(&self, target: &PureState) -> f64 {
        match &self.mixture {
            Some(rho) => fidelity_pure_mixed(target, rho),
            None => fidelity_pure(target, &self.state),
        }
    }

    fn map(mut self, f: impl Fn(&PureState) -> Result<PureState>, u: &CMatrix) -> Result<Self> {
        self.state = f(&self.state)?;
        if let Some(rho) = self.mixture.take() {
            let m = u * rho.matrix() * u.adjoint();
            self.mixture = Some(DensityMatrix::new(m, rho.cutoff(), 1)?);
        }
        Ok(self)
    }
}

/// Points per window used to integrate the post-selected mixture (odd, Simpson).
const WINDOW_POINTS: usize = 21;

fn entangle(a: &PureState, b: &PureState, frame: f64, config: &BreedingConfig) -> Result<PureState> {
    if a.modes() != 1 || b.modes() != 1 {
        return Err(Error::Dimension("breeding inputs must be single-mode".into()));
    }
    let c = config.cutoff;
    let a = if a.cutoff() == c { a.clone() } else { a.resized(c)? };
    let b = if b.cutoff() == c { b.clone() } else { b.resized(c)? };
    let a = apply_gate(&a, &build_rotation(frame, c), &[0])?;
    let b = apply_gate(&b, &build_rotation(frame + FRAC_PI_2, c), &[0])?;
    let joint = PureState::product(&a, &b)?;
    apply_gate(&joint, &build_cz(config.cz_gain, c), &[0, 1])
}

/// `exp(s(a† − a)/√2)`: shifts `q` by `s`.
pub fn displacement_q(s: f64, cutoff: FockCutoff) -> DMatrix<f64> {
    let a = annihilation(cutoff.dim());
    ((a.transpose() - a) * (s / std::f64::consts::SQRT_2)).exp()
}

fn breed_in_frame<R: Rng + ?Sized>(
    a: &PureState,
    b: &PureState,
    frame: f64,
    config: &BreedingConfig,
    rng: &mut R,
) -> Result<Bred> {
    config.validate()?;
    let joint = entangle(a, b, frame, config)?;
    let theta = config.measured_quadrature;
    match config.mode {
        HomodyneMode::PostSelected => {
            let (_, centre) = homodyne_project(&joint, 1, theta, 0.0)?;
            let w = config.window;
            let h = 2.0 * w / (WINDOW_POINTS - 1) as f64;
            let mut acceptance = 0.0;
            let mut parts = Vec::with_capacity(WINDOW_POINTS);
            for k in 0..WINDOW_POINTS {
                let x = -w + k as f64 * h;
                let simpson = if k == 0 || k == WINDOW_POINTS - 1 {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let weight = simpson * h / 3.0;
                match homodyne_project(&joint, 1, theta, x) {
                    Ok((density, s)) => {
                        acceptance += weight * density;
                        parts.push((weight * density, s));
                    }
                    Err(Error::ZeroProbability { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            if acceptance < config.acceptance_floor {
                return Err(Error::LowAcceptance(acceptance));
            }
            let mixture = DensityMatrix::mixture(&parts)?;
            Ok(Bred { state: centre, mixture: Some(mixture), acceptance: Some(acceptance), outcome: None, correction: None })
        }
        HomodyneMode::Corrected => {
            let grid = HomodyneGrid::default();
            let weights = homodyne_marginal(&joint, 1, theta, &grid)?;
            let x = grid.values()[sample_weighted(&weights, rng)?];
            let (_, s) = homodyne_project(&joint, 1, theta, x)?;
            // the product of two envelopes centred at 0 and x sits at x/2
            let shift = -0.5 * config.cz_gain * x;
            let d = apply_matrix(&s, &displacement_q(shift, config.cutoff))?;
            Ok(Bred { state: d, mixture: None, acceptance: None, outcome: Some(x), correction: Some(shift) })
        }
    }
}

/// Breeds two cats into a larger one.
pub fn breed_cats<R: Rng + ?Sized>(a: &PureState, b: &PureState, config: &BreedingConfig, rng: &mut R) -> Result<Bred> {
    breed_in_frame(a, b, 0.0, config, rng)
}

/// Breeds two cats in the Fourier frame, then squeezes and rotates.
pub fn breed_gkp<R: Rng + ?Sized>(a: &PureState, b: &PureState, config: &BreedingConfig, rng: &mut R) -> Result<Bred> {
    let raw = breed_in_frame(a, b, FRAC_PI_2, config, rng)?;
    post_process(raw, config)
}

fn post_process(raw: Bred, config: &BreedingConfig) -> Result<Bred> {
    let c = config.cutoff;
    let squeeze = build_squeeze(db_to_r(config.post_squeeze_db), 0.0, c);
    let rotate = build_rotation(config.post_rotation, c);
    let u = rotate.matrix() * squeeze.matrix();
    raw.map(
        |s| {
            let s = apply_gate(s, &squeeze, &[0])?;
            apply_gate(&s, &rotate, &[0])
        },
        &u,
    )
}

/// Outcome statistics over four independent detector registers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailModes {
    pub p0: f64,
    pub p1: f64,
    /// P(at least three registers read 0).
    pub p_3plus_zeros: f64,
    /// P(exactly two read 0 and at least one of the others reads 1).
    pub p_2zeros_with_one: f64,
    /// `p0³`: one specific pattern with three zeros.
    pub pattern_3_zeros: f64,
    /// `p0²·p1`: one specific pattern with two zeros and a one.
    pub pattern_2zeros_one: f64,
}

/// Fail-mode probabilities from the exact single-step distribution.
pub fn fail_mode_probability(tau: f64, config: &OneStepConfig) -> Result<FailModes> {
    let h = herald_all(tau, config)?;
    Ok(fail_modes_from(h.probabilities[0], h.probabilities.get(1).copied().unwrap_or(0.0)))
}

/// Enumerates the 3⁴ register patterns over the classes {0, 1, ≥2}.
pub fn fail_modes_from(p0: f64, p1: f64) -> FailModes {
    let classes = [p0, p1, (1.0 - p0 - p1).max(0.0)];
    let mut three = 0.0;
    let mut two_one = 0.0;
    for code in 0..81usize {
        let digits = [code % 3, (code / 3) % 3, (code / 9) % 3, code / 27];
        let p: f64 = digits.iter().map(|&d| classes[d]).product();
        let zeros = digits.iter().filter(|&&d| d == 0).count();
        let ones = digits.iter().filter(|&&d| d == 1).count();
        if zeros >= 3 {
            three += p;
        } else if zeros == 2 && ones >= 1 {
            two_one += p;
        }
    }
    FailModes {
        p0,
        p1,
        p_3plus_zeros: three,
        p_2zeros_with_one: two_one,
        pattern_3_zeros: p0.powi(3),
        pattern_2zeros_one: p0 * p0 * p1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatTarget {
    pub alpha: f64,
    pub r: f64,
    pub parity: Parity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkpTarget {
    pub logical: GkpLogical,
    pub db: f64,
}

/// One step of a breeding pipeline descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    /// Heralded one-step state at `tau2` for detector outcome `n`.
    Herald { name: String, n: usize, tau2: Option<f64> },
    BreedCats { name: String, inputs: [String; 2], target: Option<CatTarget> },
    BreedGkp { name: String, inputs: [String; 2], target: Option<GkpTarget> },
}

impl Stage {
    pub fn name(&self) -> &str {
        match self {
            Stage::Herald { name, .. } | Stage::BreedCats { name, .. } | Stage::BreedGkp { name, .. } => name,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Stage::Herald { .. } => "herald",
            Stage::BreedCats { .. } => "breed_cats",
            Stage::BreedGkp { .. } => "breed_gkp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pipeline {
    #[serde(default)]
    pub config: BreedingConfig,
    #[serde(rename = "stage")]
    pub stages: Vec<Stage>,
}

/// serde ignores `deny_unknown_fields` on internally tagged variants, so
/// stage keys are checked by hand.
fn check_stage_keys(doc: &serde_json::Value) -> Result<()> {
    let Some(stages) = doc.get("stage").and_then(|s| s.as_array()) else {
        return Ok(());
    };
    for stage in stages {
        let Some(map) = stage.as_object() else { continue };
        let allowed: &[&str] = match map.get("kind").and_then(|k| k.as_str()) {
            Some("herald") => &["kind", "name", "n", "tau2"],
            Some("breed_cats") | Some("breed_gkp") => &["kind", "name", "inputs", "target"],
            _ => continue,
        };
        if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown field `{key}` in stage {}", map.get("name").unwrap_or(&serde_json::Value::Null))));
        }
    }
    Ok(())
}

impl Pipeline {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        check_stage_keys(&serde_json::to_value(&doc)?)?;
        let p: Pipeline = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        check_stage_keys(&doc)?;
        let p: Pipeline = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Checks names and references without computing anything.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let mut seen: Vec<&str> = Vec::new();
        for stage in &self.stages {
            if let Stage::BreedCats { inputs, .. } | Stage::BreedGkp { inputs, .. } = stage {
                for i in inputs {
                    if !seen.contains(&i.as_str()) {
                        return Err(Error::Config(format!("stage '{}' uses '{}' before it is produced", stage.name(), i)));
                    }
                }
            }
            if seen.contains(&stage.name()) {
                return Err(Error::Config(format!("duplicate stage name '{}'", stage.name())));
            }
            seen.push(stage.name());
        }
        Ok(())
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PipelineOutput> {
        self.validate()?;
        let cfg = &self.config;
        let mut states: HashMap<String, Bred> = HashMap::new();
        let mut reports = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let (bred, probability, target) = match stage {
                Stage::Herald { n, tau2, .. } => {
                    let one = cfg.one_step();
                    let tau = tau2.unwrap_or(cfg.tau2).sqrt();
                    let h = herald_all(tau, &one)?;
                    let s = h.state(*n)?.resized(cfg.cutoff)?;
                    let bred = Bred { state: s, mixture: None, acceptance: None, outcome: None, correction: None };
                    (bred, Some(h.probabilities[*n]), None)
                }
                Stage::BreedCats { inputs, target, .. } => {
                    let bred = breed_cats(&states[&inputs[0]].state, &states[&inputs[1]].state, cfg, rng)?;
                    let t = target.map(|t| PureState::squeezed_cat(t.alpha, t.r, t.parity, cfg.cutoff)).transpose()?;
                    (bred, None, t)
                }
                Stage::BreedGkp { inputs, target, .. } => {
                    let bred = breed_gkp(&states[&inputs[0]].state, &states[&inputs[1]].state, cfg, rng)?;
                    let t = target.map(|t| gkp_state(t.logical, t.db, cfg.cutoff)).transpose()?;
                    (bred, None, t)
                }
            };
            reports.push(StageReport {
                name: stage.name().to_string(),
                kind: stage.kind().to_string(),
                probability,
                acceptance: bred.acceptance,
                outcome: bred.outcome,
                fidelity: target.as_ref().map(|t| bred.fidelity(t)),
                fidelity_central: target.as_ref().map(|t| fidelity_pure(t, &bred.state)),
                mean_photon_number: bred.state.mean_photon_number(),
                guard_population: bred.state.guard_population(),
            });
            states.insert(stage.name().to_string(), bred);
        }
        Ok(PipelineOutput { reports, states })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub kind: String,
    pub probability: Option<f64>,
    pub acceptance: Option<f64>,
    pub outcome: Option<f64>,
    /// Against the stage target, window-averaged in post-selected mode.
    pub fidelity: Option<f64>,
    /// Against the stage target, at the central outcome only.
    pub fidelity_central: Option<f64>,
    pub mean_photon_number: f64,
    pub guard_population: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub reports: Vec<StageReport>,
    pub states: HashMap<String, Bred>,
}

/// The bundled two-round pipeline: heralded n=1 and n=2 cats, one cat
/// breeding round, then GKP breeding of the result with itself.
pub const TWO_ROUND_DESCRIPTOR: &str = include_str!("../configs/two_round.toml");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{wigner, WignerGrid, C64};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> BreedingConfig {
        let c = FockCutoff::new(30).unwrap();
        BreedingConfig { cutoff: c, herald_cutoff: c, ..BreedingConfig::default() }
    }

    #[test]
    fn fail_modes_match_hand_count() {
        let f = fail_modes_from(0.5, 0.25);
        // C(4,3)·0.5³·0.5 + 0.5⁴
        assert_abs_diff_eq!(f.p_3plus_zeros, 4.0 * 0.0625 + 0.0625, epsilon = 1e-15);
        // C(4,2)·0.5²·(0.5² − 0.25²)
        assert_abs_diff_eq!(f.p_2zeros_with_one, 6.0 * 0.25 * (0.25 - 0.0625), epsilon = 1e-15);
        assert_abs_diff_eq!(fail_modes_from(1.0, 0.0).p_3plus_zeros, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn vacuum_inputs_stay_gaussian() {
        let cfg = small();
        let v = PureState::vacuum(cfg.cutoff, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = breed_cats(&v, &v, &cfg, &mut rng).unwrap();
        let w = wigner(&out.state.density(), &WignerGrid::square(4.0, 41)).unwrap();
        assert!(w.min() >= -1e-8);
    }

    #[test]
    fn even_inputs_give_even_output_and_mirror_symmetry() {
        let cfg = small();
        let cat = PureState::squeezed_cat(1.2, 0.3, Parity::Even, cfg.cutoff).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = breed_cats(&cat, &cat, &cfg, &mut rng).unwrap();
        assert!(out.state.parity_leak(Parity::Even) < 1e-8);
        let grid = WignerGrid::square(4.0, 41);
        let w = wigner(&out.state.density(), &grid).unwrap();
        for i in 0..grid.nx {
            for j in 0..grid.np {
                assert_abs_diff_eq!(w[(i, j)], w[(grid.nx - 1 - i, j)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn identity_post_processing() {
        let cfg = BreedingConfig { post_squeeze_db: 0.0, post_rotation: 0.0, ..small() };
        let cat = PureState::squeezed_cat(1.0, 0.2, Parity::Odd, cfg.cutoff).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = breed_in_frame(&cat, &cat, FRAC_PI_2, &cfg, &mut rng).unwrap();
        let done = breed_gkp(&cat, &cat, &cfg, &mut rng).unwrap();
        assert_abs_diff_eq!(fidelity_pure(&raw.state, &done.state), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cz_stage_preserves_norm() {
        let cfg = small();
        let cat = PureState::squeezed_cat(1.0, 0.2, Parity::Odd, cfg.cutoff).unwrap();
        let joint = entangle(&cat, &cat, 0.0, &cfg).unwrap();
        assert!(joint.deficit() < 1e-9);
        assert_abs_diff_eq!(joint.norm_sqr(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn displacement_shifts_mean_q() {
        let c = FockCutoff::new(30).unwrap();
        let v = PureState::vacuum(c, 1);
        let s = crate::fock::apply_matrix(&v, &displacement_q(0.8, c)).unwrap();
        let q = crate::fock::position(30).map(|x| C64::new(x, 0.0));
        let mean = (s.amplitudes().adjoint() * q * s.amplitudes())[(0, 0)].re;
        assert_abs_diff_eq!(mean, 0.8, epsilon = 1e-9);
    }

    #[test]
    fn unknown_stage_is_a_schema_error() {
        let text = "[[stage]]\nkind = \"teleport\"\nname = \"x\"\n";
        assert!(matches!(Pipeline::from_toml(text), Err(Error::Config(_))));
        let text = "[[stage]]\nkind = \"breed_cats\"\nname = \"x\"\ninputs = [\"a\", \"b\"]\n";
        assert!(matches!(Pipeline::from_toml(text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_stage_field_is_rejected() {
        let text = "[[stage]]\nkind = \"herald\"\nname = \"a\"\nn = 1\nbogus = 3\n";
        assert!(matches!(Pipeline::from_toml(text), Err(Error::Config(_))));
        let json = r#"{"stage": [{"kind": "herald", "name": "a", "n": 1, "bogus": 3}]}"#;
        assert!(matches!(Pipeline::from_json(json), Err(Error::Config(_))));
    }

    #[test]
    fn bundled_descriptor_parses() {
        let p = Pipeline::from_toml(TWO_ROUND_DESCRIPTOR).unwrap();
        assert_eq!(p.stages.len(), 4);
    }
}
