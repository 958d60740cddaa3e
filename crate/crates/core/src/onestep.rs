//! Single-step heralded cat generation and the τ sweeps built on it.
//!
//! One loop pass: the injected squeezed vacuum (mode 0) meets the loop
//! content (mode 1) on the variable beamsplitter; mode 1 goes to the photon
//! counter and mode 0 is kept. By default the loop already holds `|0, r₀⟩` and
//! the injected state is squeezed along the orthogonal quadrature, `|0, −r₀⟩`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{file_err, Error, Result};
use crate::fock::{apply_gate, build_beamsplitter, fidelity_pure, fidelity_pure_mixed, DensityMatrix, FockCutoff, Parity, PureState, C64, PROBABILITY_FLOOR};
use crate::optim::NelderMead;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSet {
    /// Only the cat whose parity matches the heralded photon number.
    ParityMatched,
    /// Max over both parities and their π/2-rotated copies.
    FourTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneStepConfig {
    /// Squeezing of the injected state.
    pub input_r: f64,
    /// Squeezing of the state already circulating in the loop.
    pub loop_r: f64,
    pub cutoff: FockCutoff,
    pub target_alpha: f64,
    pub target_r: f64,
    pub targets: TargetSet,
    /// Rows kept per τ in the sweep table; averages always run over every `n < dim`.
    pub n_max: usize,
    /// Trial cats whose truncation deficit exceeds this score zero in fits.
    pub fit_deficit_tolerance: f64,
}

impl Default for OneStepConfig {
    fn default() -> Self {
        Self {
            input_r: -1.38,
            loop_r: 1.38,
            cutoff: FockCutoff::DEFAULT,
            target_alpha: 3.0,
            target_r: 1.38,
            targets: TargetSet::ParityMatched,
            n_max: 12,
            fit_deficit_tolerance: 1e-2,
        }
    }
}

impl OneStepConfig {
    /// Empty loop, squeezed input: the reading where the first pass meets vacuum.
    pub fn vacuum_loop() -> Self {
        Self { input_r: 1.38, loop_r: 0.0, ..Self::default() }
    }

    pub fn with_cutoff(mut self, dim: usize) -> Result<Self> {
        self.cutoff = FockCutoff::new(dim)?;
        Ok(self)
    }
}

/// All heralded outcomes of one beamsplitter pass.
#[derive(Debug, Clone)]
pub struct Heralded {
    pub tau: f64,
    /// `p_n` for `n < dim`.
    pub probabilities: Vec<f64>,
    /// Conditional kept-mode state for outcomes above the probability floor
    /// and not dominated by truncation.
    pub states: Vec<Option<PureState>>,
    pub deficit: f64,
}

impl Heralded {
    pub fn state(&self, n: usize) -> Result<&PureState> {
        let p = self.probabilities.get(n).copied().unwrap_or(0.0);
        self.states
            .get(n)
            .and_then(Option::as_ref)
            .ok_or(Error::ZeroProbability { probability: p })
    }

    /// Probability mass on outcomes above `n_max`.
    pub fn tail_mass(&self, n_max: usize) -> f64 {
        self.probabilities.iter().skip(n_max + 1).sum()
    }
}

/// Heralded states with more than this population in the guard band are dropped.
pub const HERALD_GUARD_LIMIT: f64 = 0.05;

pub fn herald_all(tau: f64, config: &OneStepConfig) -> Result<Heralded> {
    let c = config.cutoff;
    let input = PureState::squeezed_vacuum(config.input_r, 0.0, c);
    let held = PureState::squeezed_vacuum(config.loop_r, 0.0, c);
    let joint = PureState::product(&input, &held)?;
    let out = apply_gate(&joint, &build_beamsplitter(tau, c)?, &[0, 1])?;
    let psi = out.as_matrix();
    let d = c.dim();
    let mut probabilities = Vec::with_capacity(d);
    let mut states = Vec::with_capacity(d);
    for n in 0..d {
        let column = psi.column(n).into_owned();
        let p = column.norm_squared();
        probabilities.push(p);
        if p < PROBABILITY_FLOOR {
            states.push(None);
            continue;
        }
        let mut s = PureState::from_amplitudes(column, c, 1)?;
        s.normalize()?;
        s.set_deficit(out.deficit());
        // outcomes fed mostly by the truncated high-photon blocks are artefacts
        states.push((s.guard_population() <= HERALD_GUARD_LIMIT).then_some(s));
    }
    Ok(Heralded { tau, probabilities, states, deficit: out.deficit() })
}

/// Heralded kept-mode state for detector outcome `n`, with its probability.
pub fn one_step_state(tau: f64, n: usize, config: &OneStepConfig) -> Result<(PureState, f64)> {
    let h = herald_all(tau, config)?;
    if n >= h.probabilities.len() {
        return Err(Error::InvalidParameter(format!("photon number {n} beyond cutoff")));
    }
    let s = h.state(n)?.clone();
    Ok((s, h.probabilities[n]))
}

/// The fixed target cats: even and odd, plus their π/2-rotated copies.
#[derive(Debug, Clone)]
pub struct TargetCats {
    pub even: PureState,
    pub odd: PureState,
    pub even_rotated: PureState,
    pub odd_rotated: PureState,
}

impl TargetCats {
    pub fn new(alpha: f64, r: f64, cutoff: FockCutoff) -> Result<Self> {
        let even = PureState::squeezed_cat(alpha, r, Parity::Even, cutoff)?;
        let odd = PureState::squeezed_cat(alpha, r, Parity::Odd, cutoff)?;
        let rotate = |s: &PureState| -> Result<PureState> {
            let v = s.amplitudes().map_with_location(|n, _, c| c * C64::from_polar(1.0, -std::f64::consts::FRAC_PI_2 * n as f64));
            let mut out = PureState::from_amplitudes(v, cutoff, 1)?;
            out.set_deficit(s.deficit());
            Ok(out)
        };
        Ok(Self { even_rotated: rotate(&even)?, odd_rotated: rotate(&odd)?, even, odd })
    }

    pub fn all(&self) -> [&PureState; 4] {
        [&self.even, &self.odd, &self.even_rotated, &self.odd_rotated]
    }

    pub fn score(&self, state: &PureState, n: usize, set: TargetSet) -> f64 {
        match set {
            TargetSet::ParityMatched => {
                let t = if n % 2 == 0 { &self.even } else { &self.odd };
                fidelity_pure(t, state)
            }
            TargetSet::FourTarget => self.all().iter().map(|t| fidelity_pure(t, state)).fold(0.0, f64::max),
        }
    }
}

/// Fringe period `π e^{2r} / (4α)` of a squeezed cat.
pub fn fringe_period(alpha: f64, r: f64) -> f64 {
    std::f64::consts::PI * (2.0 * r).exp() / (4.0 * alpha)
}

/// Best squeezed cat of a given parity for a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatFit {
    pub fidelity: f64,
    pub alpha: f64,
    pub r: f64,
    pub parity: Parity,
    /// `false` when the simplex stage did not converge and the grid point was kept.
    pub converged: bool,
}

/// Coarse-grid-then-simplex fitter over real `α ≥ 0` and `r` of either sign.
#[derive(Debug, Clone)]
pub struct CatFitter {
    cutoff: FockCutoff,
    deficit_tolerance: f64,
    alphas: Vec<f64>,
    rs: Vec<f64>,
    /// Precomputed grid cats per parity, `None` where unrepresentable.
    grid: [Vec<Option<PureState>>; 2],
    /// Simplex search box.
    pub bounds: [(f64, f64); 2],
}

fn parity_slot(p: Parity) -> usize {
    match p {
        Parity::Even => 0,
        Parity::Odd => 1,
    }
}

impl CatFitter {
    pub fn new(cutoff: FockCutoff, deficit_tolerance: f64) -> Self {
        let alphas: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
        let rs: Vec<f64> = (0..=25).map(|k| -0.5 + k as f64 * 0.1).collect();
        let build = |parity: Parity| -> Vec<Option<PureState>> {
            alphas
                .iter()
                .flat_map(|&a| rs.iter().map(move |&r| (a, r)))
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|(a, r)| {
                    PureState::squeezed_cat(a, r, parity, cutoff).ok().filter(|s| s.deficit() <= deficit_tolerance)
                })
                .collect()
        };
        let grid = [build(Parity::Even), build(Parity::Odd)];
        Self { cutoff, deficit_tolerance, alphas, rs, grid, bounds: [(0.0, 5.0), (-1.0, 2.5)] }
    }

    pub fn grid_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.alphas.iter().flat_map(move |&a| self.rs.iter().map(move |&r| (a, r)))
    }

    /// Best fidelity over the coarse grid alone, restricted to the `α` bounds.
    pub fn grid_best(&self, state: &PureState, parity: Parity) -> CatFit {
        self.grid_best_by(parity, |cat| fidelity_pure(cat, state))
    }

    fn grid_best_by(&self, parity: Parity, score: impl Fn(&PureState) -> f64) -> CatFit {
        let (lo, hi) = self.bounds[0];
        let mut best = CatFit { fidelity: -1.0, alpha: lo.max(0.0), r: 0.0, parity, converged: false };
        for ((alpha, r), cat) in self.grid_points().zip(&self.grid[parity_slot(parity)]) {
            if alpha < lo || alpha > hi {
                continue;
            }
            if let Some(cat) = cat {
                let f = score(cat);
                if f > best.fidelity {
                    best = CatFit { fidelity: f, alpha, r, parity, converged: false };
                }
            }
        }
        best.fidelity = best.fidelity.max(0.0);
        best
    }

    pub fn fit(&self, state: &PureState, parity: Parity) -> CatFit {
        self.fit_by(parity, |cat| fidelity_pure(cat, state))
    }

    /// Same search against a mixed state.
    pub fn fit_density(&self, rho: &DensityMatrix, parity: Parity) -> CatFit {
        self.fit_by(parity, |cat| fidelity_pure_mixed(cat, rho))
    }

    fn fit_by(&self, parity: Parity, score: impl Fn(&PureState) -> f64) -> CatFit {
        let start = self.grid_best_by(parity, &score);
        let mut nm = NelderMead::new(self.bounds.to_vec(), vec![0.05, 0.05]);
        nm.f_tol = 1e-9;
        let m = nm.minimize(&[start.alpha, start.r], |x| match PureState::squeezed_cat(x[0], x[1], parity, self.cutoff) {
            Ok(cat) if cat.deficit() <= self.deficit_tolerance => -score(&cat),
            _ => 0.0,
        });
        if -m.value >= start.fidelity {
            CatFit { fidelity: -m.value, alpha: m.x[0], r: m.x[1], parity, converged: m.converged }
        } else {
            start
        }
    }
}

/// Probability-weighted average over heralded outcomes `n ≥ 1` against the fixed targets.
pub fn average_fidelity(tau: f64, config: &OneStepConfig) -> Result<f64> {
    let h = herald_all(tau, config)?;
    let targets = TargetCats::new(config.target_alpha, config.target_r, config.cutoff)?;
    Ok(fixed_average(&h, &targets, config.targets))
}

fn fixed_average(h: &Heralded, targets: &TargetCats, set: TargetSet) -> f64 {
    (1..h.probabilities.len())
        .filter_map(|n| h.states[n].as_ref().map(|s| h.probabilities[n] * targets.score(s, n, set)))
        .sum()
}

/// Best squeezed-cat fidelity of the `n`-photon heralded state, parity matched to `n`.
pub fn optimize_target(tau: f64, n: usize, config: &OneStepConfig) -> Result<CatFit> {
    if n == 0 {
        return Err(Error::InvalidParameter("moving-target fits need n ≥ 1".into()));
    }
    let (state, _) = one_step_state(tau, n, config)?;
    let fitter = CatFitter::new(config.cutoff, config.fit_deficit_tolerance);
    Ok(fitter.fit(&state, Parity::of(n)))
}

/// Probability-weighted average of the optimal fidelities over `n ≥ 1`.
pub fn average_optimal_fidelity(tau: f64, config: &OneStepConfig) -> Result<f64> {
    let h = herald_all(tau, config)?;
    let fitter = CatFitter::new(config.cutoff, config.fit_deficit_tolerance);
    Ok(optimal_average(&h, &fitter, MOVING_PROBABILITY_FLOOR))
}

/// Outcomes rarer than this are skipped by the moving-target average.
pub const MOVING_PROBABILITY_FLOOR: f64 = 1e-8;

/// Below this `τ²` the heralded states are nearly the input itself and the
/// optimal-fidelity average is not a meaningful operating point.
pub const RELEVANT_MIN_TAU2: f64 = 0.02;

fn optimal_average(h: &Heralded, fitter: &CatFitter, floor: f64) -> f64 {
    (1..h.probabilities.len())
        .filter(|&n| h.probabilities[n] > floor)
        .filter_map(|n| h.states[n].as_ref().map(|s| h.probabilities[n] * fitter.fit(s, Parity::of(n)).fidelity))
        .sum()
}

/// `τ²` values from 0 to 1 inclusive.
pub fn tau2_grid(step: f64) -> Vec<f64> {
    let count = (1.0 / step).round() as usize;
    (0..=count).map(|k| (k as f64 * step).min(1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Fixed,
    Moving,
}

/// One `(τ, n)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub tau2: f64,
    pub n: usize,
    pub p_n: f64,
    pub fidelity: f64,
    pub f_opt: Option<f64>,
    pub alpha_opt: Option<f64>,
    pub r_opt: Option<f64>,
    pub xi_opt: Option<f64>,
    pub fit_converged: Option<bool>,
}

/// Per-τ summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau2: f64,
    pub p0: f64,
    /// Probability on `n > n_max`.
    pub tail_mass: f64,
    /// `1 − Σ p_n` over the truncated space.
    pub completeness_gap: f64,
    pub deficit: f64,
    pub average_fidelity: f64,
    pub average_optimal_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub kind: SweepKind,
    pub config: OneStepConfig,
    pub convention: String,
    pub tau2_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub meta: SweepMeta,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

pub const CONVENTION: &str = "hbar=1; q=(a+a^dag)/sqrt2; S(r)=exp[r/2(a^2-a^dag^2)]; BS=exp[theta(a^dag b - a b^dag)], cos theta=tau; mode 0 kept, mode 1 counted";

pub fn sweep(config: &OneStepConfig, tau2: &[f64], kind: SweepKind) -> Result<SweepTable> {
    let targets = TargetCats::new(config.target_alpha, config.target_r, config.cutoff)?;
    let fitter = match kind {
        SweepKind::Moving => Some(CatFitter::new(config.cutoff, config.fit_deficit_tolerance)),
        SweepKind::Fixed => None,
    };
    let per_tau: Vec<(SweepRow, Vec<SweepCell>)> = tau2
        .par_iter()
        .map(|&t2| -> Result<(SweepRow, Vec<SweepCell>)> {
            let h = herald_all(t2.sqrt(), config)?;
            let total: f64 = h.probabilities.iter().sum();
            let mut cells = Vec::new();
            let mut optimal = 0.0;
            for n in 1..h.probabilities.len() {
                let p = h.probabilities[n];
                let fixed = h.states[n].as_ref().map_or(0.0, |s| targets.score(s, n, config.targets));
                let fit = match (&fitter, &h.states[n]) {
                    (Some(f), Some(s)) if p > MOVING_PROBABILITY_FLOOR => Some(f.fit(s, Parity::of(n))),
                    _ => None,
                };
                if let Some(fit) = fit {
                    optimal += p * fit.fidelity;
                }
                if n <= config.n_max {
                    cells.push(SweepCell {
                        tau2: t2,
                        n,
                        p_n: p,
                        fidelity: fixed,
                        f_opt: fit.map(|f| f.fidelity),
                        alpha_opt: fit.map(|f| f.alpha),
                        r_opt: fit.map(|f| f.r),
                        xi_opt: fit.filter(|f| f.alpha > 0.0).map(|f| fringe_period(f.alpha, f.r)),
                        fit_converged: fit.map(|f| f.converged),
                    });
                }
            }
            let row = SweepRow {
                tau2: t2,
                p0: h.probabilities[0],
                tail_mass: h.tail_mass(config.n_max),
                completeness_gap: 1.0 - total,
                deficit: h.deficit,
                average_fidelity: fixed_average(&h, &targets, config.targets),
                average_optimal_fidelity: fitter.as_ref().map(|_| optimal),
            };
            Ok((row, cells))
        })
        .collect::<Result<_>>()?;
    let step = if tau2.len() > 1 { tau2[1] - tau2[0] } else { 0.0 };
    let mut rows = Vec::with_capacity(per_tau.len());
    let mut cells = Vec::new();
    for (row, c) in per_tau {
        rows.push(row);
        cells.extend(c);
    }
    Ok(SweepTable {
        meta: SweepMeta { kind, config: *config, convention: CONVENTION.into(), tau2_step: step },
        rows,
        cells,
    })
}

impl SweepTable {
    /// `(τ², value)` of the global maximum of the fixed-target average.
    pub fn argmax_fixed(&self) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.tau2, r.average_fidelity))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Largest interior local maximum of the optimal-fidelity average with `τ² ≥ min_tau2`.
    pub fn relevant_maximum(&self, min_tau2: f64) -> Option<(f64, f64)> {
        let series: Vec<(f64, f64)> =
            self.rows.iter().filter_map(|r| r.average_optimal_fidelity.map(|v| (r.tau2, v))).collect();
        let mut best: Option<(f64, f64)> = None;
        for i in 1..series.len().saturating_sub(1) {
            let (t, v) = series[i];
            if t < min_tau2 || v < series[i - 1].1 || v < series[i + 1].1 {
                continue;
            }
            if best.is_none_or(|b| v > b.1) {
                best = Some((t, v));
            }
        }
        best
    }

    pub fn cell(&self, tau2: f64, n: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && (c.tau2 - tau2).abs() < 1e-12)
    }

    /// Cells whose fixed-target fidelity is at least `threshold`, with the
    /// ratio of their best-fit fringe period to the target's.
    pub fn fringe_diagnostic(&self, threshold: f64) -> Vec<(f64, usize, f64)> {
        let target = fringe_period(self.meta.config.target_alpha, self.meta.config.target_r);
        self.cells
            .iter()
            .filter(|c| c.fidelity >= threshold)
            .filter_map(|c| c.xi_opt.map(|xi| (c.tau2, c.n, xi / target)))
            .collect()
    }

    /// One CSV row per `(τ, n)` cell.
    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for c in &self.cells {
            w.serialize(c).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(file_err(path))
    }

    /// One CSV row per τ.
    pub fn write_rows_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(file_err(path))
    }

    pub fn write_meta_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(path, text).map_err(file_err(path))
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::File { path: path.to_path_buf(), source: io },
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> OneStepConfig {
        OneStepConfig::default().with_cutoff(20).unwrap()
    }

    #[test]
    fn probabilities_are_complete() {
        let h = herald_all(0.4, &small()).unwrap();
        let total: f64 = h.probabilities.iter().sum();
        assert!((1.0 - total).abs() < 1e-3, "{total}");
    }

    #[test]
    fn heralded_parity_follows_n() {
        let h = herald_all(0.37, &small()).unwrap();
        for n in 1..8 {
            let s = h.state(n).unwrap();
            assert!(s.parity_leak(Parity::of(n)) < 1e-10);
        }
    }

    #[test]
    fn vacuum_loop_zero_transmission_never_clicks() {
        // the empty loop is sent to the counter at τ = 1
        let cfg = OneStepConfig::vacuum_loop().with_cutoff(16).unwrap();
        let h = herald_all(1.0, &cfg).unwrap();
        assert_abs_diff_eq!(h.probabilities[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn squeezed_loop_at_full_transmission_counts_loop_content() {
        let cfg = small();
        let h = herald_all(1.0, &cfg).unwrap();
        let sv = PureState::squeezed_vacuum(cfg.loop_r, 0.0, cfg.cutoff);
        for (p, q) in h.probabilities.iter().zip(sv.probabilities()) {
            assert_abs_diff_eq!(*p, q, epsilon = 1e-12);
        }
    }

    #[test]
    fn fitter_recovers_a_known_cat() {
        let c = FockCutoff::new(24).unwrap();
        let cat = PureState::squeezed_cat(1.73, 0.64, Parity::Odd, c).unwrap();
        let fitter = CatFitter::new(c, 1e-2);
        let fit = fitter.fit(&cat, Parity::Odd);
        assert!(fit.fidelity > 1.0 - 1e-8, "{fit:?}");
        assert_abs_diff_eq!(fit.alpha, 1.73, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.r, 0.64, epsilon = 1e-3);
    }

    #[test]
    fn fit_dominates_grid() {
        let cfg = small();
        let h = herald_all(0.4, &cfg).unwrap();
        let fitter = CatFitter::new(cfg.cutoff, cfg.fit_deficit_tolerance);
        let s = h.state(2).unwrap();
        let fit = fitter.fit(s, Parity::Even);
        assert!(fit.fidelity >= fitter.grid_best(s, Parity::Even).fidelity);
    }

    #[test]
    fn grid_includes_both_ends() {
        let g = tau2_grid(0.005);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 1.0);
    }
}
