use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_mode, CMatrix, CVector, DensityMatrix, PureState, C64};
use crate::error::{Error, Result};

/// Outcomes below this probability are treated as impossible.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

/// Photon-number distribution of one mode of a one- or two-mode state.
pub fn pnr_distribution(state: &PureState, mode: usize) -> Result<Vec<f64>> {
    check_mode(mode, state.modes())?;
    if state.modes() == 1 {
        return Ok(state.probabilities());
    }
    let d = state.dim();
    let psi = state.as_matrix();
    let probs = (0..d)
        .map(|n| {
            if mode == 0 {
                psi.row(n).iter().map(|c| c.norm_sqr()).sum()
            } else {
                psi.column(n).iter().map(|c| c.norm_sqr()).sum()
            }
        })
        .collect();
    Ok(probs)
}

/// Projects `mode` of a two-mode state onto `|n⟩`; returns the outcome
/// probability and the normalized state of the other mode.
pub fn pnr_project(state: &PureState, mode: usize, n: usize) -> Result<(f64, PureState)> {
    if state.modes() != 2 {
        return Err(Error::Dimension("photon counting a mode away needs a two-mode state".into()));
    }
    check_mode(mode, 2)?;
    let d = state.dim();
    if n >= d {
        return Err(Error::InvalidParameter(format!("photon number {n} beyond cutoff {d}")));
    }
    let psi = state.as_matrix();
    let v: CVector = if mode == 0 { psi.row(n).transpose() } else { psi.column(n).into_owned() };
    let p = v.norm_squared();
    if p < PROBABILITY_FLOOR {
        return Err(Error::ZeroProbability { probability: p });
    }
    let mut out = PureState::from_amplitudes(v, state.cutoff(), 1)?;
    out.normalize()?;
    out.set_deficit(state.deficit());
    Ok((p, out))
}

/// Samples a photon count on `mode` and returns `(n, p_n, conditional state)`.
pub fn pnr_sample<R: Rng + ?Sized>(state: &PureState, mode: usize, rng: &mut R) -> Result<(usize, f64, PureState)> {
    let probs = pnr_distribution(state, mode)?;
    let n = sample_index(&probs, rng)?;
    let (p, out) = pnr_project(state, mode, n)?;
    Ok((n, p, out))
}

pub fn pnr_project_density(rho: &DensityMatrix, mode: usize, n: usize) -> Result<(f64, DensityMatrix)> {
    if rho.modes() != 2 {
        return Err(Error::Dimension("photon counting a mode away needs a two-mode state".into()));
    }
    check_mode(mode, 2)?;
    let d = rho.dim();
    if n >= d {
        return Err(Error::InvalidParameter(format!("photon number {n} beyond cutoff {d}")));
    }
    let m = rho.matrix();
    let idx = |keep: usize| if mode == 1 { keep * d + n } else { n * d + keep };
    let block = CMatrix::from_fn(d, d, |i, j| m[(idx(i), idx(j))]);
    let p: f64 = block.diagonal().iter().map(|c| c.re).sum();
    if p < PROBABILITY_FLOOR {
        return Err(Error::ZeroProbability { probability: p });
    }
    let mut out = DensityMatrix::new(block, rho.cutoff(), 1)?;
    out.normalize()?;
    out.set_deficit(rho.deficit());
    Ok((p, out))
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroProbability { probability: total });
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return Ok(i);
            }
            u -= w;
        }
    }
    Ok(last)
}

/// Uniform quadrature grid used for homodyne sampling and marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomodyneGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for HomodyneGrid {
    fn default() -> Self {
        Self { min: -12.0, max: 12.0, points: 4096 }
    }
}

impl HomodyneGrid {
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|k| self.min + k as f64 * h).collect()
    }
}

/// Harmonic-oscillator eigenfunctions `ψₙ(x)`, `n < dim`, as a `dim × xs.len()` matrix.
pub fn hermite_functions(dim: usize, xs: &[f64]) -> DMatrix<f64> {
    let mut h = DMatrix::<f64>::zeros(dim, xs.len());
    let norm0 = std::f64::consts::PI.powf(-0.25);
    for (k, &x) in xs.iter().enumerate() {
        h[(0, k)] = norm0 * (-x * x / 2.0).exp();
        if dim > 1 {
            h[(1, k)] = std::f64::consts::SQRT_2 * x * h[(0, k)];
        }
        for n in 2..dim {
            let nf = n as f64;
            h[(n, k)] = (2.0 / nf).sqrt() * x * h[(n - 1, k)] - ((nf - 1.0) / nf).sqrt() * h[(n - 2, k)];
        }
    }
    h
}

/// `⟨x_θ|n⟩ = e^{−iθn} ψₙ(x)` for a single quadrature value.
fn quadrature_bra(dim: usize, theta: f64, x: f64) -> CVector {
    let h = hermite_functions(dim, &[x]);
    CVector::from_fn(dim, |n, _| C64::from_polar(h[(n, 0)], -theta * n as f64))
}

/// Projects `mode` onto the quadrature eigenstate `|x_θ⟩` (`θ = 0` is `q`, `π/2` is `p`).
///
/// Returns the probability density at `x` and the normalized state of the
/// other mode.
pub fn homodyne_project(state: &PureState, mode: usize, theta: f64, x: f64) -> Result<(f64, PureState)> {
    if state.modes() != 2 {
        return Err(Error::Dimension("homodyne projection needs a two-mode state".into()));
    }
    check_mode(mode, 2)?;
    let d = state.dim();
    let bra = quadrature_bra(d, theta, x);
    let psi = state.as_matrix();
    // ⟨x_θ|n⟩ contracted over the measured index
    let v: CVector = if mode == 1 {
        &psi * &bra
    } else {
        psi.transpose() * bra
    };
    let density = v.norm_squared();
    if density < PROBABILITY_FLOOR {
        return Err(Error::ZeroProbability { probability: density });
    }
    let mut out = PureState::from_amplitudes(v, state.cutoff(), 1)?;
    out.normalize()?;
    out.set_deficit(state.deficit());
    Ok((density, out))
}

/// Quadrature marginal `|⟨x_θ|ψ⟩|²` of a single-mode state on `grid`.
pub fn homodyne_density_grid(state: &PureState, theta: f64, grid: &HomodyneGrid) -> Result<Vec<f64>> {
    if state.modes() != 1 {
        return Err(Error::Dimension("quadrature marginal needs a single-mode state".into()));
    }
    let xs = grid.values();
    let d = state.dim();
    let h = hermite_functions(d, &xs);
    let rotated = CVector::from_fn(d, |n, _| state.amplitudes()[n] * C64::from_polar(1.0, -theta * n as f64));
    Ok((0..xs.len())
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..d {
                acc += rotated[n] * h[(n, k)];
            }
            acc.norm_sqr()
        })
        .collect())
}

/// Quadrature marginal of `mode` of a two-mode state on `grid`, unnormalized
/// (multiply by the grid step for probabilities).
pub fn homodyne_marginal(state: &PureState, mode: usize, theta: f64, grid: &HomodyneGrid) -> Result<Vec<f64>> {
    if state.modes() != 2 {
        return Err(Error::Dimension("quadrature marginal of a mode needs a two-mode state".into()));
    }
    check_mode(mode, 2)?;
    let d = state.dim();
    let xs = grid.values();
    let h = hermite_functions(d, &xs);
    let psi = state.as_matrix();
    let measured = if mode == 1 { psi } else { psi.transpose() };
    // Σ_i |Σ_n Ψ[i,n] e^{−iθn} ψₙ(x)|²
    let phased = CMatrix::from_fn(d, d, |i, n| measured[(i, n)] * C64::from_polar(1.0, -theta * n as f64));
    let hc = h.map(|v| C64::new(v, 0.0));
    let amps = phased * hc;
    Ok((0..xs.len()).map(|k| amps.column(k).norm_squared()).collect())
}

/// Samples a quadrature outcome on `mode` from the grid marginal, then projects.
pub fn homodyne_sample<R: Rng + ?Sized>(
    state: &PureState,
    mode: usize,
    theta: f64,
    grid: &HomodyneGrid,
    rng: &mut R,
) -> Result<(f64, f64, PureState)> {
    let weights = homodyne_marginal(state, mode, theta, grid)?;
    let x = grid.values()[sample_index(&weights, rng)?];
    let (density, out) = homodyne_project(state, mode, theta, x)?;
    Ok((x, density, out))
}

/// Draws a grid index with probability proportional to `weights`.
pub fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    sample_index(weights, rng)
}
