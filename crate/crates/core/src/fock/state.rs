use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::gate::squeeze_vector;
use super::{ln_factorial, FockCutoff, CMatrix, CVector, C64, GUARD_BAND};
use crate::error::{Error, Result};

/// Photon-number parity of a cat state, `|α⟩ + |−α⟩` (even) or `|α⟩ − |−α⟩` (odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: usize) -> Self {
        if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn contains(self, n: usize) -> bool {
        Parity::of(n) == self
    }
}

/// Normalized amplitude vector over one or two truncated modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    cutoff: FockCutoff,
    modes: usize,
    deficit: f64,
}

impl PureState {
    /// Wraps raw amplitudes. The vector is not normalized here.
    pub fn from_amplitudes(amplitudes: CVector, cutoff: FockCutoff, modes: usize) -> Result<Self> {
        if !(1..=2).contains(&modes) {
            return Err(Error::InvalidParameter(format!("modes must be 1 or 2, got {modes}")));
        }
        let expected = cutoff.dim().pow(modes as u32);
        if amplitudes.len() != expected {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {modes} mode(s) at cutoff {}",
                amplitudes.len(),
                cutoff.dim()
            )));
        }
        Ok(Self { amplitudes, cutoff, modes, deficit: 0.0 })
    }

    pub fn vacuum(cutoff: FockCutoff, modes: usize) -> Self {
        Self::fock(&vec![0; modes], cutoff).expect("vacuum is always representable")
    }

    /// Number state `|n₀⟩` or `|n₀, n₁⟩`.
    pub fn fock(occupation: &[usize], cutoff: FockCutoff) -> Result<Self> {
        let d = cutoff.dim();
        if occupation.iter().any(|&n| n >= d) {
            return Err(Error::InvalidParameter(format!("occupation {occupation:?} beyond cutoff {d}")));
        }
        let modes = occupation.len();
        let mut amplitudes = CVector::zeros(d.pow(modes as u32));
        let index = occupation.iter().fold(0, |acc, &n| acc * d + n);
        amplitudes[index] = C64::new(1.0, 0.0);
        Self::from_amplitudes(amplitudes, cutoff, modes)
    }

    /// Coherent state with truncated Poisson amplitudes, renormalized.
    pub fn coherent(alpha: C64, cutoff: FockCutoff) -> Self {
        let raw = coherent_amplitudes(alpha, cutoff.dim());
        let norm = raw.norm_squared();
        let mut state = Self { amplitudes: raw, cutoff, modes: 1, deficit: 1.0 - norm };
        state.amplitudes /= C64::from(norm.sqrt());
        state
    }

    /// Single-mode squeezed vacuum from the analytic even-photon amplitudes,
    /// renormalized over the cutoff.
    pub fn squeezed_vacuum(r: f64, theta: f64, cutoff: FockCutoff) -> Self {
        let d = cutoff.dim();
        let mut amplitudes = CVector::zeros(d);
        let t = r.tanh();
        let base = -C64::from_polar(1.0, theta) * t;
        let prefactor = r.cosh().powf(-0.5);
        for m in 0..d.div_ceil(2) {
            let n = 2 * m;
            // √((2m)!)/(2^m m!) in log space
            let ln_mag = 0.5 * ln_factorial(n) - (m as f64) * std::f64::consts::LN_2 - ln_factorial(m);
            amplitudes[n] = base.powu(m as u32) * (prefactor * ln_mag.exp());
        }
        let norm = amplitudes.norm_squared();
        amplitudes /= C64::from(norm.sqrt());
        Self { amplitudes, cutoff, modes: 1, deficit: 1.0 - norm }
    }

    /// `S(r)(|α⟩ ± |−α⟩)`, normalized, for real `α`.
    ///
    /// The cat superposition is formed from the parity-filtered coherent
    /// amplitudes, so small `α` odd cats do not suffer cancellation. The
    /// recorded deficit is the larger of the coherent truncation loss and the
    /// population left in the guard band after squeezing.
    pub fn squeezed_cat(alpha: f64, r: f64, parity: Parity, cutoff: FockCutoff) -> Result<Self> {
        if parity == Parity::Odd && alpha == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let d = cutoff.dim();
        let full = coherent_amplitudes(C64::new(alpha, 0.0), d);
        let coherent_loss = 1.0 - full.norm_squared();
        let mut amplitudes = CVector::from_fn(d, |n, _| if parity.contains(n) { full[n] } else { C64::new(0.0, 0.0) });
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        amplitudes /= C64::from(norm);
        if r != 0.0 {
            amplitudes = squeeze_vector(r, 0.0, cutoff, &amplitudes);
        }
        let mut state = Self { amplitudes, cutoff, modes: 1, deficit: 0.0 };
        state.normalize()?;
        state.deficit = coherent_loss.max(state.guard_population());
        Ok(state)
    }

    /// Tensor product `a ⊗ b` of two single-mode states.
    pub fn product(a: &PureState, b: &PureState) -> Result<Self> {
        if a.modes != 1 || b.modes != 1 {
            return Err(Error::Dimension("product needs two single-mode states".into()));
        }
        if a.cutoff != b.cutoff {
            return Err(Error::Dimension("product of states with different cutoffs".into()));
        }
        let d = a.cutoff.dim();
        let amplitudes = CVector::from_fn(d * d, |k, _| a.amplitudes[k / d] * b.amplitudes[k % d]);
        Ok(Self { amplitudes, cutoff: a.cutoff, modes: 2, deficit: a.deficit + b.deficit })
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff.dim()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Norm lost to the cutoff when this state was constructed.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub(crate) fn set_deficit(&mut self, deficit: f64) {
        self.deficit = deficit;
    }

    /// Fails with a truncation error if the recorded deficit exceeds `tolerance`.
    pub fn check_truncation(self, tolerance: f64) -> Result<Self> {
        if self.deficit > tolerance {
            Err(Error::Truncation { deficit: self.deficit, tolerance })
        } else {
            Ok(self)
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// Rescales to unit norm and returns the squared norm it had before.
    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_sqr();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.amplitudes /= C64::from(n2.sqrt());
        Ok(n2)
    }

    pub fn inner(&self, other: &PureState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// Two-mode amplitudes as a `dim × dim` matrix indexed `[n₀, n₁]`.
    pub fn as_matrix(&self) -> CMatrix {
        let d = self.dim();
        match self.modes {
            1 => CMatrix::from_column_slice(d, 1, self.amplitudes.as_slice()),
            _ => CMatrix::from_fn(d, d, |i, j| self.amplitudes[i * d + j]),
        }
    }

    pub fn from_matrix(matrix: &CMatrix, cutoff: FockCutoff) -> Result<Self> {
        let d = cutoff.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension("two-mode coefficient matrix has wrong shape".into()));
        }
        let amplitudes = CVector::from_fn(d * d, |k, _| matrix[(k / d, k % d)]);
        Self::from_amplitudes(amplitudes, cutoff, 2)
    }

    /// Photon-number distribution of a single-mode state, or the joint
    /// distribution flattened row-major for two modes.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        let d = self.dim();
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let n = if self.modes == 1 { k } else { k / d + k % d };
                n as f64 * c.norm_sqr()
            })
            .sum()
    }

    /// Population on levels of the wrong parity (total photon number for two modes).
    pub fn parity_leak(&self, parity: Parity) -> f64 {
        let d = self.dim();
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let n = if self.modes == 1 { *k } else { k / d + k % d };
                !parity.contains(n)
            })
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// Population within the guard band below the cutoff.
    pub fn guard_population(&self) -> f64 {
        let d = self.dim();
        let limit = d.saturating_sub(GUARD_BAND);
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                if self.modes == 1 {
                    *k >= limit
                } else {
                    k / d >= limit || k % d >= limit
                }
            })
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    pub fn density(&self) -> DensityMatrix {
        let matrix = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix { matrix, cutoff: self.cutoff, modes: self.modes, deficit: self.deficit }
    }

    /// Copies this single-mode state into a larger or smaller cutoff.
    pub fn resized(&self, cutoff: FockCutoff) -> Result<Self> {
        if self.modes != 1 {
            return Err(Error::Dimension("resizing is only defined for single-mode states".into()));
        }
        let d = cutoff.dim();
        let amplitudes = CVector::from_fn(d, |n, _| self.amplitudes.get(n).copied().unwrap_or_default());
        let mut state = Self { amplitudes, cutoff, modes: 1, deficit: self.deficit };
        let kept = state.normalize()?;
        state.deficit = self.deficit.max(1.0 - kept);
        Ok(state)
    }
}

/// Hermitian, trace-one density matrix over one or two truncated modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
    cutoff: FockCutoff,
    modes: usize,
    deficit: f64,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix, cutoff: FockCutoff, modes: usize) -> Result<Self> {
        let expected = cutoff.dim().pow(modes as u32);
        if matrix.nrows() != expected || matrix.ncols() != expected {
            return Err(Error::Dimension(format!(
                "{}x{} density matrix for {modes} mode(s) at cutoff {}",
                matrix.nrows(),
                matrix.ncols(),
                cutoff.dim()
            )));
        }
        Ok(Self { matrix, cutoff, modes, deficit: 0.0 })
    }

    pub fn vacuum(cutoff: FockCutoff) -> Self {
        PureState::vacuum(cutoff, 1).density()
    }

    /// Weighted mixture of pure states; the weights need not be normalized.
    pub fn mixture(components: &[(f64, PureState)]) -> Result<Self> {
        let first = components.first().ok_or(Error::ZeroNorm)?;
        let (cutoff, modes) = (first.1.cutoff(), first.1.modes());
        let n = first.1.amplitudes().len();
        let mut matrix = CMatrix::zeros(n, n);
        for (w, psi) in components {
            if psi.cutoff() != cutoff || psi.modes() != modes {
                return Err(Error::Dimension("mixture components disagree on shape".into()));
            }
            let v = psi.amplitudes();
            matrix += (v * v.adjoint()) * C64::from(*w);
        }
        let mut rho = Self { matrix, cutoff, modes, deficit: 0.0 };
        rho.normalize()?;
        Ok(rho)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff.dim()
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub(crate) fn set_deficit(&mut self, deficit: f64) {
        self.deficit = deficit;
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn normalize(&mut self) -> Result<f64> {
        let tr = self.trace();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.matrix /= C64::from(tr);
        Ok(tr)
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let diff = &self.matrix - self.matrix.adjoint();
        diff.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        let h = hermitian_part(&self.matrix);
        nalgebra::SymmetricEigen::new(h).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|c| c.re).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        let d = self.dim();
        self.photon_distribution()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let n = if self.modes == 1 { k } else { k / d + k % d };
                n as f64 * p
            })
            .sum()
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, psi: &PureState) -> f64 {
        let v = psi.amplitudes();
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }

    /// Reduced state of `keep` (0 or 1) for a two-mode density matrix.
    pub fn partial_trace(&self, keep: usize) -> Result<DensityMatrix> {
        if self.modes != 2 {
            return Err(Error::Dimension("partial trace needs a two-mode state".into()));
        }
        super::check_mode(keep, 2)?;
        let d = self.dim();
        let mut out = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    acc += if keep == 0 {
                        self.matrix[(i * d + k, j * d + k)]
                    } else {
                        self.matrix[(k * d + i, k * d + j)]
                    };
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix { matrix: out, cutoff: self.cutoff, modes: 1, deficit: self.deficit })
    }

    /// Eigen-decomposition into pure components with weight above `floor`.
    pub fn pure_components(&self, floor: f64) -> Vec<(f64, PureState)> {
        let eig = nalgebra::SymmetricEigen::new(hermitian_part(&self.matrix));
        let mut out = Vec::new();
        for (k, &w) in eig.eigenvalues.iter().enumerate() {
            if w > floor {
                let v = eig.eigenvectors.column(k).into_owned();
                let mut psi = PureState { amplitudes: v, cutoff: self.cutoff, modes: self.modes, deficit: self.deficit };
                if psi.normalize().is_ok() {
                    out.push((w, psi));
                }
            }
        }
        out
    }
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Unnormalized truncated coherent amplitudes `e^{−|α|²/2} αⁿ/√(n!)`.
pub(crate) fn coherent_amplitudes(alpha: C64, dim: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    let mag = alpha.norm();
    if mag == 0.0 {
        v[0] = C64::new(1.0, 0.0);
        return v;
    }
    let phase = alpha / mag;
    let ln_mag = mag.ln();
    for n in 0..dim {
        let ln_amp = -0.5 * mag * mag + n as f64 * ln_mag - 0.5 * ln_factorial(n);
        v[n] = phase.powu(n as u32) * ln_amp.exp();
    }
    v
}

pub(crate) fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}
