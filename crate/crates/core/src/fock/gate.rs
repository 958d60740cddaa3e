use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::state::{hermitian_part, real_to_complex};
use super::{annihilation, check_mode, position, DensityMatrix, FockCutoff, PureState, CMatrix, CVector, C64};
use crate::error::{Error, Result};

/// Which gate a [`GateMatrix`] implements, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum GateKind {
    Squeeze { r: f64, theta: f64 },
    Rotate { theta: f64 },
    BeamSplitter { tau: f64 },
    Cz { gain: f64 },
}

#[derive(Debug, Clone)]
enum Repr {
    Dense(CMatrix),
    Diagonal(CVector),
    /// Real blocks acting on fixed sets of flattened two-mode indices.
    Blocks(Vec<Block>),
    /// `(V⊗V) diag(phases) (V⊗V)ᵀ` with `V` the eigenbasis of `q`.
    Factored { basis: DMatrix<f64>, phases: CMatrix },
}

#[derive(Debug, Clone)]
struct Block {
    indices: Vec<usize>,
    matrix: DMatrix<f64>,
}

/// A truncated one- or two-mode unitary.
#[derive(Debug, Clone)]
pub struct GateMatrix {
    kind: GateKind,
    cutoff: FockCutoff,
    modes: usize,
    repr: Repr,
}

impl GateMatrix {
    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    fn size(&self) -> usize {
        self.cutoff.dim().pow(self.modes as u32)
    }

    /// Dense matrix over the full truncated space.
    pub fn matrix(&self) -> CMatrix {
        let n = self.size();
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Diagonal(d) => CMatrix::from_diagonal(d),
            Repr::Blocks(blocks) => {
                let mut m = CMatrix::zeros(n, n);
                for b in blocks {
                    for (r, &i) in b.indices.iter().enumerate() {
                        for (c, &j) in b.indices.iter().enumerate() {
                            m[(i, j)] = C64::new(b.matrix[(r, c)], 0.0);
                        }
                    }
                }
                m
            }
            Repr::Factored { basis, phases } => {
                let d = self.cutoff.dim();
                let vv = basis.kronecker(basis);
                let diag = CVector::from_fn(d * d, |k, _| phases[(k / d, k % d)]);
                let vvc = real_to_complex(&vv);
                &vvc * CMatrix::from_diagonal(&diag) * vvc.transpose()
            }
        }
    }

    /// `max |U†U − I|` over basis states whose total photon number is at most `limit`.
    pub fn unitarity_error(&self, limit: usize) -> f64 {
        let u = self.matrix();
        let d = self.cutoff.dim();
        let keep: Vec<usize> = (0..self.size())
            .filter(|&k| {
                let n = if self.modes == 1 { k } else { k / d + k % d };
                n <= limit
            })
            .collect();
        let mut worst: f64 = 0.0;
        for &i in &keep {
            for &j in &keep {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..u.nrows() {
                    acc += u[(k, i)].conj() * u[(k, j)];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).norm());
            }
        }
        worst
    }

    fn apply_single(&self, v: &CVector) -> CVector {
        match &self.repr {
            Repr::Dense(m) => m * v,
            Repr::Diagonal(d) => v.component_mul(d),
            _ => unreachable!("single-mode gates are dense or diagonal"),
        }
    }

    /// Applies a two-mode gate to the coefficient matrix `Ψ[n₀, n₁]`.
    fn apply_pair(&self, psi: &CMatrix) -> CMatrix {
        let d = self.cutoff.dim();
        match &self.repr {
            Repr::Blocks(blocks) => {
                let mut out = CMatrix::zeros(d, d);
                for b in blocks {
                    for (r, &i) in b.indices.iter().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for (c, &j) in b.indices.iter().enumerate() {
                            acc += psi[(j / d, j % d)] * b.matrix[(r, c)];
                        }
                        out[(i / d, i % d)] = acc;
                    }
                }
                out
            }
            Repr::Factored { basis, phases } => {
                let v = real_to_complex(basis);
                let eig = v.transpose() * psi * &v;
                let rotated = eig.component_mul(phases);
                &v * rotated * v.transpose()
            }
            Repr::Dense(m) => {
                let flat = CVector::from_fn(d * d, |k, _| psi[(k / d, k % d)]);
                let out = m * flat;
                CMatrix::from_fn(d, d, |i, j| out[i * d + j])
            }
            Repr::Diagonal(_) => unreachable!("diagonal gates are single-mode"),
        }
    }
}

struct SqueezeKernel {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

/// Eigendecomposition of the Hermitian generator `i(a² − a†²)/2`, cached per cutoff.
fn squeeze_kernel(dim: usize) -> Arc<SqueezeKernel> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SqueezeKernel>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(k) = cache.lock().expect("squeeze cache poisoned").get(&dim) {
        return Arc::clone(k);
    }
    let a = annihilation(dim);
    let a2 = &a * &a;
    let generator = (&a2 - a2.transpose()) * 0.5;
    let hermitian = generator.map(|x| C64::new(0.0, x));
    let eig = SymmetricEigen::new(hermitian_part(&hermitian));
    let kernel = Arc::new(SqueezeKernel { eigenvalues: eig.eigenvalues.iter().copied().collect(), eigenvectors: eig.eigenvectors });
    cache.lock().expect("squeeze cache poisoned").insert(dim, Arc::clone(&kernel));
    kernel
}

fn rotation_phases(theta: f64, dim: usize) -> CVector {
    CVector::from_fn(dim, |n, _| C64::from_polar(1.0, -theta * n as f64))
}

/// `S(r, θ)|v⟩` without forming the dense squeeze matrix.
pub(crate) fn squeeze_vector(r: f64, theta: f64, cutoff: FockCutoff, v: &CVector) -> CVector {
    let dim = cutoff.dim();
    let k = squeeze_kernel(dim);
    // S(r, θ) = R(−θ/2) S(r) R(θ/2)
    let pre = if theta != 0.0 { v.component_mul(&rotation_phases(theta / 2.0, dim)) } else { v.clone() };
    let mut coeffs = k.eigenvectors.adjoint() * pre;
    for (c, &lam) in coeffs.iter_mut().zip(&k.eigenvalues) {
        *c *= C64::from_polar(1.0, -r * lam);
    }
    let out = &k.eigenvectors * coeffs;
    if theta != 0.0 {
        out.component_mul(&rotation_phases(-theta / 2.0, dim))
    } else {
        out
    }
}

pub fn build_squeeze(r: f64, theta: f64, cutoff: FockCutoff) -> GateMatrix {
    let dim = cutoff.dim();
    let k = squeeze_kernel(dim);
    let phases = CVector::from_iterator(dim, k.eigenvalues.iter().map(|&lam| C64::from_polar(1.0, -r * lam)));
    let mut m = &k.eigenvectors * CMatrix::from_diagonal(&phases) * k.eigenvectors.adjoint();
    if theta != 0.0 {
        let left = CMatrix::from_diagonal(&rotation_phases(-theta / 2.0, dim));
        let right = CMatrix::from_diagonal(&rotation_phases(theta / 2.0, dim));
        m = left * m * right;
    }
    GateMatrix { kind: GateKind::Squeeze { r, theta }, cutoff, modes: 1, repr: Repr::Dense(m) }
}

pub fn build_rotation(theta: f64, cutoff: FockCutoff) -> GateMatrix {
    GateMatrix {
        kind: GateKind::Rotate { theta },
        cutoff,
        modes: 1,
        repr: Repr::Diagonal(rotation_phases(theta, cutoff.dim())),
    }
}

/// Two-mode beamsplitter of field transmission `tau`, exponentiated block by
/// block over total photon number. `tau = 0` and `tau = 1` are exact on
/// every block.
pub fn build_beamsplitter(tau: f64, cutoff: FockCutoff) -> Result<GateMatrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("beamsplitter transmission {tau} outside [0, 1]")));
    }
    let theta = tau.acos();
    let d = cutoff.dim();
    let mut blocks = Vec::with_capacity(2 * d - 1);
    for total in 0..=(2 * d - 2) {
        let lo = total.saturating_sub(d - 1);
        let hi = total.min(d - 1);
        let states: Vec<usize> = (lo..=hi).collect(); // photon number in mode 0
        let m = states.len();
        let mut generator = DMatrix::<f64>::zeros(m, m);
        for (col, &i) in states.iter().enumerate() {
            let j = total - i;
            // a†b |i, j⟩ = √((i+1) j) |i+1, j−1⟩
            if col + 1 < m {
                generator[(col + 1, col)] += ((i + 1) as f64 * j as f64).sqrt();
            }
            // a b† |i, j⟩ = √(i (j+1)) |i−1, j+1⟩
            if col > 0 {
                generator[(col - 1, col)] -= (i as f64 * (j + 1) as f64).sqrt();
            }
        }
        let matrix = if theta == 0.0 {
            DMatrix::identity(m, m)
        } else if tau == 0.0 {
            // exact swap |i, j⟩ → (−1)^i |j, i⟩; the truncated exponential is
            // only a swap on blocks that fit below the cutoff
            let mut p = DMatrix::zeros(m, m);
            for (col, &i) in states.iter().enumerate() {
                p[(total - i - lo, col)] = if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            p
        } else {
            (generator * theta).exp()
        };
        let indices = states.iter().map(|&i| i * d + (total - i)).collect();
        blocks.push(Block { indices, matrix });
    }
    Ok(GateMatrix { kind: GateKind::BeamSplitter { tau }, cutoff, modes: 2, repr: Repr::Blocks(blocks) })
}

/// `exp(i g q₀ q₁)` built from the eigenbasis of the truncated position operator.
pub fn build_cz(gain: f64, cutoff: FockCutoff) -> GateMatrix {
    let d = cutoff.dim();
    let eig = SymmetricEigen::new(position(d));
    let lam = eig.eigenvalues;
    let phases = CMatrix::from_fn(d, d, |i, j| C64::from_polar(1.0, gain * lam[i] * lam[j]));
    GateMatrix {
        kind: GateKind::Cz { gain },
        cutoff,
        modes: 2,
        repr: Repr::Factored { basis: eig.eigenvectors, phases },
    }
}

fn check_targets(state_modes: usize, gate: &GateMatrix, targets: &[usize]) -> Result<()> {
    if targets.len() != gate.modes {
        return Err(Error::Dimension(format!("{}-mode gate given {} targets", gate.modes, targets.len())));
    }
    for &t in targets {
        check_mode(t, state_modes)?;
    }
    if gate.modes == 2 && targets[0] == targets[1] {
        return Err(Error::InvalidParameter("two-mode gate needs distinct targets".into()));
    }
    Ok(())
}

/// `U|ψ⟩` on the chosen modes, renormalized; any norm change is added to the deficit.
pub fn apply_gate(state: &PureState, gate: &GateMatrix, targets: &[usize]) -> Result<PureState> {
    if state.cutoff() != gate.cutoff {
        return Err(Error::Dimension("gate and state cutoffs differ".into()));
    }
    check_targets(state.modes(), gate, targets)?;
    let out = match (gate.modes, state.modes()) {
        (1, 1) => gate.apply_single(state.amplitudes()),
        (1, 2) => {
            let psi = state.as_matrix();
            let m = match &gate.repr {
                Repr::Dense(u) if targets[0] == 0 => u * psi,
                Repr::Dense(u) => psi * u.transpose(),
                Repr::Diagonal(p) if targets[0] == 0 => CMatrix::from_diagonal(p) * psi,
                Repr::Diagonal(p) => psi * CMatrix::from_diagonal(p),
                _ => unreachable!("single-mode gates are dense or diagonal"),
            };
            PureState::from_matrix(&m, state.cutoff())?.into_amplitudes()
        }
        (2, 2) => {
            let psi = state.as_matrix();
            let m = if targets[0] == 0 {
                gate.apply_pair(&psi)
            } else {
                gate.apply_pair(&psi.transpose()).transpose()
            };
            PureState::from_matrix(&m, state.cutoff())?.into_amplitudes()
        }
        _ => return Err(Error::Dimension("two-mode gate on a single-mode state".into())),
    };
    let mut result = PureState::from_amplitudes(out, state.cutoff(), state.modes())?;
    let n2 = result.normalize()?;
    result.set_deficit(state.deficit() + (1.0 - n2).abs());
    Ok(result)
}

/// Applies an arbitrary real single-mode operator, e.g. a displacement.
pub fn apply_matrix(state: &PureState, m: &DMatrix<f64>) -> Result<PureState> {
    if state.modes() != 1 || m.nrows() != state.dim() || m.ncols() != state.dim() {
        return Err(Error::Dimension("operator does not match a single-mode state".into()));
    }
    let out = real_to_complex(m) * state.amplitudes();
    let mut result = PureState::from_amplitudes(out, state.cutoff(), 1)?;
    let n2 = result.normalize()?;
    result.set_deficit(state.deficit() + (1.0 - n2).abs());
    Ok(result)
}

/// `U ρ U†` on the chosen modes.
pub fn apply_gate_density(rho: &DensityMatrix, gate: &GateMatrix, targets: &[usize]) -> Result<DensityMatrix> {
    if rho.cutoff() != gate.cutoff {
        return Err(Error::Dimension("gate and state cutoffs differ".into()));
    }
    check_targets(rho.modes(), gate, targets)?;
    let d = rho.dim();
    let u = match (gate.modes, rho.modes()) {
        (1, 1) => gate.matrix(),
        (1, 2) => {
            let id = CMatrix::identity(d, d);
            if targets[0] == 0 {
                gate.matrix().kronecker(&id)
            } else {
                id.kronecker(&gate.matrix())
            }
        }
        (2, 2) => {
            let u = gate.matrix();
            if targets[0] == 0 {
                u
            } else {
                let swap = swap_matrix(d);
                &swap * u * &swap
            }
        }
        _ => return Err(Error::Dimension("two-mode gate on a single-mode state".into())),
    };
    let m = &u * rho.matrix() * u.adjoint();
    let mut out = DensityMatrix::new(m, rho.cutoff(), rho.modes())?;
    let tr = out.normalize()?;
    out.set_deficit(rho.deficit() + (1.0 - tr).abs());
    Ok(out)
}

fn swap_matrix(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(j * d + i, i * d + j)] = C64::new(1.0, 0.0);
        }
    }
    s
}
