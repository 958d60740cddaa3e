//! Truncated Fock-space representation of one- and two-mode bosonic states.
//!
//! Conventions used throughout the crate:
//!
//! - `ħ = 1`, `q = (a + a†)/√2`, `p = (a − a†)/(i√2)`, vacuum quadrature variance ½.
//! - Squeezing `S(r, θ) = exp[(r/2)(e^{−iθ} a² − e^{iθ} a†²)]`; `r > 0` squeezes `q`.
//! - Phase rotation `R(θ) = exp(−iθ n̂)`; `R(π/2)` is the Fourier transform.
//! - Beamsplitter `B(τ) = exp[θ (a†b − a b†)]` with `cos θ = τ` the field
//!   transmission. At `τ = 1` both modes pass straight through.
//! - Two-mode amplitudes are stored row-major over `(n₀, n₁)`: index `n₀·dim + n₁`.

mod channel;
mod fidelity;
mod gate;
mod gkp;
pub mod io;
mod measure;
mod state;
mod wigner;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use channel::{loss_channel, loss_channel_mode, loss_kraus};
pub use fidelity::{fidelity, fidelity_pure, fidelity_pure_mixed};
pub use gate::{
    apply_gate, apply_gate_density, apply_matrix, build_beamsplitter, build_cz, build_rotation, build_squeeze,
    GateKind, GateMatrix,
};
pub use gkp::{db_to_delta, db_to_r, gkp_state, GkpLogical};
pub use measure::{
    hermite_functions, homodyne_density_grid, homodyne_marginal, homodyne_project, homodyne_sample,
    pnr_distribution, pnr_project, pnr_project_density, pnr_sample, sample_weighted, HomodyneGrid,
    PROBABILITY_FLOOR,
};
pub use state::{DensityMatrix, Parity, PureState};
pub use wigner::{wigner, wigner_iterative, WignerGrid};

pub type C64 = Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Photon numbers this close to the cutoff are considered truncation-polluted.
pub const GUARD_BAND: usize = 5;

/// Number of Fock levels kept per mode; photon numbers run `0..dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub const DEFAULT: FockCutoff = FockCutoff(30);

    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidCutoff(dim));
        }
        Ok(Self(dim))
    }

    #[inline]
    pub fn dim(self) -> usize {
        self.0
    }

    /// Highest total photon number for which truncated gates are trusted.
    pub fn guarded(self) -> usize {
        self.0.saturating_sub(GUARD_BAND)
    }
}

impl Default for FockCutoff {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl TryFrom<usize> for FockCutoff {
    type Error = Error;
    fn try_from(value: usize) -> Result<Self> {
        Self::new(value)
    }
}

impl From<FockCutoff> for usize {
    fn from(value: FockCutoff) -> usize {
        value.0
    }
}

/// Annihilation operator truncated to `dim` levels.
pub fn annihilation(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { (j as f64).sqrt() } else { 0.0 })
}

/// Position quadrature `(a + a†)/√2` truncated to `dim` levels.
pub fn position(dim: usize) -> DMatrix<f64> {
    let a = annihilation(dim);
    (&a + a.transpose()) / std::f64::consts::SQRT_2
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

pub(crate) fn check_mode(mode: usize, modes: usize) -> Result<()> {
    if mode >= modes {
        Err(Error::ModeOutOfRange { mode, modes })
    } else {
        Ok(())
    }
}
