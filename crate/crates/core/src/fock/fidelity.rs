use nalgebra::SymmetricEigen;

use super::state::hermitian_part;
use super::{CMatrix, DensityMatrix, PureState};
use crate::error::{Error, Result};

const PSD_TOLERANCE: f64 = 1e-8;

/// `|⟨a|b⟩|²`.
pub fn fidelity_pure(a: &PureState, b: &PureState) -> f64 {
    a.inner(b).norm_sqr().min(1.0)
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity_pure_mixed(psi: &PureState, rho: &DensityMatrix) -> f64 {
    rho.expectation(psi).clamp(0.0, 1.0)
}

/// Eigenvalues below this are treated as numerical noise.
const SPECTRAL_FLOOR: f64 = 1e-15;

/// Uhlmann fidelity `(Tr √(√ρ₁ ρ₂ √ρ₁))²`.
///
/// `√ρ₁` is only needed on the support of `ρ₁`, so the inner matrix is formed
/// in the eigenbasis of `ρ₁` restricted to eigenvalues above the noise floor.
/// For a pure `ρ₁` this reduces exactly to `⟨ψ|ρ₂|ψ⟩`.
pub fn fidelity(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.cutoff() != rho2.cutoff() || rho1.modes() != rho2.modes() {
        return Err(Error::Dimension("fidelity of states with different shapes".into()));
    }
    for rho in [rho1, rho2] {
        let low = rho.min_eigenvalue();
        if low < -PSD_TOLERANCE {
            return Err(Error::NotPositive(low));
        }
    }
    let eig = SymmetricEigen::new(hermitian_part(rho1.matrix()));
    let support: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > SPECTRAL_FLOOR).collect();
    if support.is_empty() {
        return Err(Error::ZeroNorm);
    }
    let k = support.len();
    let basis = CMatrix::from_fn(eig.eigenvectors.nrows(), k, |r, c| eig.eigenvectors[(r, support[c])] * eig.eigenvalues[support[c]].sqrt());
    let inner = basis.adjoint() * rho2.matrix() * &basis;
    let tr: f64 = if k == 1 {
        inner[(0, 0)].re.max(0.0).sqrt()
    } else {
        let vals = SymmetricEigen::new(hermitian_part(&inner)).eigenvalues;
        vals.iter().map(|&l| if l > SPECTRAL_FLOOR { l.sqrt() } else { 0.0 }).sum()
    };
    Ok((tr * tr).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{loss_channel, FockCutoff, C64};
    use approx::assert_abs_diff_eq;

    #[test]
    fn mixed_formula_reduces_to_overlap() {
        let c = FockCutoff::new(10).unwrap();
        let a = PureState::coherent(C64::new(0.4, 0.2), c);
        let b = PureState::squeezed_vacuum(0.3, 0.5, c);
        let direct = fidelity_pure(&a, &b);
        assert_abs_diff_eq!(fidelity(&a.density(), &b.density()).unwrap(), direct, epsilon = 1e-10);
        assert_abs_diff_eq!(fidelity_pure_mixed(&a, &b.density()), direct, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_for_mixed_states() {
        let c = FockCutoff::new(10).unwrap();
        let a = loss_channel(&PureState::coherent(C64::new(1.0, 0.0), c).density(), 0.6).unwrap();
        let b = loss_channel(&PureState::squeezed_vacuum(0.4, 0.0, c).density(), 0.8).unwrap();
        assert_abs_diff_eq!(fidelity(&a, &b).unwrap(), fidelity(&b, &a).unwrap(), epsilon = 1e-9);
    }
}
