use nalgebra::DMatrix;

use super::state::real_to_complex;
use super::{check_mode, ln_factorial, CMatrix, DensityMatrix, FockCutoff};
use crate::error::{Error, Result};

/// Trace lost to the Kraus sum before it is cut off.
const KRAUS_TOLERANCE: f64 = 1e-12;

/// Pure-loss Kraus operator `K_k = √((1−η)^k/k!) η^{n̂/2} a^k`.
///
/// `⟨m|K_k|m+k⟩ = √C(m+k, k) η^{m/2} (1−η)^{k/2}`.
pub fn loss_kraus(eta: f64, k: usize, cutoff: FockCutoff) -> Result<DMatrix<f64>> {
    check_eta(eta)?;
    let d = cutoff.dim();
    let mut kraus = DMatrix::zeros(d, d);
    for m in 0..d.saturating_sub(k) {
        let ln_binom = ln_factorial(m + k) - ln_factorial(m) - ln_factorial(k);
        let value = if eta == 0.0 {
            if m == 0 {
                1.0
            } else {
                0.0
            }
        } else if eta == 1.0 {
            if k == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            (0.5 * ln_binom + 0.5 * m as f64 * eta.ln() + 0.5 * k as f64 * (1.0 - eta).ln()).exp()
        };
        kraus[(m, m + k)] = value;
    }
    Ok(kraus)
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("transmissivity {eta} outside [0, 1]")));
    }
    Ok(())
}

fn kraus_set(eta: f64, cutoff: FockCutoff) -> Result<Vec<CMatrix>> {
    let d = cutoff.dim();
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        out.push(real_to_complex(&loss_kraus(eta, k, cutoff)?));
        if eta == 1.0 {
            break;
        }
    }
    Ok(out)
}

/// Applies pure loss to a single-mode density matrix.
pub fn loss_channel(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    check_eta(eta)?;
    if rho.modes() != 1 {
        return Err(Error::Dimension("use loss_channel_mode for two-mode states".into()));
    }
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    let original = rho.trace();
    let mut out = CMatrix::zeros(rho.dim(), rho.dim());
    for k in kraus_set(eta, rho.cutoff())? {
        out += &k * rho.matrix() * k.adjoint();
        let tr: f64 = out.diagonal().iter().map(|c| c.re).sum();
        if (original - tr).abs() < KRAUS_TOLERANCE {
            break;
        }
    }
    let mut result = DensityMatrix::new(out, rho.cutoff(), 1)?;
    result.set_deficit(rho.deficit());
    Ok(result)
}

/// Applies pure loss to one mode of a two-mode density matrix.
pub fn loss_channel_mode(rho: &DensityMatrix, eta: f64, mode: usize) -> Result<DensityMatrix> {
    check_eta(eta)?;
    if rho.modes() != 2 {
        return Err(Error::Dimension("loss_channel_mode needs a two-mode state".into()));
    }
    check_mode(mode, 2)?;
    if eta == 1.0 {
        return Ok(rho.clone());
    }
    let d = rho.dim();
    let id = CMatrix::identity(d, d);
    let original = rho.trace();
    let mut out = CMatrix::zeros(d * d, d * d);
    for k in kraus_set(eta, rho.cutoff())? {
        let full = if mode == 0 { k.kronecker(&id) } else { id.kronecker(&k) };
        out += &full * rho.matrix() * full.adjoint();
        let tr: f64 = out.diagonal().iter().map(|c| c.re).sum();
        if (original - tr).abs() < KRAUS_TOLERANCE {
            break;
        }
    }
    let mut result = DensityMatrix::new(out, rho.cutoff(), 2)?;
    result.set_deficit(rho.deficit());
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{PureState, C64};
    use approx::assert_abs_diff_eq;

    fn cut(d: usize) -> FockCutoff {
        FockCutoff::new(d).unwrap()
    }

    #[test]
    fn identity_and_total_loss() {
        let c = cut(12);
        let rho = PureState::coherent(C64::new(1.1, 0.4), c).density();
        let same = loss_channel(&rho, 1.0).unwrap();
        assert_eq!(same.matrix(), rho.matrix());
        let gone = loss_channel(&rho, 0.0).unwrap();
        assert_abs_diff_eq!(gone.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gone.mean_photon_number(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_photon_number_scales_by_eta() {
        let c = cut(20);
        let rho = PureState::coherent(C64::new(1.3, 0.0), c).density();
        let out = loss_channel(&rho, 0.7).unwrap();
        assert_abs_diff_eq!(out.mean_photon_number(), 0.7 * rho.mean_photon_number(), epsilon = 1e-10);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn coherent_stays_coherent() {
        // pure loss maps |α⟩ to |√η α⟩
        let c = cut(24);
        let rho = PureState::coherent(C64::new(1.5, 0.0), c).density();
        let out = loss_channel(&rho, 0.64).unwrap();
        let expect = PureState::coherent(C64::new(1.2, 0.0), c);
        assert_abs_diff_eq!(out.expectation(&expect), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn kraus_completeness() {
        let c = cut(8);
        let mut sum = DMatrix::<f64>::zeros(8, 8);
        for k in 0..8 {
            let kr = loss_kraus(0.3, k, c).unwrap();
            sum += kr.transpose() * kr;
        }
        for i in 0..8 {
            for j in 0..8 {
                assert_abs_diff_eq!(sum[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_mode_loss_matches_single_mode_on_marginal() {
        let c = cut(8);
        let a = PureState::coherent(C64::new(0.8, 0.0), c);
        let b = PureState::fock(&[2], c).unwrap();
        let rho = PureState::product(&a, &b).unwrap().density();
        let out = loss_channel_mode(&rho, 0.5, 1).unwrap();
        let marginal = out.partial_trace(1).unwrap();
        let direct = loss_channel(&b.density(), 0.5).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(marginal.matrix()[(i, i)].re, direct.matrix()[(i, i)].re, epsilon = 1e-12);
        }
        assert!(loss_channel(&rho, 1.5).is_err());
    }
}
