use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ln_factorial, DensityMatrix, C64};
use crate::error::{Error, Result};

/// Rectangular phase-space grid; `W` is returned as an `nx × np` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl WignerGrid {
    pub fn square(extent: f64, points: usize) -> Self {
        Self { x_min: -extent, x_max: extent, nx: points, p_min: -extent, p_max: extent, np: points }
    }

    pub fn xs(&self) -> Vec<f64> {
        linspace(self.x_min, self.x_max, self.nx)
    }

    pub fn ps(&self) -> Vec<f64> {
        linspace(self.p_min, self.p_max, self.np)
    }

    pub fn cell_area(&self) -> f64 {
        let dx = if self.nx > 1 { (self.x_max - self.x_min) / (self.nx - 1) as f64 } else { 1.0 };
        let dp = if self.np > 1 { (self.p_max - self.p_min) / (self.np - 1) as f64 } else { 1.0 };
        dx * dp
    }

    fn check(&self) -> Result<()> {
        if self.nx == 0 || self.np == 0 {
            return Err(Error::InvalidParameter("empty Wigner grid".into()));
        }
        Ok(())
    }
}

impl Default for WignerGrid {
    fn default() -> Self {
        Self::square(6.0, 121)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|k| lo + k as f64 * h).collect()
}

/// Wigner function from the Laguerre expansion of `|m⟩⟨n|`.
///
/// For `m ≤ n`, `W_{|m⟩⟨n|}(x, p) = ((−1)^m/π) √(m!/n!) (√2(x+ip))^{n−m} e^{−(x²+p²)} L_m^{(n−m)}(2(x²+p²))`.
pub fn wigner(rho: &DensityMatrix, grid: &WignerGrid) -> Result<DMatrix<f64>> {
    if rho.modes() != 1 {
        return Err(Error::Dimension("Wigner function is single-mode only".into()));
    }
    grid.check()?;
    let d = rho.dim();
    let m = rho.matrix();
    // √(m!/n!) for every pair, m ≤ n
    let ratio = DMatrix::from_fn(d, d, |i, j| if i <= j { (0.5 * (ln_factorial(i) - ln_factorial(j))).exp() } else { 0.0 });
    let xs = grid.xs();
    let ps = grid.ps();
    let mut laguerre = vec![0.0; d];
    let mut out = DMatrix::zeros(grid.nx, grid.np);
    for (ix, &x) in xs.iter().enumerate() {
        for (ip, &p) in ps.iter().enumerate() {
            let r2 = x * x + p * p;
            let t = 2.0 * r2;
            let z = C64::new(x, p) * std::f64::consts::SQRT_2;
            let gauss = (-r2).exp() / std::f64::consts::PI;
            let mut total = 0.0;
            let mut zk = C64::new(1.0, 0.0);
            for k in 0..d {
                // L_m^{(k)}(t) for m = 0..d−k
                let len = d - k;
                let kf = k as f64;
                laguerre[0] = 1.0;
                if len > 1 {
                    laguerre[1] = 1.0 + kf - t;
                }
                for mm in 1..len.saturating_sub(1) {
                    let mf = mm as f64;
                    laguerre[mm + 1] = ((2.0 * mf + 1.0 + kf - t) * laguerre[mm] - (mf + kf) * laguerre[mm - 1]) / (mf + 1.0);
                }
                for mm in 0..len {
                    let n = mm + k;
                    let sign = if mm % 2 == 0 { 1.0 } else { -1.0 };
                    let w = zk * (sign * ratio[(mm, n)] * laguerre[mm]);
                    if k == 0 {
                        total += m[(mm, mm)].re * w.re;
                    } else {
                        total += 2.0 * (m[(mm, n)] * w).re;
                    }
                }
                zk *= z;
            }
            out[(ix, ip)] = gauss * total;
        }
    }
    Ok(out)
}

/// Ladder-recursion evaluation of the same Wigner function, used as an
/// independent cross-check of [`wigner`].
pub fn wigner_iterative(rho: &DensityMatrix, grid: &WignerGrid) -> Result<DMatrix<f64>> {
    if rho.modes() != 1 {
        return Err(Error::Dimension("Wigner function is single-mode only".into()));
    }
    grid.check()?;
    let d = rho.dim();
    let m = rho.matrix();
    let xs = grid.xs();
    let ps = grid.ps();
    let mut out = DMatrix::zeros(grid.nx, grid.np);
    let mut list = vec![C64::new(0.0, 0.0); d];
    for (ix, &x) in xs.iter().enumerate() {
        for (ip, &p) in ps.iter().enumerate() {
            let a = C64::new(x, p) * std::f64::consts::SQRT_2;
            list[0] = C64::new((-0.5 * a.norm_sqr()).exp() / std::f64::consts::PI, 0.0);
            let mut w = m[(0, 0)].re * list[0].re;
            for n in 1..d {
                list[n] = a * list[n - 1] / (n as f64).sqrt();
                w += 2.0 * (m[(0, n)] * list[n]).re;
            }
            for row in 1..d {
                let sr = (row as f64).sqrt();
                let mut temp = list[row];
                list[row] = (a.conj() * temp - list[row - 1] * sr) / sr;
                w += (m[(row, row)] * list[row]).re;
                for n in row + 1..d {
                    let next = (a * list[n - 1] - temp * sr) / (n as f64).sqrt();
                    temp = list[n];
                    list[n] = next;
                    w += 2.0 * (m[(row, n)] * list[n]).re;
                }
            }
            out[(ix, ip)] = w;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockCutoff, PureState};
    use approx::assert_abs_diff_eq;

    fn cut(d: usize) -> FockCutoff {
        FockCutoff::new(d).unwrap()
    }

    #[test]
    fn vacuum_peak_is_one_over_pi() {
        let grid = WignerGrid::square(0.0, 1);
        let w = wigner(&DensityMatrix::vacuum(cut(4)), &grid).unwrap();
        assert_abs_diff_eq!(w[(0, 0)], 1.0 / std::f64::consts::PI, epsilon = 1e-14);
    }

    #[test]
    fn single_photon_is_negative_at_origin() {
        let grid = WignerGrid::square(0.0, 1);
        let w = wigner(&PureState::fock(&[1], cut(4)).unwrap().density(), &grid).unwrap();
        assert_abs_diff_eq!(w[(0, 0)], -1.0 / std::f64::consts::PI, epsilon = 1e-14);
    }

    #[test]
    fn coherent_peak_sits_at_sqrt2_alpha() {
        // |α⟩ with α = 1 + 0.5i is centred at (√2·1, √2·0.5)
        let rho = PureState::coherent(C64::new(1.0, 0.5), cut(20)).density();
        let grid = WignerGrid { x_min: 2f64.sqrt(), x_max: 2f64.sqrt(), nx: 1, p_min: 0.5 * 2f64.sqrt(), p_max: 0.5 * 2f64.sqrt(), np: 1 };
        let w = wigner(&rho, &grid).unwrap();
        assert_abs_diff_eq!(w[(0, 0)], 1.0 / std::f64::consts::PI, epsilon = 1e-9);
    }

    #[test]
    fn laguerre_and_recursion_agree() {
        let c = cut(14);
        let a = PureState::coherent(C64::new(0.9, -0.6), c);
        let b = PureState::squeezed_vacuum(0.5, 1.0, c);
        let rho = crate::fock::DensityMatrix::mixture(&[(0.6, a), (0.4, b)]).unwrap();
        let grid = WignerGrid::square(3.0, 13);
        let w1 = wigner(&rho, &grid).unwrap();
        let w2 = wigner_iterative(&rho, &grid).unwrap();
        for (u, v) in w1.iter().zip(w2.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-10);
        }
    }

    #[test]
    fn integrates_to_one() {
        let rho = PureState::squeezed_cat(1.2, 0.3, crate::fock::Parity::Odd, cut(24)).unwrap().density();
        let grid = WignerGrid::square(7.0, 141);
        let w = wigner(&rho, &grid).unwrap();
        assert_abs_diff_eq!(w.sum() * grid.cell_area(), 1.0, epsilon = 1e-6);
    }
}
