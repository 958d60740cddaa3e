use serde::{Deserialize, Serialize};

use super::{hermite_functions, CVector, FockCutoff, HomodyneGrid, PureState, C64};
use crate::error::{Error, Result};

/// Square-lattice GKP logical states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GkpLogical {
    Zero,
    One,
    /// `(|0̄⟩ + i|1̄⟩)/√2`
    PlusI,
}

impl GkpLogical {
    fn weights(self) -> [C64; 2] {
        match self {
            GkpLogical::Zero => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            GkpLogical::One => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            GkpLogical::PlusI => [C64::new(1.0, 0.0), C64::new(0.0, 1.0)],
        }
    }
}

/// `Δ = 10^{−dB/20}`.
pub fn db_to_delta(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// `r = dB · ln 10 / 20`.
pub fn db_to_r(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}

/// Peaks whose envelope weight falls below this are dropped.
const PEAK_FLOOR: f64 = 1e-12;

/// Finite-energy GKP state: squeezed peaks at `q_k = (2k+μ)√π` with width `Δ`
/// and envelope weight `e^{−Δ² q_k²/2}`, projected onto the Fock basis.
pub fn gkp_state(logical: GkpLogical, squeezing_db: f64, cutoff: FockCutoff) -> Result<PureState> {
    if !(squeezing_db > 0.0) || !squeezing_db.is_finite() {
        return Err(Error::InvalidParameter(format!("squeezing {squeezing_db} dB must be positive")));
    }
    let delta = db_to_delta(squeezing_db);
    let d2 = delta * delta;
    let spacing = std::f64::consts::PI.sqrt();
    let k_max = ((2.0 * -PEAK_FLOOR.ln()).sqrt() / delta / spacing).ceil() as i64 + 1;
    let extent = (2 * k_max + 2) as f64 * spacing;
    // grid step well below the peak width
    let points = ((2.0 * extent) / (delta / 40.0)).ceil() as usize + 1;
    let grid = HomodyneGrid { min: -extent, max: extent, points };
    let xs = grid.values();
    let weights = logical.weights();
    let mut psi = vec![C64::new(0.0, 0.0); xs.len()];
    for (mu, w) in weights.iter().enumerate() {
        if w.norm() == 0.0 {
            continue;
        }
        for k in -k_max..=k_max {
            let qk = (2 * k + mu as i64) as f64 * spacing;
            let env = (-d2 * qk * qk / 2.0).exp();
            if env < PEAK_FLOOR {
                continue;
            }
            for (v, &x) in psi.iter_mut().zip(&xs) {
                let dx = x - qk;
                let g = (-dx * dx / (2.0 * d2)).exp();
                if g > 0.0 {
                    *v += w * (env * g);
                }
            }
        }
    }
    let h = hermite_functions(cutoff.dim(), &xs);
    let step = grid.step();
    let continuum_norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>() * step;
    let amplitudes = CVector::from_fn(cutoff.dim(), |n, _| {
        let mut acc = C64::new(0.0, 0.0);
        for (j, v) in psi.iter().enumerate() {
            acc += v * h[(n, j)];
        }
        acc * step / continuum_norm.sqrt()
    });
    let mut state = PureState::from_amplitudes(amplitudes, cutoff, 1)?;
    let kept = state.normalize()?;
    state.set_deficit((1.0 - kept).max(0.0));
    Ok(state)
}
