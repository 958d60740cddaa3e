//! Breeding invariants at the bundled two-round operating point.

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use loopcat::breeding::{breed_cats, fail_mode_probability, BreedingConfig, HomodyneMode, Pipeline, TWO_ROUND_DESCRIPTOR};
use loopcat::fock::{fidelity_pure, gkp_state, wigner, DensityMatrix, GkpLogical, Parity, PureState, WignerGrid};
use loopcat::onestep::OneStepConfig;
use nalgebra::DMatrix;

fn two_round() -> (Pipeline, loopcat::breeding::PipelineOutput) {
    let p = Pipeline::from_toml(TWO_ROUND_DESCRIPTOR).unwrap();
    let out = p.run(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    (p, out)
}

/// Connected regions with `W < −floor` (4-neighbour), as lists of grid cells.
fn negative_regions(w: &DMatrix<f64>, floor: f64) -> Vec<Vec<(usize, usize)>> {
    let (nx, np) = w.shape();
    let mut seen = DMatrix::from_element(nx, np, false);
    let mut regions = Vec::new();
    for i in 0..nx {
        for j in 0..np {
            if seen[(i, j)] || w[(i, j)] >= -floor {
                continue;
            }
            let mut stack = vec![(i, j)];
            let mut cells = Vec::new();
            seen[(i, j)] = true;
            while let Some((a, b)) = stack.pop() {
                cells.push((a, b));
                let around = [(a.wrapping_sub(1), b), (a + 1, b), (a, b.wrapping_sub(1)), (a, b + 1)];
                for (x, y) in around {
                    if x < nx && y < np && !seen[(x, y)] && w[(x, y)] < -floor {
                        seen[(x, y)] = true;
                        stack.push((x, y));
                    }
                }
            }
            regions.push(cells);
        }
    }
    regions
}

/// Distinct centroid positions along one axis, merging centroids closer than `gap`.
fn distinct(mut xs: Vec<f64>, gap: f64) -> usize {
    xs.sort_by(f64::total_cmp);
    xs.windows(2).filter(|w| w[1] - w[0] > gap).count() + usize::from(!xs.is_empty())
}

/// Separate positions occupied by the negative blobs when projected onto
/// `q` and onto `p`. The grid of a rotated GKP state has no negativity on
/// the axes themselves, so blobs are counted by projection.
fn grid_signature(rho: &DensityMatrix) -> (usize, usize) {
    let grid = WignerGrid::square(6.0, 121);
    let w = wigner(rho, &grid).unwrap();
    let (xs, ps) = (grid.xs(), grid.ps());
    let regions = negative_regions(&w, 0.01);
    let centroid = |cells: &[(usize, usize)], axis: usize| {
        cells.iter().map(|&(i, j)| if axis == 0 { xs[i] } else { ps[j] }).sum::<f64>() / cells.len() as f64
    };
    let q: Vec<f64> = regions.iter().map(|r| centroid(r, 0)).collect();
    let p: Vec<f64> = regions.iter().map(|r| centroid(r, 1)).collect();
    (distinct(q, 0.3), distinct(p, 0.3))
}

#[test]
fn gkp_output_has_a_grid_of_negative_regions() {
    let (p, out) = two_round();
    // the ideal target passes the same check
    let target = gkp_state(GkpLogical::PlusI, 6.25, p.config.cutoff).unwrap();
    let (tq, tp) = grid_signature(&target.density());
    assert!(tq >= 3 && tp >= 3, "target: {tq} along q, {tp} along p");
    let (q, p) = grid_signature(&out.states["gkp"].state.density());
    assert!(q >= 3 && p >= 3, "negative regions: {q} along q, {p} along p");
}

#[test]
fn central_outcome_is_mirror_symmetric() {
    let (_, out) = two_round();
    let rho = out.states["cat"].state.density();
    let grid = WignerGrid::square(5.0, 41);
    let w = wigner(&rho, &grid).unwrap();
    let n = grid.nx;
    for i in 0..n {
        for j in 0..grid.np {
            assert_abs_diff_eq!(w[(i, j)], w[(n - 1 - i, j)], epsilon = 1e-6);
        }
    }
}

#[test]
fn fail_modes_are_deterministic_and_degenerate_at_tau_zero() {
    let cfg = OneStepConfig::default();
    let a = fail_mode_probability(0.146f64.sqrt(), &cfg).unwrap();
    let b = fail_mode_probability(0.146f64.sqrt(), &cfg).unwrap();
    assert_eq!(a, b);
    // at τ = 0 the detector sees the injected state; with no squeezing it is vacuum
    let vac = OneStepConfig { input_r: 0.0, ..cfg };
    let f = fail_mode_probability(0.0, &vac).unwrap();
    assert_abs_diff_eq!(f.p0, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(f.p_3plus_zeros, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(f.p_2zeros_with_one, 0.0, epsilon = 1e-12);
}

/// Feed-forward quality check: the corrected mode should stay within 0.05
/// of the post-selected fidelity. With displacement-only correction it does
/// not; see the decisions ledger.
#[test]
fn corrected_mode_tracks_post_selection() {
    let (p, out) = two_round();
    let target = PureState::squeezed_cat(2.40, 1.62, Parity::Odd, p.config.cutoff).unwrap();
    let post = fidelity_pure(&target, &out.states["cat"].state);
    let cfg = BreedingConfig { mode: HomodyneMode::Corrected, ..p.config };
    let (a, b) = (&out.states["a"].state, &out.states["b"].state);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let samples = 200;
    let mean = (0..samples).map(|_| fidelity_pure(&target, &breed_cats(a, b, &cfg, &mut rng).unwrap().state)).sum::<f64>() / samples as f64;
    assert!((mean - post).abs() <= 0.05, "corrected mean {mean:.4} vs post-selected {post:.4}");
}
