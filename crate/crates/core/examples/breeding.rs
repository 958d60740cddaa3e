//! Runs the bundled two-round breeding pipeline and the fail-mode calculator.
//!
//! `cargo run --release --example breeding [corrected-samples]`

use loopcat::breeding::{breed_cats, fail_mode_probability, HomodyneMode, Pipeline, TWO_ROUND_DESCRIPTOR};
use loopcat::fock::{fidelity_pure, Parity, PureState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> loopcat::Result<()> {
    let samples: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let pipeline = Pipeline::from_toml(TWO_ROUND_DESCRIPTOR)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = std::time::Instant::now();
    let out = pipeline.run(&mut rng)?;
    for r in &out.reports {
        println!(
            "{:>4} {:<10} p={:?} acc={:?} F={:?} F(x=0)={:?} <n>={:.3}",
            r.name, r.kind, r.probability, r.acceptance, r.fidelity, r.fidelity_central, r.mean_photon_number
        );
    }
    println!("pipeline took {:.1?}", t.elapsed());

    let cfg = &pipeline.config;
    let f = fail_mode_probability(cfg.tau2.sqrt(), &cfg.one_step().with_cutoff(30)?)?;
    println!("p0 = {:.4}, p1 = {:.4}", f.p0, f.p1);
    println!("P(>=3 zeros) = {:.4}, P(2 zeros, >=1 one) = {:.4}", f.p_3plus_zeros, f.p_2zeros_with_one);
    println!("p0^3 = {:.4}, p0^2 p1 = {:.4}", f.pattern_3_zeros, f.pattern_2zeros_one);

    if samples > 0 {
        let target = PureState::squeezed_cat(2.40, 1.62, Parity::Odd, cfg.cutoff)?;
        let corrected = loopcat::breeding::BreedingConfig { mode: HomodyneMode::Corrected, ..*cfg };
        let (a, b) = (&out.states["a"].state, &out.states["b"].state);
        let mut total = 0.0;
        for _ in 0..samples {
            total += fidelity_pure(&target, &breed_cats(a, b, &corrected, &mut rng)?.state);
        }
        println!("corrected mode: mean fidelity {:.4} over {samples} outcomes", total / samples as f64);
    }
    Ok(())
}
