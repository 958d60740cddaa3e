//! Steps the loop environment by hand with a fixed schedule and prints what the detector saw.
//!
//! `cargo run --release --example loop_episode -- [seed]`

use loopcat::env::{Action, EnvConfig, LoopEnv};

fn main() -> loopcat::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let mut env = LoopEnv::new(EnvConfig { seed, ..EnvConfig::reduced() })?;
    env.reset();
    // a few generous couplings, then tau = 0 to hold whatever was built
    let schedule = [(-0.8, 0.37), (0.8, 0.37), (-0.8, 0.37), (0.0, 0.0)];
    for (k, &(r, tau)) in schedule.iter().enumerate() {
        let out = env.step(Action::new(r, tau))?;
        println!(
            "step {k}: r {r:.2} tau {tau:.2} -> n = {} (p = {:.3}), F = {:.4}, reward {:.4}{}",
            out.info.n,
            out.info.probability,
            out.info.fidelity,
            out.reward,
            if out.done { ", done" } else { "" }
        );
        if out.done {
            break;
        }
    }
    let rec = env.record();
    println!("label {:?}, photons {}, resets {}", rec.label, rec.total_photons, rec.resets());
    Ok(())
}
