//! Trains the reduced profile and evaluates the result.
//!
//! `cargo run --release --example train -- [steps] [seed] [out_dir]`

use std::path::PathBuf;

use loopcat::env::EnvConfig;
use loopcat::ppo::{evaluate, EvalConfig, PpoHyperparams, Trainer};

fn main() -> loopcat::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(300_000, |s| s.parse().expect("steps"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let out = args.next().map(PathBuf::from);
    let env = EnvConfig::reduced();
    let hp = PpoHyperparams { num_envs: 4, total_steps: steps, ..PpoHyperparams::default() };
    let mut t = Trainer::new(env, hp, seed)?;
    let start = std::time::Instant::now();
    t.train(out.as_deref(), |p| {
        if p.global_step % 10_240 < 512 {
            println!(
                "{:>8} reward {:.4} best F {:.4} entropy {:.3} kl {:.4} ({:.0}s)",
                p.global_step,
                p.mean_reward,
                p.mean_fidelity,
                p.entropy,
                p.approx_kl,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    let cfg = EvalConfig { episodes_per_seed: 100, seeds: vec![0, 1, 2], ..EvalConfig::default() };
    let (rep, records, _) = evaluate(&t.policy, &env, &cfg)?;
    println!("success {:.3}  mean best F {:.4}  low-tau end {:.3}  reset {:.3}", rep.success_rate, rep.mean_best_fidelity, rep.ends_with_low_tau, rep.with_reset);
    println!("labels {:?}", rep.labels);
    for rec in records.iter().take(6) {
        let steps: Vec<String> = rec.steps.iter().map(|s| format!("({:.2},{:.3},{})", s.r, s.tau, s.n)).collect();
        println!("F {:.3} {}", rec.best_fidelity, steps.join(" "));
    }
    Ok(())
}
