//! How fast photon loss washes out an odd squeezed cat.
//!
//! `cargo run --release --example loss`

use loopcat::fock::{fidelity, loss_channel, FockCutoff, Parity, PureState};

fn main() -> loopcat::Result<()> {
    let c = FockCutoff::new(40)?;
    let cat = PureState::squeezed_cat(2.0, 1.38, Parity::Odd, c)?;
    let rho = cat.density();
    println!("{:>6} {:>8} {:>8}", "eta", "F", "trace");
    for k in 0..=10 {
        // eta is the transmissivity
        let eta = 1.0 - 0.02 * k as f64;
        let lossy = loss_channel(&rho, eta)?;
        println!("{eta:>6.2} {:>8.4} {:>8.5}", fidelity(&lossy, &rho)?, lossy.trace());
    }
    Ok(())
}
