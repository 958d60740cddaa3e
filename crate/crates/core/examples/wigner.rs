//! Wigner functions of a squeezed cat and a GKP state, written as PNGs.
//!
//! `cargo run --release --example wigner -- [out_dir]`

use std::path::PathBuf;

use loopcat::fock::{gkp_state, wigner, FockCutoff, GkpLogical, Parity, PureState, WignerGrid};
use loopcat::plot::wigner_chart;

fn main() -> loopcat::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("runs/wigner"), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    let c = FockCutoff::new(60)?;
    let grid = WignerGrid::square(12.0, 241);
    let states = [
        ("cat_even", PureState::squeezed_cat(2.4, 1.62, Parity::Even, c)?),
        ("cat_odd", PureState::squeezed_cat(2.4, 1.62, Parity::Odd, c)?),
        ("gkp", gkp_state(GkpLogical::PlusI, 6.25, c)?),
    ];
    for (name, s) in &states {
        let w = wigner(&s.density(), &grid)?;
        let area = grid.cell_area();
        let negative: f64 = w.iter().filter(|&&v| v < 0.0).map(|v| -v * area).sum();
        println!("{name}: W(0,0) = {:+.4}, negative volume {:.4}, integral {:.4}", w[(120, 120)], negative, w.sum() * area);
        let path = out.join(format!("wigner_{name}.png"));
        wigner_chart(&path, &w, &grid)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
