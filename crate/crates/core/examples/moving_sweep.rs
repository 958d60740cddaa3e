//! Moving-target sweep: best-fit squeezed cat per heralded outcome.
//!
//! cargo run --release --example moving_sweep -- [cutoff] [tau2 step] [vacuum]

use loopcat::onestep::{sweep, tau2_grid, OneStepConfig, SweepKind, RELEVANT_MIN_TAU2};

fn main() -> loopcat::Result<()> {
    let mut args = std::env::args().skip(1);
    let dim = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let step = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.005);
    let base = match args.next().as_deref() {
        Some("vacuum") => OneStepConfig::vacuum_loop(),
        _ => OneStepConfig::default(),
    };
    let config = base.with_cutoff(dim)?;
    let start = std::time::Instant::now();
    let table = sweep(&config, &tau2_grid(step), SweepKind::Moving)?;
    println!("cutoff {dim}: {} cells in {:.1?}", table.cells.len(), start.elapsed());
    if let Some((t2, f)) = table.relevant_maximum(RELEVANT_MIN_TAU2) {
        println!("average optimal fidelity: local maximum at tau^2 = {t2:.3} (F = {f:.4})");
    }
    for row in table.rows.iter().step_by((0.05 / step).round().max(1.0) as usize) {
        let one = table.cell(row.tau2, 1);
        let two = table.cell(row.tau2, 2);
        println!(
            "  tau^2 {:.3}  avg_opt {:.4}  n=1 {:?}  n=2 {:?}",
            row.tau2,
            row.average_optimal_fidelity.unwrap_or(f64::NAN),
            one.and_then(|c| c.f_opt.zip(c.alpha_opt).zip(c.r_opt)),
            two.and_then(|c| c.f_opt.zip(c.alpha_opt).zip(c.r_opt)),
        );
    }
    let worst_n1 = table
        .cells
        .iter()
        .filter(|c| c.n == 1 && c.f_opt.is_some())
        .map(|c| (c.tau2, c.f_opt.unwrap(), c.alpha_opt.unwrap(), c.p_n))
        .fold((0.0, 2.0, 0.0, 0.0), |a, b| if b.1 < a.1 { b } else { a });
    let max_alpha_n1 = table.cells.iter().filter(|c| c.n == 1).filter_map(|c| c.alpha_opt.map(|a| (c.tau2, a))).fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    println!("n=1 worst fidelity {worst_n1:?}; largest alpha {max_alpha_n1:?}");
    Ok(())
}
