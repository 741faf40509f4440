//! Lifts a small circle of base points on the torus and prints the closure
//! residuals and the L^p continuity table of the lift.

use contact_inclusion::homotopy::{lift_grid, lp_continuity_probe, BasePointHomotopy};
use contact_inclusion::models;
use nalgebra::dvector;

fn main() -> contact_inclusion::Result<()> {
    let torus = models::torus_contact();
    let k = torus.constants()?.k;
    let bph = BasePointHomotopy::circle(dvector![0.5, 0.5, 0.0], 0.005, (1, 2), 8, 2, k);

    let grid = lift_grid(&torus, &bph, 16, 2.0);
    println!("initial lift exact: {}", grid.initial_exact);
    println!("max closure residual: {:.3e}", grid.max_closure);
    for n in grid.nodes.iter().filter(|n| n.zeta == 0.0) {
        println!(
            "  s = {:.4}  closure {:.3e}  L2 to s = 0 {:.3e}",
            n.s,
            n.closure.unwrap_or(f64::NAN),
            n.lp_residual.unwrap_or(f64::NAN)
        );
    }

    let s_seq: Vec<f64> = (1..=8).map(|k| 0.5f64.powi(k)).collect();
    for p in [1.0, 2.0] {
        println!("L^{p} table:");
        for (s, r) in lp_continuity_probe(&torus, &bph, 0.0, p, &s_seq)? {
            println!("  {s:.6}  {r:.3e}");
        }
    }
    Ok(())
}
