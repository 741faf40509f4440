//! Compares the commutator flow word with its second-order expansion over a
//! range of amplitudes.

use contact_inclusion::models;
use contact_inclusion::planner::bch_scan;
use nalgebra::dvector;

fn main() -> contact_inclusion::Result<()> {
    for (name, s, x) in [
        ("torus", models::torus_contact(), dvector![0.0, 0.0, 0.1]),
        ("heisenberg", models::heisenberg_unit_box(), dvector![0.2, -0.4, 0.5]),
    ] {
        let (rows, slope) = bch_scan(&s, &x, 1e-3, 1e-1, 9)?;
        println!("{name}");
        for (xi, r) in rows {
            println!("  {xi:.3e}  {r:.3e}");
        }
        println!("  log-log slope {slope:.3}");
    }
    Ok(())
}
