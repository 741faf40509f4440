//! Certifies the built-in models and prints their constants.

use contact_inclusion::models;
use contact_inclusion::planner::{rank_margin, rank_margin_floor};
use nalgebra::dvector;

fn main() -> contact_inclusion::Result<()> {
    for name in models::MODEL_NAMES {
        let s = match models::by_name(name, Default::default()) {
            Ok(s) => s,
            Err(e) => {
                println!("{name:<13} rejected: {e}");
                continue;
            }
        };
        let step2 = match s.verify_step2() {
            Ok(v) => v,
            Err(e) => {
                println!("{name:<13} rejected: {e}");
                continue;
            }
        };
        let c = s.constants()?;
        let x = dvector![0.1, 0.2, 0.3];
        println!(
            "{name:<13} Omega = {:.6}  lambda = {:.6}  K = {:.6}  step-2 min = {step2:.4}",
            c.omega_sup, c.lambda_raw, c.k
        );
        println!(
            "{:<13} rank margin at {:?}: {:.6} (floor {:.6}, unscaled {:.6})",
            "",
            x.as_slice(),
            rank_margin(&s, &x)?,
            rank_margin_floor(&s)?,
            rank_margin(&s.with_rescaling(false), &x)?
        );
    }
    Ok(())
}
