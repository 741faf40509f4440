//! Plans a control on the torus: one section for a nearby target, then a
//! multi-leg plan for a target outside a single patch step.

use contact_inclusion::dynamics::{solve, verify_inclusion, SolveOptions};
use contact_inclusion::models;
use contact_inclusion::planner::{plan_with, section_with, PlanOptions, SolverOptions};
use nalgebra::dvector;

fn main() -> contact_inclusion::Result<()> {
    let torus = models::torus_contact();
    let x = dvector![0.1, 0.2, 0.5];

    let near = dvector![0.12, 0.19, 0.51];
    let (u, params) = section_with(&torus, &x, &near, 1.0, &SolverOptions::default())?;
    println!(
        "section: psi = {:?}, residual {:.2e} after {} iterations, {} pieces",
        params.psi.as_slice(),
        params.residual,
        params.iterations,
        u.pieces().len()
    );

    let far = dvector![0.45, 0.2, 0.5];
    let p = plan_with(&torus, &x, &far, &PlanOptions::default())?;
    println!("plan: {} legs, endpoint residual {:.2e}", p.legs.len(), p.residual);
    for leg in &p.legs {
        println!("  {:?} -> {:?} over {:.4}", leg.from, leg.to, leg.duration);
    }
    let traj = solve(&torus, &x, &p.control, &SolveOptions::default())?;
    println!("inclusion holds: {}", verify_inclusion(&torus, &traj).passed);
    Ok(())
}
