//! Solves a two-piece control on the Heisenberg group, checks the
//! inclusion and recovers the control from the sampled curve.

use contact_inclusion::dynamics::{recover_control, recovered_lp_error, solve, verify_inclusion, SolveOptions};
use contact_inclusion::io;
use contact_inclusion::{models, AdmissibleControl, ControlPiece};
use nalgebra::dvector;

fn main() -> contact_inclusion::Result<()> {
    let h = models::heisenberg_unit_box();
    let k = h.constants()?.k;
    let u = AdmissibleControl::new(
        vec![0.0, 0.4, 1.0],
        vec![
            ControlPiece::constant(0.5, dvector![1.0, 0.0]),
            ControlPiece::constant(0.3, dvector![0.0, -2.0]),
        ],
        k,
    )?;
    let x = dvector![0.0, 0.0, 0.0];
    let traj = solve(&h, &x, &u, &SolveOptions::default())?;
    println!("endpoint {:?}", traj.endpoint.as_slice());
    println!("error estimate {:.2e}", traj.error_estimate);

    let report = verify_inclusion(&h, &traj);
    println!(
        "max omega(dot) {:.2e}, max relative error {:.2e}, passed {}",
        report.max_omega_dot, report.max_relative_error, report.passed
    );

    let rec = recover_control(&h, &traj)?;
    println!("recovered control L2 error {:.2e}", recovered_lp_error(&u, &traj, &rec, 2.0));

    let text = io::control_to_string(&u);
    assert_eq!(io::control_from_str(&text)?, u);
    println!("control file:\n{text}");
    Ok(())
}
