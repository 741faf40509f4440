//! Lifts a loop winding once around the torus in x and reads off the
//! winding of the lifted trajectory.

use contact_inclusion::dynamics::{recover_control, recovered_lp_error, verify_inclusion};
use contact_inclusion::homotopy::{lift_loop_with, loop_trajectory, winding};
use contact_inclusion::models;
use nalgebra::{dvector, DVector};

fn main() -> contact_inclusion::Result<()> {
    let torus = models::torus_contact();
    let base = dvector![0.0, 0.25, 0.5];
    for n in [32, 3] {
        let samples: Vec<DVector<f64>> = (0..n).map(|i| dvector![i as f64 / n as f64, 0.25, 0.5]).collect();
        let (u, report) = lift_loop_with(&torus, &base, &samples, 1024)?;
        let traj = loop_trajectory(&torus, &base, &u)?;
        let rec = recover_control(&torus, &traj)?;
        println!("{n} samples -> {} legs after {} refinements", report.samples_used, report.refinements);
        println!("  displacement {:?}", (&traj.endpoint - &base).as_slice());
        println!("  winding {:?}", winding(&torus, &traj));
        println!("  closure {:.2e}", torus.chart_distance(&traj.endpoint, &base));
        println!("  inclusion {}", verify_inclusion(&torus, &traj).passed);
        println!("  recovery L2 {:.2e}", recovered_lp_error(&u, &traj, &rec, 2.0));
    }
    Ok(())
}
