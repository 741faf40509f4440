//! Homotopy constructions on top of the cross-section: loop controls
//! `c(zeta, s)`, the time-changed lift `H~_1`, its based variant, loop
//! lifting by chained sections and continuity probes.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::controls::{
    balanced_durations, concatenate, concatenate_all, lp_distance, reparametrize, AdmissibleControl, PiecewiseAffine,
    PointNorm,
};
use crate::dynamics::{endpoint_with, solve, SolveOptions, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{Point, SubRiemannianStructure};
use crate::planner::{section, section_with, SolverOptions};

pub type BaseMap = Arc<dyn Fn(f64, f64) -> Point + Send + Sync>;
pub type LiftMap = Arc<dyn Fn(f64) -> AdmissibleControl + Send + Sync>;
/// `((zeta, s), h(zeta, s), H~_1(zeta, s))`.
pub type LiftedNode = ((f64, f64), Point, AdmissibleControl);

/// Base-point paths `h(zeta, s)` over a finite parameter set, with controls
/// `h0_lift(zeta)` closing at `h(zeta, 0)`.
#[derive(Clone)]
pub struct BasePointHomotopy {
    pub zetas: Vec<f64>,
    pub h: BaseMap,
    pub h0_lift: LiftMap,
}

impl std::fmt::Debug for BasePointHomotopy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BasePointHomotopy").field("zetas", &self.zetas).finish()
    }
}

impl BasePointHomotopy {
    pub fn new(zetas: Vec<f64>, h: BaseMap, h0_lift: LiftMap) -> Self {
        Self { zetas, h, h0_lift }
    }

    /// `h(zeta, s) = h(zeta, 0)` at the given points, zero lifts.
    pub fn constant(points: Vec<Point>, d: usize, k: f64) -> Self {
        let zetas: Vec<f64> = (0..points.len()).map(|i| i as f64).collect();
        let h: BaseMap = Arc::new(move |z, _s| points[z as usize].clone());
        Self::new(zetas, h, Arc::new(move |_| AdmissibleControl::zero(d, k)))
    }

    /// `zeta`-phased circles `center + r (cos 2 pi (zeta + s) e_a + sin 2 pi (zeta + s) e_b)`
    /// with zero lifts; `count` phases evenly spread over `[0, 1)`.
    pub fn circle(center: Point, radius: f64, axes: (usize, usize), count: usize, d: usize, k: f64) -> Self {
        let zetas = (0..count).map(|i| i as f64 / count as f64).collect();
        let h: BaseMap = Arc::new(move |z, s| {
            let (sn, cs) = (2.0 * PI * (z + s)).sin_cos();
            let mut p = center.clone();
            p[axes.0] += radius * cs;
            p[axes.1] += radius * sn;
            p
        });
        Self::new(zetas, h, Arc::new(move |_| AdmissibleControl::zero(d, k)))
    }

    pub fn base(&self, zeta: f64, s: f64) -> Point {
        (self.h)(zeta, s)
    }

    pub fn h0(&self, zeta: f64) -> AdmissibleControl {
        (self.h0_lift)(zeta)
    }
}

/// `c(zeta, s) = (sigma(h(zeta, s), h(zeta, 0)) * h0_lift(zeta)) * sigma(h(zeta, 0), h(zeta, s))`.
pub fn loop_control(structure: &SubRiemannianStructure, bph: &BasePointHomotopy, zeta: f64, s: f64) -> Result<AdmissibleControl> {
    let moved = bph.base(zeta, s);
    let start = bph.base(zeta, 0.0);
    let back = section(structure, &moved, &start)?;
    let out = section(structure, &start, &moved)?;
    concatenate(&concatenate(&back, &bph.h0(zeta))?, &out)
}

/// Knots of the three-branch time change: `t / s` on `[0, s/4)`,
/// `(t + 1 - s) / (4 - 3s)` on `[s/4, 1 - s/2]`, `t/s - 1/s + 1` after.
pub fn lift_time_change(s: f64) -> PiecewiseAffine {
    PiecewiseAffine::new(vec![(0.0, 0.0), (s / 4.0, 0.25), (1.0 - s / 2.0, 0.5), (1.0, 1.0)])
}

/// Two-branch time change of the based variant: `t / (2 - s)` on
/// `[0, 1 - s/2]`, `(t - 1 + s/2) / s + 1/2` after.
pub fn based_time_change(s: f64) -> PiecewiseAffine {
    PiecewiseAffine::new(vec![(0.0, 0.0), (1.0 - s / 2.0, 0.5), (1.0, 1.0)])
}

/// `H~_1(zeta, s) = c(zeta, s) o phi_s`.
pub fn reparam_lift(structure: &SubRiemannianStructure, bph: &BasePointHomotopy, zeta: f64, s: f64) -> Result<AdmissibleControl> {
    let c = loop_control(structure, bph, zeta, s)?;
    reparametrize(&c, &lift_time_change(s))
}

/// Based variant: `bph.h` is the target path and `bph.h0_lift(zeta)` drives
/// the fixed start to `h(zeta, 0)`; returns
/// `(h0_lift(zeta) * sigma(h(zeta, 0), h(zeta, s))) o phi_s`.
pub fn based_lift(structure: &SubRiemannianStructure, bph: &BasePointHomotopy, zeta: f64, s: f64) -> Result<AdmissibleControl> {
    let start = bph.base(zeta, 0.0);
    let moved = bph.base(zeta, s);
    let c = concatenate(&bph.h0(zeta), &section(structure, &start, &moved)?)?;
    reparametrize(&c, &based_time_change(s))
}

/// Whether two controls agree at the control-data level: identical piece
/// data and breakpoints within `1e-15`.
pub fn same_control_data(a: &AdmissibleControl, b: &AdmissibleControl) -> bool {
    a.pieces() == b.pieces()
        && a.breakpoints().len() == b.breakpoints().len()
        && a.breakpoints()
            .iter()
            .zip(b.breakpoints())
            .all(|(x, y)| (x - y).abs() <= 1e-15)
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftNode {
    pub zeta: f64,
    pub s: f64,
    pub base: Vec<f64>,
    /// Chart distance between `S(h, H~_1)(1)` and `h`; `None` on error.
    pub closure: Option<f64>,
    /// `L^p` distance to `H~_1(zeta, 0)`.
    pub lp_residual: Option<f64>,
    pub admissible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftGrid {
    pub nodes: Vec<LiftNode>,
    /// `H~_1(zeta, 0)` equals `h0_lift(zeta)` for every `zeta`.
    pub initial_exact: bool,
    pub max_closure: f64,
    pub p: f64,
}

impl LiftGrid {
    pub fn offending(&self, tol: f64) -> Vec<(f64, f64, String)> {
        self.nodes
            .iter()
            .filter_map(|n| match (&n.error, n.closure) {
                (Some(e), _) => Some((n.zeta, n.s, e.clone())),
                (None, Some(c)) if c > tol => Some((n.zeta, n.s, format!("closure residual {c:e}"))),
                _ => None,
            })
            .collect()
    }
}

fn patch_check(structure: &SubRiemannianStructure, bph: &BasePointHomotopy, zeta: f64, s: f64) -> Result<()> {
    let patch = structure.local_frame(&bph.base(zeta, 0.0))?;
    let p = bph.base(zeta, s);
    if !patch.contains(&p) {
        return Err(Error::PatchEscape {
            distance: patch.distance_from_center(&p),
            radius: patch.radius,
        });
    }
    Ok(())
}

/// Evaluates `H~ = (h, H~_1)` on `zetas x {k / s_steps}` and records the
/// closure residual of `F o H~ = H` at every node.
pub fn lift_grid(structure: &SubRiemannianStructure, bph: &BasePointHomotopy, s_steps: usize, p: f64) -> LiftGrid {
    let opts = SolveOptions::default();
    let grid: Vec<(f64, f64)> = bph
        .zetas
        .iter()
        .flat_map(|&z| (0..=s_steps).map(move |k| (z, k as f64 / s_steps as f64)))
        .collect();
    let initial: Vec<Option<AdmissibleControl>> = bph
        .zetas
        .iter()
        .map(|&z| reparam_lift(structure, bph, z, 0.0).ok())
        .collect();
    let initial_exact = bph
        .zetas
        .iter()
        .zip(&initial)
        .all(|(&z, c)| c.as_ref().is_some_and(|c| same_control_data(c, &bph.h0(z))));
    let nodes: Vec<LiftNode> = grid
        .par_iter()
        .map(|&(z, s)| {
            let base = bph.base(z, s);
            let zi = bph.zetas.iter().position(|&v| v == z).unwrap();
            let result = patch_check(structure, bph, z, s).and_then(|_| {
                let lift = reparam_lift(structure, bph, z, s)?;
                let (_, end) = endpoint_with(structure, &base, &lift, &opts)?;
                Ok((lift, structure.chart_distance(&end, &base)))
            });
            match result {
                Ok((lift, closure)) => LiftNode {
                    zeta: z,
                    s,
                    base: base.iter().copied().collect(),
                    closure: Some(closure),
                    lp_residual: initial[zi]
                        .as_ref()
                        .map(|c0| lp_distance(&lift, c0, p, PointNorm::Euclidean)),
                    admissible: lift.validate().is_ok(),
                    error: None,
                },
                Err(e) => LiftNode {
                    zeta: z,
                    s,
                    base: base.iter().copied().collect(),
                    closure: None,
                    lp_residual: None,
                    admissible: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let max_closure = nodes.iter().filter_map(|n| n.closure).fold(0.0, f64::max);
    LiftGrid {
        nodes,
        initial_exact,
        max_closure,
        p,
    }
}

/// `(zeta, s) -> (h(zeta, s), H~_1(zeta, s))` on `zetas x {k / s_steps}`.
pub fn lift_map(
    structure: &SubRiemannianStructure,
    bph: &BasePointHomotopy,
    s_steps: usize,
) -> Result<Vec<LiftedNode>> {
    bph.zetas
        .iter()
        .flat_map(|&z| (0..=s_steps).map(move |k| (z, k as f64 / s_steps as f64)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(z, s)| Ok(((z, s), bph.base(z, s), reparam_lift(structure, bph, z, s)?)))
        .collect()
}

/// Grid lift that fails with the list of offending nodes when any closure
/// residual exceeds `tol` or a node cannot be built.
pub fn lift_homotopy(structure: &SubRiemannianStructure, bph: &BasePointHomotopy, s_steps: usize, tol: f64) -> Result<LiftGrid> {
    let grid = lift_grid(structure, bph, s_steps, 2.0);
    let offending = grid.offending(tol);
    if offending.is_empty() {
        Ok(grid)
    } else {
        Err(Error::LiftFailure { offending })
    }
}

/// `(s, |H~_1(zeta, s) - H~_1(zeta, 0)|_p)` over `s_sequence`.
pub fn lp_continuity_probe(
    structure: &SubRiemannianStructure,
    bph: &BasePointHomotopy,
    zeta: f64,
    p: f64,
    s_sequence: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let base = reparam_lift(structure, bph, zeta, 0.0)?;
    s_sequence
        .iter()
        .map(|&s| Ok((s, lp_distance(&reparam_lift(structure, bph, zeta, s)?, &base, p, PointNorm::Euclidean))))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopLift {
    pub samples_used: usize,
    pub refinements: usize,
    /// Unwrapped waypoints, closing one lap after the start.
    pub waypoints: Vec<Vec<f64>>,
    pub durations: Vec<f64>,
    pub leg_residuals: Vec<f64>,
}

fn loop_waypoints(structure: &SubRiemannianStructure, basepoint: &Point, samples: &[Point]) -> Vec<Point> {
    let mut pts = vec![basepoint.clone()];
    for (i, p) in samples.iter().enumerate() {
        if i == 0 && structure.chart_distance(p, basepoint) <= 1e-12 {
            continue;
        }
        let prev = pts.last().unwrap().clone();
        pts.push(&prev + structure.chart_difference(&prev, p));
    }
    let prev = pts.last().unwrap().clone();
    pts.push(&prev + structure.chart_difference(&prev, basepoint));
    pts
}

fn lift_legs(
    structure: &SubRiemannianStructure,
    pts: &[Point],
    opts: &SolverOptions,
) -> Result<(AdmissibleControl, Vec<f64>, Vec<f64>)> {
    let legs = pts.len() - 1;
    let durations = balanced_durations(legs);
    let mut controls = Vec::with_capacity(legs);
    let mut residuals = Vec::with_capacity(legs);
    for (w, &t) in pts.windows(2).zip(&durations) {
        let (c, params) = section_with(structure, &w[0], &w[1], t, opts)?;
        controls.push(c);
        residuals.push(params.residual);
    }
    let (control, _) = concatenate_all(&controls)?;
    Ok((control, durations, residuals))
}

fn locality(e: Error) -> Error {
    match e {
        Error::NoConvergence { .. } | Error::PatchEscape { .. } | Error::BlowUp { .. } => {
            Error::OutsideLocality(format!("leg not reachable: {e}"))
        }
        other => other,
    }
}

/// `sigma(p0, p1) * sigma(p1, p2) * ... * sigma(p_{k-1}, p0)`; every leg is
/// solved for the speed its concatenation window imposes.
pub fn lift_loop(structure: &SubRiemannianStructure, basepoint: &Point, samples: &[Point]) -> Result<AdmissibleControl> {
    Ok(lift_loop_with(structure, basepoint, samples, 0)?.0)
}

/// Same as [`lift_loop`] with dyadic refinement of the loop (midpoints
/// inserted on every leg) until all legs are reachable or `max_samples`
/// would be exceeded.
pub fn lift_loop_with(
    structure: &SubRiemannianStructure,
    basepoint: &Point,
    samples: &[Point],
    max_samples: usize,
) -> Result<(AdmissibleControl, LoopLift)> {
    let opts = SolverOptions::default();
    let mut pts = loop_waypoints(structure, basepoint, samples);
    let mut refinements = 0;
    loop {
        match lift_legs(structure, &pts, &opts) {
            Ok((control, durations, leg_residuals)) => {
                let report = LoopLift {
                    samples_used: pts.len() - 1,
                    refinements,
                    waypoints: pts.iter().map(|p| p.iter().copied().collect()).collect(),
                    durations,
                    leg_residuals,
                };
                return Ok((control, report));
            }
            Err(e) => {
                let e = locality(e);
                let next = 2 * (pts.len() - 1);
                if !matches!(e, Error::OutsideLocality(_)) || next > max_samples {
                    return Err(e);
                }
                let mut refined = Vec::with_capacity(next + 1);
                for w in pts.windows(2) {
                    refined.push(w[0].clone());
                    refined.push(&w[0] + (&w[1] - &w[0]) * 0.5);
                }
                refined.push(pts.last().unwrap().clone());
                pts = refined;
                refinements += 1;
            }
        }
    }
}

/// Rounded unwrapped displacement along periodic axes (0 elsewhere).
pub fn winding(structure: &SubRiemannianStructure, traj: &Trajectory) -> Vec<i64> {
    let d = &traj.endpoint - traj.start();
    structure
        .periods()
        .iter()
        .enumerate()
        .map(|(i, p)| p.map(|p| (d[i] / p).round() as i64).unwrap_or(0))
        .collect()
}

/// Solves the lifted loop and returns the trajectory.
pub fn loop_trajectory(structure: &SubRiemannianStructure, basepoint: &Point, control: &AdmissibleControl) -> Result<Trajectory> {
    solve(structure, basepoint, control, &SolveOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::truncation_homotopy;
    use crate::dynamics::{endpoint, verify_inclusion};
    use crate::models;
    use nalgebra::{dvector, DVector};

    fn torus_circle(count: usize) -> (SubRiemannianStructure, BasePointHomotopy) {
        let t = models::torus_contact();
        let k = t.constants().unwrap().k;
        let bph = BasePointHomotopy::circle(dvector![0.5, 0.5, 0.0], 0.005, (1, 2), count, 2, k);
        (t, bph)
    }

    #[test]
    fn loop_control_at_s_zero() {
        let (t, bph) = torus_circle(2);
        let c = loop_control(&t, &bph, 0.0, 0.0).unwrap();
        assert!(c.is_zero());
        let z = AdmissibleControl::zero(2, t.constants().unwrap().k);
        let expected = concatenate(&concatenate(&z, &z).unwrap(), &z).unwrap();
        assert_eq!(c, expected);
    }

    #[test]
    fn reparam_lift_endpoints() {
        let (t, bph) = torus_circle(2);
        let c1 = loop_control(&t, &bph, 0.5, 1.0).unwrap();
        assert_eq!(reparam_lift(&t, &bph, 0.5, 1.0).unwrap(), c1);
        assert!(same_control_data(&reparam_lift(&t, &bph, 0.5, 0.0).unwrap(), &bph.h0(0.5)));

        let half = reparam_lift(&t, &bph, 0.5, 0.5).unwrap();
        let c = loop_control(&t, &bph, 0.5, 0.5).unwrap();
        let phi = lift_time_change(0.5);
        for i in 0..200 {
            let tt = (i as f64 + 0.5) / 200.0;
            let a = half.evaluate(tt).unwrap();
            let b = c.evaluate(phi.eval(tt)).unwrap();
            assert!((a - b).norm() < 1e-12, "t = {tt}");
        }
        half.validate().unwrap();
    }

    #[test]
    fn time_change_branches() {
        let s = 0.4;
        let phi = lift_time_change(s);
        for t in [0.01, 0.05, 0.2, 0.5, 0.79, 0.85, 0.99] {
            let expected = if t < s / 4.0 {
                t / s
            } else if t <= 1.0 - s / 2.0 {
                (t + 1.0 - s) / (4.0 - 3.0 * s)
            } else {
                t / s - 1.0 / s + 1.0
            };
            assert!((phi.eval(t) - expected).abs() < 1e-14);
        }
        let psi = based_time_change(s);
        for t in [0.1, 0.5, 0.79, 0.9] {
            let expected = if t <= 1.0 - s / 2.0 {
                t / (2.0 - s)
            } else {
                (t - 1.0 + s / 2.0) / s + 0.5
            };
            assert!((psi.eval(t) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_homotopy_closes() {
        let t = models::torus_contact();
        let k = t.constants().unwrap().k;
        let bph = BasePointHomotopy::constant(vec![dvector![0.1, 0.2, 0.3], dvector![0.7, 0.1, 0.9]], 2, k);
        let grid = lift_homotopy(&t, &bph, 4, 1e-12).unwrap();
        assert!(grid.initial_exact);
        assert!(grid.nodes.iter().all(|n| n.closure == Some(0.0) && n.admissible));
        for ((z, s), p, c) in lift_map(&t, &bph, 4).unwrap() {
            assert_eq!(p, bph.base(z, s));
            assert!(c.is_zero());
        }
        let probe = lp_continuity_probe(&t, &bph, 0.0, 2.0, &[0.5, 0.25]).unwrap();
        assert!(probe.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn escaping_base_path_is_reported() {
        let t = models::torus_contact();
        let k = t.constants().unwrap().k;
        let bph = BasePointHomotopy::circle(dvector![0.5, 0.5, 0.5], 0.4, (0, 1), 2, 2, k);
        match lift_homotopy(&t, &bph, 4, 1e-5) {
            Err(Error::LiftFailure { offending }) => assert!(!offending.is_empty()),
            other => panic!("expected LiftFailure, got {other:?}"),
        }
    }

    #[test]
    fn based_lift_ends() {
        let (t, bph) = torus_circle(2);
        assert!(same_control_data(&based_lift(&t, &bph, 0.0, 0.0).unwrap(), &bph.h0(0.0)));
        let whole = concatenate(
            &bph.h0(0.0),
            &section(&t, &bph.base(0.0, 0.0), &bph.base(0.0, 1.0)).unwrap(),
        )
        .unwrap();
        assert_eq!(based_lift(&t, &bph, 0.0, 1.0).unwrap(), whole);
        based_lift(&t, &bph, 0.0, 0.3).unwrap().validate().unwrap();
    }

    #[test]
    fn constant_loop_lifts_to_zero() {
        let t = models::torus_contact();
        let p = dvector![0.2, 0.3, 0.4];
        let u = lift_loop(&t, &p, &[p.clone(), p.clone(), p.clone()]).unwrap();
        assert!(u.is_zero());
    }

    #[test]
    fn far_apart_loop_is_outside_locality() {
        let t = models::torus_contact();
        let p = dvector![0.0, 0.0, 0.1];
        let q = dvector![0.0, 0.0, 0.5];
        assert!(matches!(lift_loop(&t, &p, &[p.clone(), q]), Err(Error::OutsideLocality(_))));
    }

    #[test]
    fn winding_loop() {
        let t = models::torus_contact();
        let base = dvector![0.0, 0.25, 0.5];
        let samples: Vec<DVector<f64>> = (0..32).map(|i| dvector![i as f64 / 32.0, 0.25, 0.5]).collect();
        let u = lift_loop(&t, &base, &samples).unwrap();
        u.validate().unwrap();
        let traj = loop_trajectory(&t, &base, &u).unwrap();
        let disp = &traj.endpoint - &base;
        assert!((disp - dvector![1.0, 0.0, 0.0]).norm() < 1e-3);
        assert!(t.chart_distance(&traj.endpoint, &base) < 1e-5);
        assert_eq!(winding(&t, &traj), vec![1, 0, 0]);
        assert!(verify_inclusion(&t, &traj).passed);
        assert!(truncation_homotopy(&u, 1.0).is_zero());
        let (_, end) = endpoint(&t, &base, &truncation_homotopy(&u, 1.0)).unwrap();
        assert_eq!(end, base);
    }
}
