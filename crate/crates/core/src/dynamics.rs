//! Solution operator of `x' = u0 X0(x) + sum u_i f_i(x)` for admissible
//! controls, the endpoint map, inclusion checks and control recovery.

use nalgebra::DVector;
use serde::Serialize;

use crate::controls::{gauss, AdmissibleControl};
use crate::error::{Error, Result};
use crate::geometry::{Point, SubRiemannianStructure, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub steps_per_piece: usize,
    /// Largest accepted Richardson estimate of the endpoint error.
    pub accuracy_tol: f64,
    /// State norm treated as blow-up.
    pub blowup: f64,
    /// Speed factor on the vector field; a control run inside a concatenation
    /// over a window of length `T` behaves like the control alone at speed `T`.
    pub time_scale: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            steps_per_piece: 200,
            accuracy_tol: 1e-7,
            blowup: 1e6,
            time_scale: 1.0,
        }
    }
}

impl SolveOptions {
    pub fn with_steps(steps_per_piece: usize) -> Self {
        Self {
            steps_per_piece,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Unwrapped states.
    pub states: Vec<Point>,
    /// `(u0, u_1..u_d)` at each sample, taken from `piece[k]`.
    pub controls: Vec<DVector<f64>>,
    pub velocities: Vec<Vector>,
    /// Control piece the sample belongs to (breakpoints go right).
    pub piece: Vec<usize>,
    pub omega_dot: Vec<f64>,
    pub endpoint: Point,
    pub error_estimate: f64,
    pub time_scale: f64,
}

impl Trajectory {
    pub fn start(&self) -> &Point {
        &self.states[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Curve given only by samples (no control): velocities by differences,
    /// controls recovered as `u0 = g(x', X0)` with `u_D` left empty.
    pub fn from_samples(structure: &SubRiemannianStructure, times: Vec<f64>, states: Vec<Point>) -> Result<Self> {
        if times.len() < 2 || times.len() != states.len() {
            return Err(Error::Parse("need at least two samples with matching times".into()));
        }
        let piece = vec![0; times.len()];
        let velocities = differences(&times, &states, &piece);
        let mut controls = Vec::with_capacity(times.len());
        let mut omega_dot = Vec::with_capacity(times.len());
        for (x, v) in states.iter().zip(&velocities) {
            let x0 = structure.drift_field(x)?;
            controls.push(DVector::from_element(1, structure.inner(x, v, &x0)));
            omega_dot.push(structure.omega(x).dot(v));
        }
        let endpoint = states.last().unwrap().clone();
        Ok(Self {
            times,
            states,
            controls,
            velocities,
            piece,
            omega_dot,
            endpoint,
            error_estimate: 0.0,
            time_scale: 1.0,
        })
    }

    /// Piecewise-linear interpolant of the states.
    pub fn state_at(&self, t: f64) -> Point {
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        if t1 == t0 {
            return self.states[k].clone();
        }
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        &self.states[k - 1] * (1.0 - w) + &self.states[k] * w
    }

    /// Chord slope of the interpolant on the sample interval containing `t`.
    fn chord_at(&self, t: f64) -> Vector {
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1);
        let dt = self.times[k] - self.times[k - 1];
        (&self.states[k] - &self.states[k - 1]) / dt
    }
}

/// Vector field of the control value `u` at `x`.
pub fn field(structure: &SubRiemannianStructure, x: &Point, u: &DVector<f64>) -> Result<Vector> {
    let frame = structure.frame(x);
    let mut v = frame * u.rows(1, u.len() - 1);
    if u[0] != 0.0 {
        v += structure.drift_field(x)? * u[0];
    }
    Ok(v)
}

fn rk4_piece(
    structure: &SubRiemannianStructure,
    u: &AdmissibleControl,
    j: usize,
    x: &Point,
    steps: usize,
    scale: f64,
    mut visit: impl FnMut(f64, &Point) -> Result<()>,
) -> Result<Point> {
    let (a, b) = u.piece_interval(j);
    let h = (b - a) / steps as f64;
    let f = |t: f64, p: &Point| -> Result<Vector> { Ok(field(structure, p, &u.evaluate_in(j, t))? * scale) };
    let mut p = x.clone();
    if u.pieces()[j].xi == 0.0 {
        for k in 1..=steps {
            visit(a + h * k as f64, &p)?;
        }
        return Ok(p);
    }
    for k in 0..steps {
        let t = a + h * k as f64;
        let k1 = f(t, &p)?;
        let k2 = f(t + 0.5 * h, &(&p + &k1 * (0.5 * h)))?;
        let k3 = f(t + 0.5 * h, &(&p + &k2 * (0.5 * h)))?;
        let k4 = f(t + h, &(&p + &k3 * h))?;
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t_next = if k + 1 == steps { b } else { a + h * (k + 1) as f64 };
        visit(t_next, &p)?;
    }
    Ok(p)
}

fn check_blowup(t: f64, p: &Point, bound: f64) -> Result<()> {
    let n = p.norm();
    if !n.is_finite() || n > bound {
        return Err(Error::BlowUp { time: t, norm: n });
    }
    Ok(())
}

/// Endpoint only, no sample storage.
fn endpoint_only(structure: &SubRiemannianStructure, x: &Point, u: &AdmissibleControl, opts: &SolveOptions, steps: usize) -> Result<Point> {
    let mut p = x.clone();
    for j in 0..u.pieces().len() {
        p = rk4_piece(structure, u, j, &p, steps, opts.time_scale, |t, q| check_blowup(t, q, opts.blowup))?;
    }
    Ok(p)
}

/// Classical RK4 with `steps_per_piece` substeps per control piece, plus a
/// Richardson comparison against half as many substeps.
pub fn solve(structure: &SubRiemannianStructure, x: &Point, u: &AdmissibleControl, opts: &SolveOptions) -> Result<Trajectory> {
    u.validate()?;
    let steps = opts.steps_per_piece.max(2);
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut piece = vec![0usize];
    let mut p = x.clone();
    for j in 0..u.pieces().len() {
        // the breakpoint sample belongs to the piece that starts there
        *piece.last_mut().unwrap() = j;
        p = rk4_piece(structure, u, j, &p, steps, opts.time_scale, |t, q| {
            check_blowup(t, q, opts.blowup)?;
            times.push(t);
            states.push(q.clone());
            piece.push(j);
            Ok(())
        })?;
    }
    let coarse = endpoint_only(structure, x, u, opts, steps / 2)?;
    let error_estimate = (&p - &coarse).norm() / 15.0;
    if error_estimate > opts.accuracy_tol {
        return Err(Error::AccuracyLoss {
            estimate: error_estimate,
            tolerance: opts.accuracy_tol,
        });
    }

    let mut controls = Vec::with_capacity(times.len());
    let mut velocities = Vec::with_capacity(times.len());
    let mut omega_dot = Vec::with_capacity(times.len());
    for ((&t, q), &j) in times.iter().zip(&states).zip(&piece) {
        let c = u.evaluate_in(j, t);
        let v = field(structure, q, &c)? * opts.time_scale;
        omega_dot.push(structure.omega(q).dot(&v));
        controls.push(c);
        velocities.push(v);
    }
    Ok(Trajectory {
        times,
        states,
        controls,
        velocities,
        piece,
        omega_dot,
        endpoint: p,
        error_estimate,
        time_scale: opts.time_scale,
    })
}

/// `F(x, u) = (x, S(x, u)(1))`.
pub fn endpoint(structure: &SubRiemannianStructure, x: &Point, u: &AdmissibleControl) -> Result<(Point, Point)> {
    endpoint_with(structure, x, u, &SolveOptions::default())
}

pub fn endpoint_with(structure: &SubRiemannianStructure, x: &Point, u: &AdmissibleControl, opts: &SolveOptions) -> Result<(Point, Point)> {
    u.validate()?;
    let steps = opts.steps_per_piece.max(2);
    let fine = endpoint_only(structure, x, u, opts, steps)?;
    let coarse = endpoint_only(structure, x, u, opts, steps / 2)?;
    let estimate = (&fine - &coarse).norm() / 15.0;
    if estimate > opts.accuracy_tol {
        return Err(Error::AccuracyLoss {
            estimate,
            tolerance: opts.accuracy_tol,
        });
    }
    Ok((x.clone(), fine))
}

#[derive(Debug, Clone, Serialize)]
pub struct InclusionReport {
    pub samples: usize,
    /// Largest `omega(x')` seen.
    pub max_omega_dot: f64,
    /// Largest `|omega(x') + u0 |omega|| / (u0 |omega|)` over samples with
    /// `u0 > 0`.
    pub max_relative_error: f64,
    /// Largest `|omega(x' - u0 X0)|`.
    pub max_horizontal_defect: f64,
    /// Worst offenders as `(t, description)`.
    pub violations: Vec<(f64, String)>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct InclusionTolerances {
    pub omega_dot: f64,
    pub relative: f64,
    pub horizontal: f64,
}

impl Default for InclusionTolerances {
    fn default() -> Self {
        Self {
            omega_dot: 1e-8,
            relative: 1e-6,
            horizontal: 1e-8,
        }
    }
}

/// Checks `x' in ([X0]^+ + D) u 0` at every sample.
pub fn verify_inclusion(structure: &SubRiemannianStructure, traj: &Trajectory) -> InclusionReport {
    verify_inclusion_with(structure, traj, &InclusionTolerances::default())
}

pub fn verify_inclusion_with(structure: &SubRiemannianStructure, traj: &Trajectory, tol: &InclusionTolerances) -> InclusionReport {
    let mut report = InclusionReport {
        samples: traj.len(),
        max_omega_dot: f64::NEG_INFINITY,
        max_relative_error: 0.0,
        max_horizontal_defect: 0.0,
        violations: Vec::new(),
        passed: true,
    };
    for k in 0..traj.len() {
        let (t, x, v) = (traj.times[k], &traj.states[k], &traj.velocities[k]);
        let w = structure.omega(x);
        let wd = w.dot(v);
        report.max_omega_dot = report.max_omega_dot.max(wd);
        let scale = 1.0 + v.norm();
        if wd > tol.omega_dot * scale {
            report.violations.push((t, format!("omega(x') = {wd:e} > 0")));
        }
        let x0 = match structure.drift_field(x) {
            Ok(d) => d,
            Err(e) => {
                report.violations.push((t, e.to_string()));
                continue;
            }
        };
        let u0 = traj.controls[k][0] * traj.time_scale;
        let norm = structure.omega_norm(x);
        let expected = -u0 * norm;
        if u0 > 0.0 {
            let rel = (wd - expected).abs() / (u0 * norm);
            report.max_relative_error = report.max_relative_error.max(rel);
            if rel > tol.relative {
                report
                    .violations
                    .push((t, format!("omega(x') = {wd:e}, expected {expected:e}")));
            }
        } else if u0 < 0.0 {
            report.violations.push((t, format!("negative drift coefficient {u0:e}")));
        }
        let defect = w.dot(&(v - &x0 * u0)).abs();
        report.max_horizontal_defect = report.max_horizontal_defect.max(defect);
        if defect > tol.horizontal * scale {
            report
                .violations
                .push((t, format!("x' - u0 X0 leaves the distribution ({defect:e})")));
        }
    }
    report.passed = report.violations.is_empty();
    report.violations.truncate(20);
    report
}

/// Velocities by differences inside each piece: central in the interior,
/// second-order one-sided at piece starts and at the final sample. Every
/// piece holds at least two substeps.
fn differences(times: &[f64], states: &[Point], piece: &[usize]) -> Vec<Vector> {
    let n = times.len();
    (0..n)
        .map(|k| {
            if k + 1 == n {
                let h = times[k] - times[k - 1];
                if k >= 2 {
                    ((&states[k] - &states[k - 1]) * 4.0 - (&states[k] - &states[k - 2])) / (2.0 * h)
                } else {
                    (&states[k] - &states[k - 1]) / h
                }
            } else if k > 0 && piece[k - 1] == piece[k] {
                (&states[k + 1] - &states[k - 1]) / (times[k + 1] - times[k - 1])
            } else if k + 2 < n {
                let h = times[k + 1] - times[k];
                ((&states[k + 1] - &states[k]) * 4.0 - (&states[k + 2] - &states[k])) / (2.0 * h)
            } else {
                (&states[k + 1] - &states[k]) / (times[k + 1] - times[k])
            }
        })
        .collect()
}

/// Minimal control recovered from the sampled curve: `u0 = g(x', X0)` and
/// `u_D` the least-norm coefficients of `x' - u0 X0`.
pub fn recover_control(structure: &SubRiemannianStructure, traj: &Trajectory) -> Result<Vec<DVector<f64>>> {
    let velocities = differences(&traj.times, &traj.states, &traj.piece);
    let d = structure.frame_len();
    let tol = structure.config().horizontal_tol;
    let mut out = Vec::with_capacity(traj.len());
    for (x, v) in traj.states.iter().zip(&velocities) {
        let v = v / traj.time_scale;
        let x0 = structure.drift_field(x)?;
        let u0 = structure.inner(x, &v, &x0);
        if u0 < -1e-6 * (1.0 + v.norm()) {
            return Err(Error::NotHorizontal {
                defect: structure.omega(x).dot(&v),
            });
        }
        let rest = &v - &x0 * u0;
        let w = structure.omega(x);
        let defect = w.dot(&rest).abs();
        if defect > tol * (1.0 + v.norm()) {
            return Err(Error::NotHorizontal { defect });
        }
        let coef = crate::geometry::least_norm(&structure.frame(x), &rest, structure.dim() - 1)?;
        let mut u = DVector::zeros(d + 1);
        u[0] = u0.max(0.0);
        u.rows_mut(1, d).copy_from(&coef);
        out.push(u);
    }
    Ok(out)
}

/// `L^p` distance between recovered samples and the control itself, by the
/// trapezoid rule on the trajectory grid.
pub fn recovered_lp_error(u: &AdmissibleControl, traj: &Trajectory, recovered: &[DVector<f64>], p: f64) -> f64 {
    let vals: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.piece)
        .zip(recovered)
        .map(|((&t, &j), r)| (u.evaluate_in(j, t) - r).norm().powf(p))
        .collect();
    let mut total = 0.0;
    for k in 1..vals.len() {
        total += 0.5 * (vals[k] + vals[k - 1]) * (traj.times[k] - traj.times[k - 1]);
    }
    total.powf(1.0 / p)
}

fn merged_times(a: &Trajectory, b: &Trajectory) -> Vec<f64> {
    let mut t: Vec<f64> = a.times.iter().chain(&b.times).copied().collect();
    t.sort_by(|x, y| x.partial_cmp(y).unwrap());
    t.dedup();
    t
}

/// `sup_t |x_1(t) - x_2(t)|` over the merged sample grid.
pub fn uniform_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    merged_times(a, b)
        .into_iter()
        .map(|t| (a.state_at(t) - b.state_at(t)).norm())
        .fold(0.0, f64::max)
}

/// `(|x_1 - x_2|_p^p + |x_1' - x_2'|_p^p)^(1/p)` for the piecewise-linear
/// interpolants.
pub fn w1p_distance(a: &Trajectory, b: &Trajectory, p: f64) -> f64 {
    let t = merged_times(a, b);
    let mut total = 0.0;
    for w in t.windows(2) {
        if !(w[1] > w[0]) {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let dv = (a.chord_at(mid) - b.chord_at(mid)).norm().powf(p);
        total += dv * (w[1] - w[0]);
        total += gauss(w[0], w[1], |s| (a.state_at(s) - b.state_at(s)).norm().powf(p));
    }
    total.powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::{concatenate, ControlPiece, PointNorm};
    use crate::models;
    use nalgebra::dvector;

    fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zero_control_stays_put() {
        let s = models::torus_contact();
        let x = dvector![0.1, 0.2, 0.3];
        let u = AdmissibleControl::zero(2, s.constants().unwrap().k);
        let traj = solve(&s, &x, &u, &SolveOptions::default()).unwrap();
        assert!(traj.states.iter().all(|p| *p == x));
        assert_eq!(endpoint(&s, &x, &u).unwrap(), (x.clone(), x));
        let report = verify_inclusion(&s, &traj);
        assert!(report.passed);
        assert_eq!(report.max_omega_dot, 0.0);
    }

    #[test]
    fn heisenberg_unit_section_example() {
        let s = models::heisenberg_unit_box();
        let k = s.constants().unwrap().k;
        let o = dvector![0.0, 0.0, 0.0];
        let alpha = s.minimal_coefficients(&o, &dvector![0.0, 1.0, 0.0]).unwrap();
        let u = AdmissibleControl::constant(1.0, alpha, k);
        let traj = solve(&s, &o, &u, &SolveOptions::default()).unwrap();
        assert!(close(&traj.endpoint, &dvector![0.0, 1.0, -1.0], 1e-12));
        assert!(verify_inclusion(&s, &traj).passed);

        let rec = recover_control(&s, &traj).unwrap();
        let worst = rec
            .iter()
            .map(|r| (r - dvector![1.0, 0.0, 1.0]).amax())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-4, "worst recovery error {worst}");
    }

    #[test]
    fn torus_pure_drift_returns_mod_one() {
        let s = models::torus_contact();
        let k = s.constants().unwrap().k;
        let o = dvector![0.0, 0.0, 0.0];
        let u = AdmissibleControl::constant(1.0, dvector![0.0, 0.0], k);
        let (_, end) = endpoint(&s, &o, &u).unwrap();
        assert!(close(&end, &dvector![-1.0, 0.0, 0.0], 1e-12));
        assert!(s.chart_distance(&end, &o) < 1e-12);
    }

    #[test]
    fn concatenation_is_a_semigroup_at_half_speed() {
        let s = models::torus_contact();
        let k = s.constants().unwrap().k;
        let x = dvector![0.1, 0.0, 0.2];
        let u = AdmissibleControl::constant(0.8, dvector![1.0, -0.5], k);
        let v = AdmissibleControl::constant(0.5, dvector![-0.3, 1.2], k);
        let (_, whole) = endpoint(&s, &x, &concatenate(&u, &v).unwrap()).unwrap();
        let half = SolveOptions {
            time_scale: 0.5,
            ..SolveOptions::default()
        };
        let (_, mid) = endpoint_with(&s, &x, &u, &half).unwrap();
        let (_, end) = endpoint_with(&s, &mid, &v, &half).unwrap();
        assert!(close(&whole, &end, 1e-12));
    }

    #[test]
    fn upward_curve_is_flagged() {
        let s = models::heisenberg_unit_box();
        let times: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let states = times.iter().map(|&t| dvector![0.0, 0.0, 0.5 * t]).collect();
        let traj = Trajectory::from_samples(&s, times, states).unwrap();
        let report = verify_inclusion(&s, &traj);
        assert!(!report.passed);
        assert!(report.max_omega_dot > 0.4);
        assert!(matches!(recover_control(&s, &traj), Err(Error::NotHorizontal { .. })));
    }

    #[test]
    fn recovered_zero_control() {
        let s = models::heisenberg_unit_box();
        let x = dvector![0.2, 0.1, 0.0];
        let u = AdmissibleControl::zero(2, 1.0);
        let traj = solve(&s, &x, &u, &SolveOptions::default()).unwrap();
        let rec = recover_control(&s, &traj).unwrap();
        assert!(rec.iter().all(|r| r.amax() == 0.0));
    }

    #[test]
    fn trajectory_distances() {
        let s = models::torus_contact();
        let k = s.constants().unwrap().k;
        let x = dvector![0.0, 0.1, 0.3];
        let u = AdmissibleControl::new(
            vec![0.0, 0.3, 1.0],
            vec![
                ControlPiece::constant(0.7, dvector![1.0, 0.5]),
                ControlPiece::constant(0.4, dvector![-0.5, 1.5]),
            ],
            k,
        )
        .unwrap();
        let a = solve(&s, &x, &u, &SolveOptions::default()).unwrap();
        assert_eq!(uniform_distance(&a, &a), 0.0);
        assert_eq!(w1p_distance(&a, &a, 2.0), 0.0);
        let b = solve(&s, &x, &u, &SolveOptions::with_steps(64)).unwrap();
        // the coarse chords differ from the fine ones by about h |x''| / 2
        let curvature = a
            .velocities
            .windows(2)
            .zip(a.times.windows(2))
            .map(|(v, t)| (&v[1] - &v[0]).norm() / (t[1] - t[0]))
            .fold(0.0, f64::max);
        let tolerance = 0.7 / 64.0 * curvature;
        let d = w1p_distance(&a, &b, 2.0);
        assert!(d < tolerance, "{d} vs {tolerance}");
        assert!(uniform_distance(&a, &b) < 1e-4);
        assert!(a.times.contains(&0.3));
    }

    #[test]
    fn gronwall_slope_is_linear() {
        let s = models::torus_contact();
        let k = s.constants().unwrap().k;
        let x = dvector![0.0, 0.0, 0.1];
        let base = AdmissibleControl::new(
            vec![0.0, 0.5, 1.0],
            vec![
                ControlPiece::constant(1.0, dvector![0.5, 0.5]),
                ControlPiece::constant(0.6, dvector![1.0, -1.0]),
            ],
            k,
        )
        .unwrap();
        let a = solve(&s, &x, &base, &SolveOptions::default()).unwrap();
        let mut points = Vec::new();
        for n in 2..8 {
            let delta = 0.5f64.powi(n);
            let mut pieces = base.pieces().to_vec();
            pieces[0].alpha[0][0] += delta;
            let un = AdmissibleControl::new(base.breakpoints().to_vec(), pieces, k).unwrap();
            let l1 = crate::controls::lp_distance(&un, &base, 1.0, PointNorm::Euclidean);
            let b = solve(&s, &x, &un, &SolveOptions::default()).unwrap();
            points.push((l1.ln(), uniform_distance(&a, &b).ln()));
        }
        let n = points.len() as f64;
        let (mx, my) = points.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn solve_is_deterministic() {
        let s = models::torus_contact();
        let k = s.constants().unwrap().k;
        let x = dvector![0.3, 0.1, 0.7];
        let u = AdmissibleControl::constant(0.9, dvector![1.0, 1.0], k);
        let a = solve(&s, &x, &u, &SolveOptions::default()).unwrap();
        let b = solve(&s, &x, &u, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blowup_and_accuracy_loss() {
        let s = models::heisenberg_unit_box();
        let u = AdmissibleControl::constant(10.0, dvector![0.0, 0.0], 1.0);
        let opts = SolveOptions {
            blowup: 10.0,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve(&s, &dvector![0.0, 0.0, 0.0], &u, &opts),
            Err(Error::BlowUp { .. })
        ));
        let t = models::torus_contact();
        let k = t.constants().unwrap().k;
        let fast = AdmissibleControl::constant(6.0, dvector![k, 0.0], k);
        let opts = SolveOptions {
            steps_per_piece: 4,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve(&t, &dvector![0.0, 0.0, 0.0], &fast, &opts),
            Err(Error::AccuracyLoss { .. })
        ));
    }
}
