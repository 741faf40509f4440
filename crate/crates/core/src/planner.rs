//! Local motion planning: the flow word `G(x, psi)`, its inversion by a
//! damped Broyden iteration, the cross-section `sigma(x, y)` and the
//! certificates around it.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controls::{concatenate, AdmissibleControl, ControlPiece};
use crate::dynamics::{endpoint_with, SolveOptions};
use crate::error::{Error, Result};
use crate::geometry::{FramePatch, Point, SubRiemannianStructure, Vector};

/// RK4 steps per flow-word segment; each `sigma` piece gets one `alpha`
/// sample per step node.
pub const FLOW_STEPS: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowSegment {
    pub xi: f64,
    /// Zero-based section index, `None` for a drift-only segment.
    pub frame_index: Option<usize>,
    pub sign: f64,
}

/// The `m + 3` unit-time flows of `xi^2 X0~ + sign xi Y~_j`, with
/// `X0~ = X0 / (m + 3)` and `Y~_j = Y_j / (m + 3)`. `duration` scales every
/// field, which is how the word behaves inside a concatenation window of
/// that length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowWord {
    pub segments: Vec<FlowSegment>,
    pub duration: f64,
}

fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl FlowWord {
    pub fn from_psi(psi: &DVector<f64>, duration: f64) -> Self {
        let m = psi.len();
        let mut segments: Vec<FlowSegment> = (0..m - 1)
            .map(|j| FlowSegment {
                xi: psi[j],
                frame_index: Some(j),
                sign: 1.0,
            })
            .collect();
        let root = psi[m - 1].abs().sqrt();
        segments.extend(Self::commutator(signum0(psi[m - 1]) * root, root));
        Self { segments, duration }
    }

    /// Four-factor block `(-Y1, -Y2, +Y1, +Y2)` with `xi = (xi1, xi2, xi1, xi2)`.
    pub fn commutator(xi1: f64, xi2: f64) -> [FlowSegment; 4] {
        let seg = |xi, j, sign| FlowSegment {
            xi,
            frame_index: Some(j),
            sign,
        };
        [seg(xi1, 0, -1.0), seg(xi2, 1, -1.0), seg(xi1, 0, 1.0), seg(xi2, 1, 1.0)]
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn segment_field(patch: &FramePatch, seg: &FlowSegment, scale: f64, p: &Point) -> Vector {
    let mut v = patch.drift(p) * (seg.xi * seg.xi * scale);
    if let Some(j) = seg.frame_index {
        if seg.xi != 0.0 {
            v += patch.section(j, p) * (seg.sign * seg.xi * scale);
        }
    }
    v
}

fn escape(patch: &FramePatch, p: &Point) -> Result<()> {
    let d = patch.distance_from_center(p);
    if !(d <= patch.radius) {
        return Err(Error::PatchEscape {
            distance: d,
            radius: patch.radius,
        });
    }
    Ok(())
}

/// Unit-time RK4 flow of `field`, returning the `steps + 1` nodes.
fn flow<F: Fn(&Point) -> Vector>(patch: &FramePatch, x: &Point, steps: usize, field: F) -> Result<Vec<Point>> {
    let h = 1.0 / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut p = x.clone();
    out.push(p.clone());
    for _ in 0..steps {
        let k1 = field(&p);
        let k2 = field(&(&p + &k1 * (0.5 * h)));
        let k3 = field(&(&p + &k2 * (0.5 * h)));
        let k4 = field(&(&p + &k3 * h));
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                time: 1.0,
                norm: p.norm(),
            });
        }
        escape(patch, &p)?;
        out.push(p.clone());
    }
    Ok(out)
}

/// Nodes of every segment of the word started at `x`.
pub fn flow_word_path(patch: &FramePatch, x: &Point, word: &FlowWord, steps: usize) -> Result<Vec<Vec<Point>>> {
    let m = patch.len() + 1;
    let scale = word.duration / (m as f64 + 3.0);
    let mut p = x.clone();
    let mut out = Vec::with_capacity(word.len());
    for seg in &word.segments {
        let nodes = if seg.xi == 0.0 {
            vec![p.clone(); steps + 1]
        } else {
            flow(patch, &p, steps, |q| segment_field(patch, seg, scale, q))?
        };
        p = nodes.last().unwrap().clone();
        out.push(nodes);
    }
    Ok(out)
}

fn word_endpoint(patch: &FramePatch, x: &Point, word: &FlowWord, steps: usize) -> Result<Point> {
    let m = patch.len() + 1;
    let scale = word.duration / (m as f64 + 3.0);
    let mut p = x.clone();
    for seg in &word.segments {
        if seg.xi != 0.0 {
            p = flow(patch, &p, steps, |q| segment_field(patch, seg, scale, q))?
                .pop()
                .unwrap();
        }
    }
    Ok(p)
}

/// `G(x, psi)` on the local frame at `x`.
pub fn flow_word_endpoint(structure: &SubRiemannianStructure, x: &Point, psi: &DVector<f64>) -> Result<Point> {
    let patch = structure.local_frame(x)?;
    word_endpoint(&patch, x, &FlowWord::from_psi(psi, 1.0), FLOW_STEPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Chart-distance tolerance on `G(x, psi) - y`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative forward-difference step.
    pub fd_step: f64,
    pub steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 60,
            fd_step: 1e-7,
            steps: FLOW_STEPS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SectionParams {
    pub psi: DVector<f64>,
    pub base: Point,
    pub target: Point,
    /// Sign of `psi_m`, 0 when `psi_m = 0`.
    pub eps_m: f64,
    pub residual: f64,
    pub iterations: usize,
    pub duration: f64,
    pub patch: FramePatch,
}

struct Inverter<'a> {
    structure: &'a SubRiemannianStructure,
    patch: FramePatch,
    x: Point,
    y: Point,
    duration: f64,
    opts: SolverOptions,
}

impl Inverter<'_> {
    fn residual(&self, psi: &DVector<f64>) -> Result<Vector> {
        let g = word_endpoint(&self.patch, &self.x, &FlowWord::from_psi(psi, self.duration), self.opts.steps)?;
        Ok(self.structure.chart_difference(&self.y, &g))
    }

    /// Forward-difference Jacobian; the `psi_m` column is one-sided on the
    /// side `side` (the sign of `psi_m` when it is nonzero).
    fn jacobian(&self, psi: &DVector<f64>, r: &Vector, side: f64) -> Result<DMatrix<f64>> {
        let m = psi.len();
        let mut jac = DMatrix::zeros(r.len(), m);
        for k in 0..m {
            let dir = if k == m - 1 { side } else { 1.0 };
            let h = dir * self.opts.fd_step * (1.0 + psi[k].abs());
            let mut q = psi.clone();
            q[k] += h;
            let rq = self.residual(&q)?;
            jac.set_column(k, &((rq - r) / h));
        }
        Ok(jac)
    }
}

fn newton_step(jac: &DMatrix<f64>, r: &Vector) -> Option<DVector<f64>> {
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return None;
    }
    svd.solve(&(-r), 1e-12 * smax).ok()
}

/// `psi` with `G(x, psi) = y`, for a word running at speed `duration`.
pub fn solve_psi(structure: &SubRiemannianStructure, x: &Point, y: &Point) -> Result<SectionParams> {
    solve_psi_with(structure, x, y, 1.0, &SolverOptions::default())
}

pub fn solve_psi_with(structure: &SubRiemannianStructure, x: &Point, y: &Point, duration: f64, opts: &SolverOptions) -> Result<SectionParams> {
    let patch = structure.local_frame(x)?;
    let m = structure.dim();
    let inv = Inverter {
        structure,
        patch,
        x: x.clone(),
        y: y.clone(),
        duration,
        opts: *opts,
    };
    let mut psi = DVector::zeros(m);
    let mut r = structure.chart_difference(y, x);
    let mut iterations = 0;
    let done = |psi: DVector<f64>, r: &Vector, iterations, inv: Inverter| SectionParams {
        eps_m: signum0(psi[m - 1]),
        psi,
        base: inv.x,
        target: inv.y,
        residual: r.norm(),
        iterations,
        duration: inv.duration,
        patch: inv.patch,
    };
    if r.norm() <= opts.tol {
        return Ok(done(psi, &r, 0, inv));
    }

    // Jacobians for the two sides of psi_m = 0; `None` marks a stale slot.
    let mut jac: Option<DMatrix<f64>> = None;
    let mut fresh = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let candidates: Vec<(DMatrix<f64>, f64)> = match (&jac, psi[m - 1] == 0.0) {
            (Some(j), false) => vec![(j.clone(), signum0(psi[m - 1]))],
            (_, true) => {
                let plus = inv.jacobian(&psi, &r, 1.0)?;
                let minus = inv.jacobian(&psi, &r, -1.0)?;
                fresh = true;
                vec![(plus, 1.0), (minus, -1.0)]
            }
            (None, false) => {
                fresh = true;
                let side = signum0(psi[m - 1]);
                vec![(inv.jacobian(&psi, &r, side)?, side)]
            }
        };

        // Sign exploration: prefer steps that stay on the side whose
        // one-sided Jacobian produced them.
        let mut steps: Vec<(DVector<f64>, DMatrix<f64>, bool)> = candidates
            .into_iter()
            .filter_map(|(j, side)| {
                let d = newton_step(&j, &r)?;
                let consistent = psi[m - 1] != 0.0 || d[m - 1] == 0.0 || signum0(d[m - 1]) == side;
                Some((d, j, consistent))
            })
            .collect();
        steps.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.norm().partial_cmp(&b.0.norm()).unwrap()));

        let mut accepted = None;
        'outer: for (d, j, _) in &steps {
            let mut t = 1.0;
            while t >= 1.0 / 1024.0 {
                let trial = &psi + d * t;
                if let Ok(rt) = inv.residual(&trial) {
                    if rt.norm() < (1.0 - 1e-4 * t) * r.norm() {
                        accepted = Some((trial, rt, j.clone()));
                        break 'outer;
                    }
                }
                t *= 0.5;
            }
        }

        let Some((next, rn, j)) = accepted else {
            if fresh {
                return Err(Error::OutsideLocality(format!(
                    "line search collapsed at residual {:e}",
                    r.norm()
                )));
            }
            jac = None;
            continue;
        };
        let s = &next - &psi;
        let crossed = signum0(next[m - 1]) != signum0(psi[m - 1]);
        if crossed {
            jac = None;
        } else {
            // Broyden rank-one update
            let ds = s.norm_squared();
            let upd = (&rn - &r - &j * &s) * s.transpose() / ds;
            jac = Some(j + upd);
            fresh = false;
        }
        psi = next;
        r = rn;
        if r.norm() <= opts.tol {
            return Ok(done(psi, &r, iterations, inv));
        }
    }
    Err(Error::NoConvergence {
        iterations,
        residual: r.norm(),
    })
}

/// `sigma(x, y)`.
pub fn section(structure: &SubRiemannianStructure, x: &Point, y: &Point) -> Result<AdmissibleControl> {
    Ok(section_with(structure, x, y, 1.0, &SolverOptions::default())?.0)
}

/// `sigma` for a window of length `duration` inside a concatenation.
pub fn section_with_duration(structure: &SubRiemannianStructure, x: &Point, y: &Point, duration: f64) -> Result<AdmissibleControl> {
    Ok(section_with(structure, x, y, duration, &SolverOptions::default())?.0)
}

/// `sigma(x, y)` with its solver record. Pieces `j < m - 1` carry
/// `xi = |psi_j|`, `alpha = sign(psi_j) a_j`; the last four carry
/// `xi = sqrt|psi_m|` and `(-eps a_1, -a_2, eps a_1, a_2)`, where `a_j` are
/// the frame coefficients of `Y_j` along the realized curve.
pub fn section_with(
    structure: &SubRiemannianStructure,
    x: &Point,
    y: &Point,
    duration: f64,
    opts: &SolverOptions,
) -> Result<(AdmissibleControl, SectionParams)> {
    let params = solve_psi_with(structure, x, y, duration, opts)?;
    let k = structure.constants()?.k;
    let d = structure.frame_len();
    if params.psi.iter().all(|&v| v == 0.0) {
        return Ok((AdmissibleControl::zero(d, k), params));
    }
    let word = FlowWord::from_psi(&params.psi, duration);
    let path = flow_word_path(&params.patch, x, &word, opts.steps)?;
    let n = word.len();
    let mut pieces = Vec::with_capacity(n);
    for (seg, nodes) in word.segments.iter().zip(&path) {
        if seg.xi == 0.0 {
            pieces.push(ControlPiece::zero(d));
            continue;
        }
        let j = seg.frame_index.expect("word segments carry a section");
        let factor = seg.sign * signum0(seg.xi);
        let alpha = nodes
            .iter()
            .map(|p| Ok(params.patch.coefficients(j, p)? * factor))
            .collect::<Result<Vec<_>>>()?;
        pieces.push(ControlPiece {
            xi: seg.xi.abs(),
            alpha,
        });
    }
    let mut breakpoints: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    breakpoints[n] = 1.0;
    let control = AdmissibleControl::new(breakpoints, pieces, k)?;
    control.validate()?;
    Ok((control, params))
}

/// `omega_x(4 X0~ - [Y~_1, Y~_2])`.
pub fn rank_margin(structure: &SubRiemannianStructure, x: &Point) -> Result<f64> {
    let patch = structure.local_frame(x)?;
    let n = structure.dim() as f64 + 3.0;
    let w = structure.omega(x);
    let x0 = patch.drift(x);
    let b = patch.bracket(0, 1, x);
    Ok(w.dot(&(x0 * (4.0 / n) - b / (n * n))))
}

/// Lower bound `(lambda - 4 (m + 3) Omega) / (m + 3)^2` of the rank margin,
/// with `lambda` the rescaled bracket constant.
pub fn rank_margin_floor(structure: &SubRiemannianStructure) -> Result<f64> {
    let c = structure.constants()?;
    let n = structure.dim() as f64 + 3.0;
    let scale = structure.frame_scale()?;
    let lambda = scale * scale * c.lambda_raw;
    Ok((lambda - 4.0 * n * c.omega_sup) / (n * n))
}

/// Distance between the four-factor word with `(xi1, xi2)` and the flow of
/// its second-order expansion `2 (xi1^2 + xi2^2) X0~ + xi1 xi2 [Y~_1, Y~_2]`
/// (segments applied in time order, first factor first).
pub fn bch_residual(structure: &SubRiemannianStructure, x: &Point, xi1: f64, xi2: f64) -> Result<f64> {
    let patch = structure.local_frame(x)?;
    let word = FlowWord {
        segments: FlowWord::commutator(xi1, xi2).to_vec(),
        duration: 1.0,
    };
    let q = word_endpoint(&patch, x, &word, 4 * FLOW_STEPS)?;
    let n = structure.dim() as f64 + 3.0;
    let a = 2.0 * (xi1 * xi1 + xi2 * xi2) / n;
    let c = xi1 * xi2 / (n * n);
    let single = if a == 0.0 && c == 0.0 {
        x.clone()
    } else {
        flow(&patch, x, 4 * FLOW_STEPS, |p| patch.drift(p) * a + patch.bracket(0, 1, p) * c)?
            .pop()
            .unwrap()
    };
    Ok(structure.chart_distance(&q, &single))
}

/// Least-squares slope of `log residual` against `log |xi|` over
/// `xi1 = xi2` on a log grid.
pub fn bch_scan(structure: &SubRiemannianStructure, x: &Point, lo: f64, hi: f64, samples: usize) -> Result<(Vec<(f64, f64)>, f64)> {
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = i as f64 / (samples - 1).max(1) as f64;
        let norm = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
        let xi = norm / 2f64.sqrt();
        rows.push((norm, bch_residual(structure, x, xi, xi)?));
    }
    Ok((rows.clone(), loglog_slope(&rows)))
}

pub fn loglog_slope(rows: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.0 > 0.0 && r.1 > 0.0)
        .map(|r| (r.0.ln(), r.1.ln()))
        .collect();
    let n = pts.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

type RadiusKey = (String, bool, Vec<i64>);

fn radius_cache() -> &'static Mutex<HashMap<RadiusKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<RadiusKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Random unit vector.
pub(crate) fn random_direction(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Largest radius on the ladder `patch_radius / 2^k` for which Broyden from
/// `psi = 0` reaches 20 seeded random targets at that distance. Cached per
/// model and center (quantized to 1e-3).
pub fn locality_radius(structure: &SubRiemannianStructure, x: &Point) -> Result<f64> {
    let key: RadiusKey = (
        structure.name().to_string(),
        structure.rescaling(),
        x.iter().map(|v| (v * 1e3).round() as i64).collect(),
    );
    if let Some(r) = radius_cache().lock().unwrap().get(&key) {
        return Ok(*r);
    }
    let patch = structure.local_frame(x)?;
    let m = structure.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let dirs: Vec<DVector<f64>> = (0..20).map(|_| random_direction(&mut rng, m)).collect();
    let mut r = patch.radius / 2.0;
    let mut found = None;
    for _ in 0..10 {
        let ok = dirs.iter().all(|d| {
            let y = x + d * r;
            solve_psi(structure, x, &y).is_ok()
        });
        if ok {
            found = Some(r);
            break;
        }
        r *= 0.5;
    }
    let r = found.ok_or_else(|| Error::OutsideLocality(format!("no calibrated radius at {:?}", x.as_slice())))?;
    radius_cache().lock().unwrap().insert(key, r);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanOptions {
    /// Largest number of legs.
    pub budget: usize,
    pub max_depth: usize,
    pub solver: SolverOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            budget: 64,
            max_depth: 10,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanLeg {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub duration: f64,
    pub psi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub control: AdmissibleControl,
    pub legs: Vec<PlanLeg>,
    /// Chart distance between the simulated endpoint and the target.
    pub residual: f64,
    pub endpoint: Point,
}

fn locality_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::NoConvergence { .. } | Error::OutsideLocality(_) | Error::PatchEscape { .. } | Error::BlowUp { .. }
    )
}

fn plan_node(
    structure: &SubRiemannianStructure,
    a: &Point,
    b: &Point,
    depth: usize,
    opts: &PlanOptions,
    legs: &mut Vec<PlanLeg>,
) -> Result<AdmissibleControl> {
    let duration = 0.5f64.powi(depth as i32);
    if legs.len() + 1 > opts.budget {
        return Err(Error::BudgetExceeded { legs: opts.budget });
    }
    match section_with(structure, a, b, duration, &opts.solver) {
        Ok((control, params)) => {
            legs.push(PlanLeg {
                from: a.iter().copied().collect(),
                to: b.iter().copied().collect(),
                duration,
                psi: params.psi.iter().copied().collect(),
                residual: params.residual,
                iterations: params.iterations,
            });
            Ok(control)
        }
        Err(e) if locality_failure(&e) && depth < opts.max_depth => {
            let mid = a + structure.chart_difference(a, b) * 0.5;
            let left = plan_node(structure, a, &mid, depth + 1, opts, legs)?;
            let right = plan_node(structure, &mid, b, depth + 1, opts, legs)?;
            concatenate(&left, &right)
        }
        Err(e) => Err(e),
    }
}

/// Bisects the chart segment from `x` to `y` until every leg has a
/// cross-section at the speed its concatenation window imposes.
pub fn plan(structure: &SubRiemannianStructure, x: &Point, y: &Point, budget: usize) -> Result<AdmissibleControl> {
    Ok(plan_with(
        structure,
        x,
        y,
        &PlanOptions {
            budget,
            ..PlanOptions::default()
        },
    )?
    .control)
}

pub fn plan_with(structure: &SubRiemannianStructure, x: &Point, y: &Point, opts: &PlanOptions) -> Result<Plan> {
    let k = structure.constants()?.k;
    if structure.chart_distance(x, y) == 0.0 {
        return Ok(Plan {
            control: AdmissibleControl::zero(structure.frame_len(), k),
            legs: Vec::new(),
            residual: 0.0,
            endpoint: x.clone(),
        });
    }
    let mut legs = Vec::new();
    let control = plan_node(structure, x, y, 0, opts, &mut legs)?;
    let (_, end) = endpoint_with(structure, x, &control, &SolveOptions::default())?;
    Ok(Plan {
        residual: structure.chart_distance(&end, y),
        control,
        legs,
        endpoint: end,
    })
}
