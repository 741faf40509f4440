//! Corank-one sub-Riemannian structures given by a one-form, a metric and a
//! spanning frame of the kernel distribution.
//!
//! A structure is a single chart of R^m (optionally periodic per coordinate)
//! carrying
//!
//! * a nowhere vanishing one-form `omega`, whose kernel is the distribution,
//! * a Riemannian metric `g0`,
//! * `d >= m - 1` sections spanning `ker omega` (the images of an orthonormal
//!   frame of the free bundle).
//!
//! From these we derive the drift `X0` (the unit normal with
//! `omega(X0) = -|omega|`), rescaled local frames of the distribution and
//! the constants `Omega = sup |omega|`, `lambda = inf domega(Y1, Y2)` and
//! `K = sqrt(5 (m + 3) Omega / lambda)`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = DVector<f64>;
pub type Vector = DVector<f64>;
pub type Covector = DVector<f64>;

/// Raw geometric data of a structure in chart coordinates.
pub trait Fields: Send + Sync {
    fn name(&self) -> &str;

    /// Chart dimension `m`.
    fn dim(&self) -> usize;

    /// Number `d` of spanning sections.
    fn frame_len(&self) -> usize;

    fn omega(&self, x: &Point) -> Covector;

    fn metric(&self, x: &Point) -> DMatrix<f64>;

    /// Spanning sections as the columns of an `m x d` matrix.
    fn frame(&self, x: &Point) -> DMatrix<f64>;

    /// Closed-form `domega` as the antisymmetric matrix
    /// `D_ab = d_a omega_b - d_b omega_a`.
    fn d_omega(&self, _x: &Point) -> Option<DMatrix<f64>> {
        None
    }

    /// Closed-form bracket `[frame_i, frame_j]`.
    fn frame_bracket(&self, _i: usize, _j: usize, _x: &Point) -> Option<Vector> {
        None
    }

    /// Closed-form drift field.
    fn drift(&self, _x: &Point) -> Option<Vector> {
        None
    }

    fn periods(&self) -> Vec<Option<f64>> {
        vec![None; self.dim()]
    }

    /// Region sampled when certifying the structure. For periodic
    /// coordinates this is one fundamental period.
    fn sampling_box(&self) -> Vec<(f64, f64)>;

    /// Known `(Omega, lambda_raw)`.
    fn analytic_constants(&self) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryConfig {
    /// Grid points per axis for the constants certificate.
    pub grid_resolution: usize,
    /// Initial radius of frame patches (chart units).
    pub patch_radius: f64,
    /// How many times a patch radius may be halved.
    pub patch_shrink_steps: usize,
    /// `|omega|` below this is treated as zero.
    pub degenerate_threshold: f64,
    /// `domega` on the distribution below this counts as a step-2 failure.
    pub step2_threshold: f64,
    /// Relative tolerance for `omega(v) = 0`.
    pub horizontal_tol: f64,
    /// Relative growth of the `Omega` estimate under refinement that flags
    /// an unbounded form.
    pub unbounded_growth: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 9,
            patch_radius: 0.25,
            patch_shrink_steps: 6,
            degenerate_threshold: 1e-12,
            step2_threshold: 1e-8,
            horizontal_tol: 1e-8,
            unbounded_growth: 0.05,
        }
    }
}

/// Grid-estimated values, kept next to whatever constants are in use.
#[derive(Debug, Clone, Serialize)]
pub struct GridEstimate {
    pub omega_sup: f64,
    pub lambda_raw: f64,
    /// Minimum over the grid of the largest `|omega ^ domega|` component.
    pub step2_min: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub omega_sup: f64,
    pub lambda_raw: f64,
    pub k: f64,
    pub analytic: bool,
    pub grid: GridEstimate,
}

impl Constants {
    /// `K = sqrt(5 (m + 3) Omega / lambda)`.
    pub fn k_from(m: usize, omega_sup: f64, lambda_raw: f64) -> f64 {
        (5.0 * (m as f64 + 3.0) * omega_sup / lambda_raw).sqrt()
    }
}

#[derive(Clone)]
pub struct SubRiemannianStructure {
    fields: Arc<dyn Fields>,
    config: GeometryConfig,
    rescale: bool,
    constants: Arc<OnceLock<Constants>>,
}

impl fmt::Debug for SubRiemannianStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubRiemannianStructure")
            .field("name", &self.fields.name())
            .field("m", &self.dim())
            .field("d", &self.frame_len())
            .field("rescale", &self.rescale)
            .field("constants", &self.constants.get())
            .finish()
    }
}

impl SubRiemannianStructure {
    /// Wraps raw fields without certifying them.
    pub fn new(fields: Arc<dyn Fields>, config: GeometryConfig) -> Self {
        Self {
            fields,
            config,
            rescale: true,
            constants: Arc::new(OnceLock::new()),
        }
    }

    /// Builds the structure and certifies it, caching the constants.
    pub fn certified(fields: Arc<dyn Fields>, config: GeometryConfig) -> Result<Self> {
        let s = Self::new(fields, config);
        s.constants()?;
        Ok(s)
    }

    /// Same structure with the `K`-rescaling of local frames switched on or
    /// off. With rescaling off, local frames have unit length.
    pub fn with_rescaling(&self, on: bool) -> Self {
        let mut s = self.clone();
        s.rescale = on;
        s
    }

    pub fn rescaling(&self) -> bool {
        self.rescale
    }

    pub fn name(&self) -> &str {
        self.fields.name()
    }

    pub fn fields(&self) -> &Arc<dyn Fields> {
        &self.fields
    }

    pub fn config(&self) -> &GeometryConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.fields.dim()
    }

    pub fn frame_len(&self) -> usize {
        self.fields.frame_len()
    }

    pub fn periods(&self) -> Vec<Option<f64>> {
        self.fields.periods()
    }

    pub fn omega(&self, x: &Point) -> Covector {
        self.fields.omega(x)
    }

    pub fn metric(&self, x: &Point) -> DMatrix<f64> {
        self.fields.metric(x)
    }

    pub fn frame(&self, x: &Point) -> DMatrix<f64> {
        self.fields.frame(x)
    }

    /// `|omega_x|` in the dual metric.
    pub fn omega_norm(&self, x: &Point) -> f64 {
        let w = self.omega(x);
        raise(&self.metric(x), &w).dot(&w).max(0.0).sqrt()
    }

    /// Metric inner product at `x`.
    pub fn inner(&self, x: &Point, v: &Vector, w: &Vector) -> f64 {
        (self.metric(x) * w).dot(v)
    }

    /// Cached constants, computed with the default sampling on first use.
    pub fn constants(&self) -> Result<&Constants> {
        if let Some(c) = self.constants.get() {
            return Ok(c);
        }
        let c = self.compute_constants(self.config.grid_resolution)?;
        let _ = self.constants.set(c);
        Ok(self.constants.get().expect("constants just set"))
    }

    /// Factor applied to unit local frames: `K` with rescaling on, else 1.
    pub fn frame_scale(&self) -> Result<f64> {
        if self.rescale {
            Ok(self.constants()?.k)
        } else {
            Ok(1.0)
        }
    }

    /// Drift `X0(x)`: the unit normal to the distribution with
    /// `omega(X0) = -|omega|`.
    pub fn drift_field(&self, x: &Point) -> Result<Vector> {
        if let Some(v) = self.fields.drift(x) {
            return Ok(v);
        }
        self.drift_field_raised(x)
    }

    /// Drift computed by raising `omega` with the metric, ignoring any
    /// closed-form override.
    pub fn drift_field_raised(&self, x: &Point) -> Result<Vector> {
        let w = self.omega(x);
        let raised = raise(&self.metric(x), &w);
        let norm = raised.dot(&w).max(0.0).sqrt();
        if !(norm > self.config.degenerate_threshold) {
            return Err(Error::DegenerateForm {
                point: x.iter().copied().collect(),
                norm,
            });
        }
        Ok(-raised / norm)
    }

    /// Antisymmetric matrix of `domega` at `x`.
    pub fn d_omega_matrix(&self, x: &Point) -> DMatrix<f64> {
        if let Some(d) = self.fields.d_omega(x) {
            return d;
        }
        let m = self.dim();
        let h = fd_step(x);
        let mut jac = DMatrix::zeros(m, m);
        for a in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[a] += h;
            xm[a] -= h;
            let diff = (self.omega(&xp) - self.omega(&xm)) / (2.0 * h);
            for b in 0..m {
                jac[(a, b)] = diff[b];
            }
        }
        &jac - jac.transpose()
    }

    /// `domega_x(v, w)`.
    pub fn d_omega(&self, x: &Point, v: &Vector, w: &Vector) -> f64 {
        (self.d_omega_matrix(x) * w).dot(v)
    }

    /// Largest coordinate component of the 3-form `omega ^ domega` at `x`.
    pub fn omega_wedge_d_omega(&self, x: &Point) -> f64 {
        let w = self.omega(x);
        let d = self.d_omega_matrix(x);
        let m = self.dim();
        let mut best = 0.0f64;
        for a in 0..m {
            for b in a + 1..m {
                for c in b + 1..m {
                    let v = w[a] * d[(b, c)] + w[b] * d[(c, a)] + w[c] * d[(a, b)];
                    best = best.max(v.abs());
                }
            }
        }
        best
    }

    /// Step-2 certificate at a point: `domega` restricted to the distribution
    /// does not vanish. Returns the largest `|domega(Y_i, Y_j)|` over a unit
    /// frame of the distribution.
    pub fn verify_step2_at(&self, x: &Point) -> Result<f64> {
        let recipe = FrameRecipe::build(self, x)?;
        let ys = recipe.unit_sections(self, x)?;
        let d = self.d_omega_matrix(x);
        let mut best = 0.0f64;
        for i in 0..ys.len() {
            for j in i + 1..ys.len() {
                best = best.max((&d * &ys[j]).dot(&ys[i]).abs());
            }
        }
        if best <= self.config.step2_threshold {
            return Err(Error::Step2Violation {
                point: x.iter().copied().collect(),
                detail: format!("domega vanishes on the distribution (max {best:e})"),
            });
        }
        Ok(best)
    }

    /// Step-2 certificate over the sampling grid; returns the minimum of the
    /// largest `|omega ^ domega|` component.
    pub fn verify_step2(&self) -> Result<f64> {
        let mut min = f64::INFINITY;
        for x in self.sampling_grid(self.config.grid_resolution) {
            self.verify_step2_at(&x)?;
            min = min.min(self.omega_wedge_d_omega(&x));
        }
        Ok(min)
    }

    /// Uniform grid over the sampling box, `n` points per axis. Periodic axes
    /// drop the duplicated right end.
    pub fn sampling_grid(&self, n: usize) -> Vec<Point> {
        let bx = self.fields.sampling_box();
        let periods = self.periods();
        let n = n.max(2);
        let axes: Vec<Vec<f64>> = bx
            .iter()
            .zip(&periods)
            .map(|(&(lo, hi), p)| match p {
                Some(_) => (0..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect(),
                None => (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect(),
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(out.len() * axis.len());
            for prefix in &out {
                for &v in axis {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(DVector::from_vec).collect()
    }

    /// Grid estimate of `(Omega, lambda_raw, K)`; closed-form constants of the
    /// fields, when present, take precedence over the estimate.
    pub fn compute_constants(&self, resolution: usize) -> Result<Constants> {
        let m = self.dim();
        let grid = self.sampling_grid(resolution);
        let mut omega_sup = 0.0f64;
        let mut lambda_raw = f64::INFINITY;
        let mut step2_min = f64::INFINITY;
        for x in &grid {
            let n = self.omega_norm(x);
            if !(n > self.config.degenerate_threshold) {
                return Err(Error::DegenerateForm {
                    point: x.iter().copied().collect(),
                    norm: n,
                });
            }
            omega_sup = omega_sup.max(n);
            let recipe = FrameRecipe::build(self, x)?;
            let ys = recipe.unit_sections(self, x)?;
            let d = self.d_omega_matrix(x);
            let mut best = f64::NEG_INFINITY;
            for i in 0..ys.len() {
                for j in 0..ys.len() {
                    if i != j {
                        best = best.max((&d * &ys[j]).dot(&ys[i]));
                    }
                }
            }
            if best <= self.config.step2_threshold {
                return Err(Error::Step2Violation {
                    point: x.iter().copied().collect(),
                    detail: format!("no frame pair with positive domega (best {best:e})"),
                });
            }
            lambda_raw = lambda_raw.min(best);
            step2_min = step2_min.min(self.omega_wedge_d_omega(x));
        }

        let fine = self
            .sampling_grid(2 * resolution)
            .iter()
            .map(|x| self.omega_norm(x))
            .fold(0.0f64, f64::max);
        if !fine.is_finite() || fine > omega_sup * (1.0 + self.config.unbounded_growth) {
            return Err(Error::UnboundedForm {
                coarse: omega_sup,
                fine,
            });
        }

        let estimate = GridEstimate {
            omega_sup,
            lambda_raw,
            step2_min,
            points: grid.len(),
        };
        let (omega_sup, lambda_raw, analytic) = match self.fields.analytic_constants() {
            Some((o, l)) => (o, l, true),
            None => (omega_sup, lambda_raw, false),
        };
        Ok(Constants {
            omega_sup,
            lambda_raw,
            k: Constants::k_from(m, omega_sup, lambda_raw),
            analytic,
            grid: estimate,
        })
    }

    /// Local frame of the distribution around `x`, ordered so that
    /// `domega(Y1, Y2) > 0` on the patch and rescaled by `K`.
    pub fn local_frame(&self, x: &Point) -> Result<FramePatch> {
        let m = self.dim();
        let recipe = FrameRecipe::build(self, x)?;
        let scale = self.frame_scale()?;
        let floor = if self.rescale {
            let c = self.constants()?;
            4.0 * (m as f64 + 3.0) * c.omega_sup
        } else {
            self.config.step2_threshold
        };

        let mut radius = self.config.patch_radius;
        let mut last_best = f64::NEG_INFINITY;
        for _ in 0..=self.config.patch_shrink_steps {
            let samples = patch_samples(x, radius);
            let (pair, value) = recipe.best_pair(self, &samples)?;
            let lambda_local = scale * scale * value;
            last_best = lambda_local;
            if value > self.config.step2_threshold && lambda_local > floor {
                let mut order: Vec<usize> = vec![pair.0, pair.1];
                order.extend((0..m - 1).filter(|&i| i != pair.0 && i != pair.1));
                let recipe = recipe.reordered(&order);
                let aligned = recipe.model_aligned(self, &samples);
                return Ok(FramePatch {
                    fields: self.fields.clone(),
                    center: x.clone(),
                    radius,
                    periods: self.periods(),
                    recipe,
                    bracket_pair: pair,
                    lambda_local,
                    scale,
                    aligned,
                });
            }
            radius *= 0.5;
        }
        Err(Error::Step2Violation {
            point: x.iter().copied().collect(),
            detail: format!(
                "best patch infimum of domega(Y1, Y2) is {last_best:e}, needs more than {floor:e}"
            ),
        })
    }

    /// Least-norm coefficients `u` with `sum u_i frame_i(x) = v`.
    pub fn minimal_coefficients(&self, x: &Point, v: &Vector) -> Result<DVector<f64>> {
        let w = self.omega(x);
        let defect = w.dot(v).abs() / w.norm().max(f64::MIN_POSITIVE);
        if defect > self.config.horizontal_tol * v.norm().max(1.0) {
            return Err(Error::NotHorizontal { defect });
        }
        least_norm(&self.frame(x), v, self.dim() - 1)
    }

    /// `b - a` with periodic coordinates reduced to the symmetric range.
    pub fn chart_difference(&self, a: &Point, b: &Point) -> Vector {
        let mut d = b - a;
        for (i, p) in self.periods().iter().enumerate() {
            if let Some(p) = p {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d
    }

    pub fn chart_distance(&self, a: &Point, b: &Point) -> f64 {
        self.chart_difference(a, b).norm()
    }

    /// Bracket of two frame sections, closed form when available.
    pub fn frame_bracket(&self, i: usize, j: usize, x: &Point) -> Vector {
        if let Some(b) = self.fields.frame_bracket(i, j, x) {
            return b;
        }
        let f = |k: usize| {
            let fields = self.fields.clone();
            move |p: &Point| fields.frame(p).column(k).into_owned()
        };
        lie_bracket(&f(i), &f(j), x)
    }
}

/// Least-norm solution of `a u = v` by pseudoinverse; `needed` is the rank
/// the columns must reach.
pub fn least_norm(a: &DMatrix<f64>, v: &Vector, needed: usize) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = 1e-10 * smax.max(f64::MIN_POSITIVE);
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < needed {
        return Err(Error::RankDeficiency { rank, needed });
    }
    if v.norm() == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    svd.solve(v, cutoff).map_err(|_| Error::RankDeficiency { rank, needed })
}

/// Metric raise `g^{-1} w`.
fn raise(g: &DMatrix<f64>, w: &Covector) -> Vector {
    match g.clone().cholesky() {
        Some(ch) => ch.solve(w),
        None => g.clone().lu().solve(w).unwrap_or_else(|| w.clone()),
    }
}

/// Finite-difference step `cbrt(eps) (1 + |x|)`.
pub fn fd_step(x: &Point) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.norm())
}

/// `[V, W](x) = DW(x) V(x) - DV(x) W(x)` by central differences.
pub fn lie_bracket<V, W>(v: &V, w: &W, x: &Point) -> Vector
where
    V: Fn(&Point) -> Vector + ?Sized,
    W: Fn(&Point) -> Vector + ?Sized,
{
    let vx = v(x);
    let wx = w(x);
    directional(w, x, &vx) - directional(v, x, &wx)
}

/// `DF(x) dir` by a central difference along the unit direction.
fn directional<F>(f: &F, x: &Point, dir: &Vector) -> Vector
where
    F: Fn(&Point) -> Vector + ?Sized,
{
    let n = dir.norm();
    if n == 0.0 {
        return DVector::zeros(x.len());
    }
    let h = fd_step(x);
    let unit = dir / n;
    let fp = f(&(x + &unit * h));
    let fm = f(&(x - &unit * h));
    (fp - fm) * (n / (2.0 * h))
}

fn patch_samples(center: &Point, radius: f64) -> Vec<Point> {
    let m = center.len();
    let total = 3usize.pow(m as u32);
    (0..total)
        .map(|mut code| {
            let mut p = center.clone();
            for i in 0..m {
                let digit = code % 3;
                code /= 3;
                p[i] += (digit as f64 - 1.0) * radius;
            }
            p
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Frame(usize),
    Coord(usize),
}

/// Deterministic recipe for a local orthonormal frame: which raw vectors to
/// project onto the distribution and orthonormalize, and in which order to
/// present the results.
#[derive(Debug, Clone)]
struct FrameRecipe {
    sources: Vec<Source>,
    order: Vec<usize>,
}

impl FrameRecipe {
    /// Pivots frame sections first, then coordinate fields, keeping each one
    /// that adds a new direction after projection.
    fn build(s: &SubRiemannianStructure, x: &Point) -> Result<Self> {
        let m = s.dim();
        let needed = m - 1;
        let x0 = s.drift_field(x)?;
        let g = s.metric(x);
        let w = s.omega(x);
        let frame = s.frame(x);
        let candidates = (0..s.frame_len())
            .map(Source::Frame)
            .chain((0..m).map(Source::Coord));
        let mut kept: Vec<Vector> = Vec::new();
        let mut sources = Vec::new();
        for src in candidates {
            if kept.len() == needed {
                break;
            }
            let raw = source_vector(src, &frame, m);
            let raw_norm = (&g * &raw).dot(&raw).sqrt();
            if raw_norm == 0.0 {
                continue;
            }
            let mut v = project(&raw, &w, &x0);
            for k in &kept {
                let c = (&g * k).dot(&v);
                v -= k * c;
            }
            let n = (&g * &v).dot(&v).max(0.0).sqrt();
            if n > 1e-8 * raw_norm {
                kept.push(v / n);
                sources.push(src);
            }
        }
        if kept.len() < needed {
            return Err(Error::RankDeficiency {
                rank: kept.len(),
                needed,
            });
        }
        Ok(Self {
            sources,
            order: (0..needed).collect(),
        })
    }

    fn reordered(&self, order: &[usize]) -> Self {
        Self {
            sources: self.sources.clone(),
            order: order.iter().map(|&i| self.order[i]).collect(),
        }
    }

    /// Unit sections at `x`, in presentation order.
    fn unit_sections(&self, s: &SubRiemannianStructure, x: &Point) -> Result<Vec<Vector>> {
        unit_sections(&*s.fields, &s.drift_field(x)?, &self.sources, &self.order, x)
    }

    /// Pair `(i, j)` maximising the patch infimum of `domega(Y_i, Y_j)`.
    /// Ties within 1% of the best go to the lowest index pair.
    fn best_pair(
        &self,
        s: &SubRiemannianStructure,
        samples: &[Point],
    ) -> Result<((usize, usize), f64)> {
        let n = self.sources.len();
        let mut infima = vec![vec![f64::INFINITY; n]; n];
        for p in samples {
            let ys = self.unit_sections(s, p)?;
            let d = s.d_omega_matrix(p);
            for i in 0..n {
                for j in i + 1..n {
                    let v = (&d * &ys[j]).dot(&ys[i]);
                    infima[i][j] = infima[i][j].min(v);
                    infima[j][i] = infima[j][i].min(-v);
                }
            }
        }
        let inf = &infima;
        let candidates: Vec<((usize, usize), f64)> = (0..n)
            .flat_map(|i| (i + 1..n).flat_map(move |j| [((i, j), inf[i][j]), ((j, i), inf[j][i])]))
            .collect();
        let best = candidates
            .iter()
            .map(|c| c.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let chosen = candidates
            .iter()
            .filter(|c| c.1 >= best - 0.01 * best.abs())
            .min_by_key(|c| (c.0 .0.min(c.0 .1), c.0 .0.max(c.0 .1), c.0 .0 > c.0 .1))
            .copied()
            .expect("at least one pair");
        Ok(chosen)
    }

    /// True when every section is (up to tolerance) a unit frame section of
    /// the fields, so closed-form brackets apply.
    fn model_aligned(&self, s: &SubRiemannianStructure, samples: &[Point]) -> bool {
        if !self.sources.iter().all(|src| matches!(src, Source::Frame(_))) {
            return false;
        }
        samples.iter().all(|p| {
            let Ok(ys) = self.unit_sections(s, p) else {
                return false;
            };
            let frame = s.frame(p);
            self.order.iter().zip(&ys).all(|(&k, y)| {
                let Source::Frame(i) = self.sources[k] else {
                    return false;
                };
                (frame.column(i) - y).norm() <= 1e-12 * (1.0 + y.norm())
            })
        })
    }
}

fn source_vector(src: Source, frame: &DMatrix<f64>, m: usize) -> Vector {
    match src {
        Source::Frame(i) => frame.column(i).into_owned(),
        Source::Coord(i) => {
            let mut e = DVector::zeros(m);
            e[i] = 1.0;
            e
        }
    }
}

/// Projection onto `ker omega` along the drift.
fn project(v: &Vector, w: &Covector, x0: &Vector) -> Vector {
    let c = w.dot(v) / w.dot(x0);
    v - x0 * c
}

fn unit_sections(
    fields: &dyn Fields,
    x0: &Vector,
    sources: &[Source],
    order: &[usize],
    x: &Point,
) -> Result<Vec<Vector>> {
    let m = fields.dim();
    let g = fields.metric(x);
    let w = fields.omega(x);
    let frame = fields.frame(x);
    let mut kept: Vec<Vector> = Vec::with_capacity(sources.len());
    for &src in sources {
        let mut v = project(&source_vector(src, &frame, m), &w, x0);
        for k in &kept {
            let c = (&g * k).dot(&v);
            v -= k * c;
        }
        let n = (&g * &v).dot(&v).max(0.0).sqrt();
        if !(n > 0.0) {
            return Err(Error::RankDeficiency {
                rank: kept.len(),
                needed: sources.len(),
            });
        }
        kept.push(v / n);
    }
    Ok(order.iter().map(|&i| kept[i].clone()).collect())
}

/// Local frame `Y_1 .. Y_{m-1}` of the distribution on a chart ball, with
/// `domega(Y_1, Y_2)` bounded below on the ball.
#[derive(Clone)]
pub struct FramePatch {
    fields: Arc<dyn Fields>,
    pub center: Point,
    pub radius: f64,
    periods: Vec<Option<f64>>,
    recipe: FrameRecipe,
    /// Indices, before reordering, of the pair moved into slots 1 and 2.
    pub bracket_pair: (usize, usize),
    /// Infimum of `domega(Y_1, Y_2)` over the patch samples (rescaled).
    pub lambda_local: f64,
    /// Common length of the sections (`K`, or 1 with rescaling off).
    pub scale: f64,
    aligned: bool,
}

impl fmt::Debug for FramePatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FramePatch")
            .field("center", &self.center.as_slice())
            .field("radius", &self.radius)
            .field("bracket_pair", &self.bracket_pair)
            .field("lambda_local", &self.lambda_local)
            .field("scale", &self.scale)
            .finish()
    }
}

impl FramePatch {
    pub fn len(&self) -> usize {
        self.recipe.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipe.order.is_empty()
    }

    /// Whether the sections coincide with rescaled frame sections of the
    /// structure (closed-form brackets are then used).
    pub fn is_model_aligned(&self) -> bool {
        self.aligned
    }

    /// Drift `X0(x)`.
    pub fn drift(&self, x: &Point) -> Vector {
        match self.fields.drift(x) {
            Some(v) => v,
            None => {
                let w = self.fields.omega(x);
                let raised = raise(&self.fields.metric(x), &w);
                let n = raised.dot(&w).max(0.0).sqrt();
                -raised / n
            }
        }
    }

    /// All sections at `x`.
    pub fn sections(&self, x: &Point) -> Vec<Vector> {
        if self.aligned {
            let frame = self.fields.frame(x);
            return self
                .recipe
                .order
                .iter()
                .map(|&k| match self.recipe.sources[k] {
                    Source::Frame(i) => frame.column(i) * self.scale,
                    Source::Coord(_) => unreachable!("aligned patches only use frame sources"),
                })
                .collect();
        }
        let x0 = self.drift(x);
        unit_sections(&*self.fields, &x0, &self.recipe.sources, &self.recipe.order, x)
            .map(|ys| ys.into_iter().map(|y| y * self.scale).collect())
            .unwrap_or_else(|_| vec![DVector::from_element(x.len(), f64::NAN); self.len()])
    }

    /// Section `Y_j` (zero based) at `x`.
    pub fn section(&self, j: usize, x: &Point) -> Vector {
        if self.aligned {
            let Source::Frame(i) = self.recipe.sources[self.recipe.order[j]] else {
                unreachable!("aligned patches only use frame sources")
            };
            return self.fields.frame(x).column(i) * self.scale;
        }
        self.sections(x).swap_remove(j)
    }

    /// Least-norm frame coefficients of `Y_j(x)`.
    pub fn coefficients(&self, j: usize, x: &Point) -> Result<DVector<f64>> {
        if self.aligned && self.fields.frame_len() == self.len() {
            let Source::Frame(i) = self.recipe.sources[self.recipe.order[j]] else {
                unreachable!("aligned patches only use frame sources")
            };
            let mut a = DVector::zeros(self.fields.frame_len());
            a[i] = self.scale;
            return Ok(a);
        }
        least_norm(&self.fields.frame(x), &self.section(j, x), self.len())
    }

    /// `[Y_a, Y_b](x)`.
    pub fn bracket(&self, a: usize, b: usize, x: &Point) -> Vector {
        if self.aligned {
            let src = |j: usize| match self.recipe.sources[self.recipe.order[j]] {
                Source::Frame(i) => i,
                Source::Coord(_) => unreachable!(),
            };
            if let Some(v) = self.fields.frame_bracket(src(a), src(b), x) {
                return v * (self.scale * self.scale);
            }
        }
        lie_bracket(&|p: &Point| self.section(a, p), &|p: &Point| self.section(b, p), x)
    }

    /// Chart distance from the patch center.
    pub fn distance_from_center(&self, x: &Point) -> f64 {
        let mut d = x - &self.center;
        for (i, p) in self.periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d.norm()
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.distance_from_center(x) <= self.radius
    }
}
