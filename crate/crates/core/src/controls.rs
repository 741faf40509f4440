//! Admissible controls: piecewise data `(xi_J, alpha_J)` on a partition of
//! `[0, 1]` with `u_0 = xi_J^2` and `u_i = xi_J alpha_Ji`, `|alpha_J| <= K`.
//!
//! `alpha_J` is stored as uniform samples over its piece and linearly
//! interpolated. Pieces are left-closed and right-open, except the last one
//! which is closed at 1.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default number of `alpha` samples per piece.
pub const DEFAULT_SAMPLES: usize = 64;

/// Relative slack allowed on the `|alpha| <= K` bound.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPiece {
    pub xi: f64,
    /// Uniform samples of `alpha` over the piece (one sample = constant).
    pub alpha: Vec<DVector<f64>>,
}

impl ControlPiece {
    pub fn zero(d: usize) -> Self {
        Self {
            xi: 0.0,
            alpha: vec![DVector::zeros(d)],
        }
    }

    pub fn constant(xi: f64, alpha: DVector<f64>) -> Self {
        Self {
            xi,
            alpha: vec![alpha],
        }
    }

    /// `alpha` at relative position `r` in `[0, 1]` of the piece.
    pub fn alpha_at(&self, r: f64) -> DVector<f64> {
        let n = self.alpha.len();
        if n == 1 {
            return self.alpha[0].clone();
        }
        let pos = r.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (pos.floor() as usize).min(n - 2);
        let w = pos - i as f64;
        if w == 0.0 {
            return self.alpha[i].clone();
        }
        &self.alpha[i] * (1.0 - w) + &self.alpha[i + 1] * w
    }

    /// Same piece restricted to the relative window `[a, b]`, resampled with
    /// the same sample count.
    fn window(&self, a: f64, b: f64) -> Self {
        if a == 0.0 && b == 1.0 {
            return self.clone();
        }
        let n = self.alpha.len();
        if n == 1 {
            return self.clone();
        }
        let alpha = (0..n)
            .map(|i| self.alpha_at(a + (b - a) * i as f64 / (n - 1) as f64))
            .collect();
        Self { xi: self.xi, alpha }
    }

    /// Exact restriction to the relative window `[0, b]`, `0 < b < 1`, as
    /// pieces with their relative end points; samples before `b` are kept.
    fn head(&self, b: f64) -> Vec<(f64, Self)> {
        let n = self.alpha.len();
        if n == 1 {
            return vec![(b, self.clone())];
        }
        let pos = b * (n - 1) as f64;
        let i = pos.floor() as usize;
        let node = i as f64 / (n - 1) as f64;
        let kept = Self {
            xi: self.xi,
            alpha: self.alpha[..=i].to_vec(),
        };
        let tail = Self {
            xi: self.xi,
            alpha: vec![self.alpha[i].clone(), self.alpha_at(b)],
        };
        match (i, pos == i as f64) {
            (_, true) => vec![(b, kept)],
            (0, false) => vec![(b, tail)],
            _ => vec![(node, kept), (b, tail)],
        }
    }

    fn sup_alpha_sq(&self) -> f64 {
        self.alpha
            .iter()
            .map(|a| a.norm_squared())
            .fold(0.0, f64::max)
    }
}

/// Norm on `R^{d+1}` used inside `L^p` distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PointNorm {
    #[default]
    Euclidean,
    /// Sum of absolute components.
    Sum,
}

impl PointNorm {
    pub fn apply(self, v: &DVector<f64>) -> f64 {
        match self {
            PointNorm::Euclidean => v.norm(),
            PointNorm::Sum => v.iter().map(|x| x.abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleControl {
    breakpoints: Vec<f64>,
    pieces: Vec<ControlPiece>,
    k_bound: f64,
    d: usize,
}

impl AdmissibleControl {
    /// Checks the shape (partition, piece count, dimensions). The `K` bound
    /// is checked by [`AdmissibleControl::validate`].
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<ControlPiece>, k_bound: f64) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() + 1 != breakpoints.len() {
            return Err(Error::Inadmissible(format!(
                "{} breakpoints for {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(Error::Inadmissible("partition must span [0, 1]".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Inadmissible("breakpoints not strictly increasing".into()));
        }
        let d = pieces[0]
            .alpha
            .first()
            .map(|a| a.len())
            .ok_or_else(|| Error::Inadmissible("piece without samples".into()))?;
        if pieces
            .iter()
            .any(|p| p.alpha.is_empty() || p.alpha.iter().any(|a| a.len() != d))
        {
            return Err(Error::Inadmissible("inconsistent alpha dimensions".into()));
        }
        Ok(Self {
            breakpoints,
            pieces,
            k_bound,
            d,
        })
    }

    /// The constant control 0.
    pub fn zero(d: usize, k_bound: f64) -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            pieces: vec![ControlPiece::zero(d)],
            k_bound,
            d,
        }
    }

    /// One piece with constant `(xi, alpha)`.
    pub fn constant(xi: f64, alpha: DVector<f64>, k_bound: f64) -> Self {
        let d = alpha.len();
        Self {
            breakpoints: vec![0.0, 1.0],
            pieces: vec![ControlPiece::constant(xi, alpha)],
            k_bound,
            d,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[ControlPiece] {
        &self.pieces
    }

    pub fn k_bound(&self) -> f64 {
        self.k_bound
    }

    /// Number `d` of frame coefficients.
    pub fn frame_len(&self) -> usize {
        self.d
    }

    pub fn piece_interval(&self, j: usize) -> (f64, f64) {
        (self.breakpoints[j], self.breakpoints[j + 1])
    }

    /// Index of the piece containing `t` (left-closed, last piece closed).
    pub fn piece_index(&self, t: f64) -> usize {
        let n = self.pieces.len();
        let k = self.breakpoints.partition_point(|&b| b <= t);
        k.saturating_sub(1).min(n - 1)
    }

    /// `(xi^2, xi alpha(t))`.
    pub fn evaluate(&self, t: f64) -> Result<DVector<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfDomain(t));
        }
        Ok(self.evaluate_in(self.piece_index(t), t))
    }

    /// Value at `t` using the data of piece `j` (also at its endpoints).
    pub fn evaluate_in(&self, j: usize, t: f64) -> DVector<f64> {
        let (a, b) = self.piece_interval(j);
        let piece = &self.pieces[j];
        let alpha = piece.alpha_at((t - a) / (b - a));
        let mut out = DVector::zeros(self.d + 1);
        out[0] = piece.xi * piece.xi;
        for i in 0..self.d {
            out[i + 1] = piece.xi * alpha[i];
        }
        out
    }

    /// Whether the control is identically zero.
    pub fn is_zero(&self) -> bool {
        self.pieces.iter().all(|p| p.xi == 0.0)
    }

    /// Full admissibility check.
    pub fn validate(&self) -> Result<()> {
        if self.breakpoints[0] != 0.0 || *self.breakpoints.last().unwrap() != 1.0 {
            return Err(Error::Inadmissible("partition must span [0, 1]".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Inadmissible("breakpoints not strictly increasing".into()));
        }
        let bound = self.k_bound * self.k_bound * (1.0 + BOUND_SLACK);
        for (j, p) in self.pieces.iter().enumerate() {
            if !(p.xi >= 0.0) || !p.xi.is_finite() {
                return Err(Error::Inadmissible(format!("piece {j}: xi = {}", p.xi)));
            }
            if p.alpha.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
                return Err(Error::Inadmissible(format!("piece {j}: non-finite alpha")));
            }
            let sup = p.sup_alpha_sq();
            if sup > bound {
                return Err(Error::Inadmissible(format!(
                    "piece {j}: sup |alpha|^2 = {sup} exceeds K^2 = {}",
                    self.k_bound * self.k_bound
                )));
            }
        }
        Ok(())
    }

    /// Largest `sup |alpha|^2 / K^2` over pieces with `xi > 0`.
    pub fn bound_ratio(&self) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.xi > 0.0)
            .map(|p| p.sup_alpha_sq() / (self.k_bound * self.k_bound))
            .fold(0.0, f64::max)
    }

    /// All times where the control data has a node: breakpoints and `alpha`
    /// sample positions.
    pub fn nodes(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (j, p) in self.pieces.iter().enumerate() {
            let (a, b) = self.piece_interval(j);
            out.push(a);
            let n = p.alpha.len();
            for i in 1..n.saturating_sub(1) {
                out.push(a + (b - a) * i as f64 / (n - 1) as f64);
            }
        }
        out.push(1.0);
        out
    }

    /// Same control with every piece resampled to `samples` alpha values.
    pub fn resampled(&self, samples: usize) -> Self {
        let samples = samples.max(1);
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let alpha = if samples == 1 {
                    vec![p.alpha_at(0.0)]
                } else {
                    (0..samples)
                        .map(|i| p.alpha_at(i as f64 / (samples - 1) as f64))
                        .collect()
                };
                ControlPiece { xi: p.xi, alpha }
            })
            .collect();
        Self {
            pieces,
            ..self.clone()
        }
    }
}

/// `u * v`: `u(2s)` on `[0, 1/2]`, `v(2s - 1)` on `[1/2, 1]`.
pub fn concatenate(u: &AdmissibleControl, v: &AdmissibleControl) -> Result<AdmissibleControl> {
    if u.k_bound != v.k_bound {
        return Err(Error::BoundMismatch(u.k_bound, v.k_bound));
    }
    if u.d != v.d {
        return Err(Error::Inadmissible(format!(
            "frame sizes differ ({} vs {})",
            u.d, v.d
        )));
    }
    let mut breakpoints: Vec<f64> = u.breakpoints.iter().map(|b| b * 0.5).collect();
    breakpoints.extend(v.breakpoints[1..].iter().map(|b| 0.5 + b * 0.5));
    *breakpoints.last_mut().unwrap() = 1.0;
    let mut pieces = u.pieces.clone();
    pieces.extend(v.pieces.iter().cloned());
    Ok(AdmissibleControl {
        breakpoints,
        pieces,
        k_bound: u.k_bound,
        d: u.d,
    })
}

/// Balanced concatenation tree over a list of controls; returns the control
/// and the time length each input ends up occupying.
pub fn concatenate_all(controls: &[AdmissibleControl]) -> Result<(AdmissibleControl, Vec<f64>)> {
    match controls.len() {
        0 => Err(Error::Inadmissible("nothing to concatenate".into())),
        1 => Ok((controls[0].clone(), vec![1.0])),
        n => {
            let (l, r) = controls.split_at(n / 2);
            let (lc, ld) = concatenate_all(l)?;
            let (rc, rd) = concatenate_all(r)?;
            let mut durations: Vec<f64> = ld.into_iter().map(|d| d * 0.5).collect();
            durations.extend(rd.into_iter().map(|d| d * 0.5));
            Ok((concatenate(&lc, &rc)?, durations))
        }
    }
}

/// Durations the leaves of [`concatenate_all`] get for `n` inputs.
pub fn balanced_durations(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        n => {
            let mut out: Vec<f64> = balanced_durations(n / 2).into_iter().map(|d| d * 0.5).collect();
            out.extend(balanced_durations(n - n / 2).into_iter().map(|d| d * 0.5));
            out
        }
    }
}

const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Integrates `f` over `[a, b]` with 5-point Gauss-Legendre.
pub(crate) fn gauss<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GAUSS_NODES
        .iter()
        .zip(GAUSS_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// `int_0^1 |u - v|^p dt` on the merged node grid of both controls.
pub fn lp_distance_pow(u: &AdmissibleControl, v: &AdmissibleControl, p: f64, norm: PointNorm) -> f64 {
    let mut nodes = u.nodes();
    nodes.extend(v.nodes());
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup();
    nodes
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let ju = u.piece_index(0.5 * (w[0] + w[1]));
            let jv = v.piece_index(0.5 * (w[0] + w[1]));
            gauss(w[0], w[1], |t| {
                norm.apply(&(u.evaluate_in(ju, t) - v.evaluate_in(jv, t))).powf(p)
            })
        })
        .sum()
}

/// `L^p` distance, `p >= 1`.
pub fn lp_distance(u: &AdmissibleControl, v: &AdmissibleControl, p: f64, norm: PointNorm) -> f64 {
    lp_distance_pow(u, v, p, norm).powf(1.0 / p)
}

pub fn lp_norm(u: &AdmissibleControl, p: f64, norm: PointNorm) -> f64 {
    lp_distance(u, &AdmissibleControl::zero(u.d, u.k_bound), p, norm)
}

/// Contraction of the control set onto 0: `u` on `[0, 1 - s]`, 0 after.
pub fn truncation_homotopy(u: &AdmissibleControl, s: f64) -> AdmissibleControl {
    let s = s.clamp(0.0, 1.0);
    if s == 0.0 {
        return u.clone();
    }
    let cut = 1.0 - s;
    if cut <= 0.0 {
        return AdmissibleControl::zero(u.d, u.k_bound);
    }
    let mut breakpoints = vec![0.0];
    let mut pieces = Vec::new();
    for (j, piece) in u.pieces.iter().enumerate() {
        let (a, b) = u.piece_interval(j);
        if a >= cut {
            break;
        }
        if b <= cut {
            pieces.push(piece.clone());
            breakpoints.push(b);
        } else {
            for (r, head) in piece.head((cut - a) / (b - a)) {
                pieces.push(head);
                breakpoints.push(if r == (cut - a) / (b - a) { cut } else { a + (b - a) * r });
            }
        }
    }
    if *breakpoints.last().unwrap() < 1.0 {
        pieces.push(ControlPiece::zero(u.d));
        breakpoints.push(1.0);
    }
    AdmissibleControl {
        breakpoints,
        pieces,
        k_bound: u.k_bound,
        d: u.d,
    }
}

/// Continuous, non-decreasing, piecewise-affine time change given by its
/// knots `(t_i, phi(t_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    pub knots: Vec<(f64, f64)>,
}

impl PiecewiseAffine {
    pub fn new(knots: Vec<(f64, f64)>) -> Self {
        Self { knots }
    }

    pub fn identity() -> Self {
        Self::new(vec![(0.0, 0.0), (1.0, 1.0)])
    }

    /// Single affine map `[a, b] -> [c, e]`.
    pub fn affine(a: f64, b: f64, c: f64, e: f64) -> Self {
        Self::new(vec![(a, c), (b, e)])
    }

    pub fn eval(&self, t: f64) -> f64 {
        for w in self.knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 && t1 > t0 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        self.knots.last().map(|k| k.1).unwrap_or(t)
    }
}

/// `u o phi` on the domain of `phi`, rescaled to `[0, 1]`. `xi` values are
/// kept; `alpha` is composed with `phi`. Segments of zero length are dropped.
pub fn reparametrize(u: &AdmissibleControl, phi: &PiecewiseAffine) -> Result<AdmissibleControl> {
    let knots = &phi.knots;
    if knots.len() < 2 {
        return Err(Error::Inadmissible("time change needs two knots".into()));
    }
    for (i, w) in knots.windows(2).enumerate() {
        if w[1].0 < w[0].0 || w[1].1 < w[0].1 {
            return Err(Error::NonMonotone { segment: i });
        }
    }
    if knots.iter().any(|k| !(0.0..=1.0).contains(&k.1)) {
        return Err(Error::Inadmissible("time change leaves [0, 1]".into()));
    }
    let (t_start, t_end) = (knots[0].0, knots.last().unwrap().0);
    if !(t_end > t_start) {
        return Err(Error::Inadmissible("time change has an empty domain".into()));
    }

    let mut times = vec![t_start];
    let mut pieces = Vec::new();
    for w in knots.windows(2) {
        let ((ta, va), (tb, vb)) = (w[0], w[1]);
        if !(tb > ta) {
            continue;
        }
        if vb == va {
            let j = u.piece_index(va);
            let (a, b) = u.piece_interval(j);
            let piece = &u.pieces[j];
            pieces.push(ControlPiece::constant(piece.xi, piece.alpha_at((va - a) / (b - a))));
            times.push(tb);
            continue;
        }
        let slope = (vb - va) / (tb - ta);
        let identity = ta == va && tb == vb;
        let time_of = |v: f64| {
            if identity {
                v
            } else if v == va {
                ta
            } else if v == vb {
                tb
            } else {
                ta + (v - va) / slope
            }
        };
        for (j, piece) in u.pieces.iter().enumerate() {
            let (a, b) = u.piece_interval(j);
            let p = a.max(va);
            let q = b.min(vb);
            if !(q > p) {
                continue;
            }
            let (tp, tq) = (time_of(p), time_of(q));
            if !(tq > tp) {
                continue;
            }
            debug_assert_eq!(tp, *times.last().unwrap());
            pieces.push(piece.window((p - a) / (b - a), (q - a) / (b - a)));
            times.push(tq);
        }
    }
    if pieces.is_empty() {
        return Err(Error::Inadmissible("time change produced no pieces".into()));
    }
    let span = t_end - t_start;
    let breakpoints: Vec<f64> = if t_start == 0.0 && t_end == 1.0 {
        times
    } else {
        times.iter().map(|t| (t - t_start) / span).collect()
    };
    let mut out = AdmissibleControl {
        breakpoints,
        pieces,
        k_bound: u.k_bound,
        d: u.d,
    };
    *out.breakpoints.first_mut().unwrap() = 0.0;
    *out.breakpoints.last_mut().unwrap() = 1.0;
    Ok(out)
}

/// The part of `u` on `[a, b]`, stretched to `[0, 1]`.
pub fn restrict(u: &AdmissibleControl, a: f64, b: f64) -> Result<AdmissibleControl> {
    reparametrize(u, &PiecewiseAffine::affine(0.0, 1.0, a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn ramp(d: usize, k: f64) -> AdmissibleControl {
        // two pieces: xi = 1 with a linear alpha, xi = 0.5 constant
        let alpha: Vec<DVector<f64>> = (0..DEFAULT_SAMPLES)
            .map(|i| {
                let mut a = DVector::zeros(d);
                a[0] = k * i as f64 / (DEFAULT_SAMPLES - 1) as f64;
                a
            })
            .collect();
        AdmissibleControl::new(
            vec![0.0, 0.4, 1.0],
            vec![
                ControlPiece { xi: 1.0, alpha },
                ControlPiece::constant(0.5, DVector::from_element(d, 0.1)),
            ],
            k,
        )
        .unwrap()
    }

    #[test]
    fn zero_control_evaluates_to_zero() {
        let u = AdmissibleControl::zero(2, 3.0);
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(u.evaluate(t).unwrap(), DVector::zeros(3));
        }
        u.validate().unwrap();
    }

    #[test]
    fn single_piece_value() {
        let u = AdmissibleControl::constant(2.0, dvector![1.0, 0.0, 0.0], 5.0);
        assert_eq!(u.evaluate(0.5).unwrap(), dvector![4.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn right_piece_at_breakpoint() {
        let u = AdmissibleControl::new(
            vec![0.0, 0.5, 1.0],
            vec![
                ControlPiece::constant(1.0, dvector![1.0, 0.0]),
                ControlPiece::zero(2),
            ],
            2.0,
        )
        .unwrap();
        assert_eq!(u.evaluate(0.5).unwrap(), DVector::zeros(3));
        assert_eq!(u.evaluate(0.25).unwrap(), dvector![1.0, 1.0, 0.0]);
    }

    #[test]
    fn evaluate_out_of_domain() {
        let u = AdmissibleControl::zero(2, 1.0);
        assert!(matches!(u.evaluate(1.5), Err(Error::OutOfDomain(_))));
        assert!(matches!(u.evaluate(-0.1), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn validator_rejects_bound_violation() {
        let u = AdmissibleControl::constant(1.0, dvector![2.0, 0.0], 1.0);
        assert!(matches!(u.validate(), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn concatenation_counts_and_norms() {
        let u = ramp(2, 3.0);
        let v = AdmissibleControl::constant(1.5, dvector![0.3, -0.2], 3.0);
        let w = concatenate(&u, &v).unwrap();
        assert_eq!(w.pieces().len(), 3);
        w.validate().unwrap();
        for p in [1.0, 2.0, 3.0] {
            let lhs = lp_distance_pow(&w, &AdmissibleControl::zero(2, 3.0), p, PointNorm::Euclidean);
            let rhs = 0.5
                * (lp_distance_pow(&u, &AdmissibleControl::zero(2, 3.0), p, PointNorm::Euclidean)
                    + lp_distance_pow(&v, &AdmissibleControl::zero(2, 3.0), p, PointNorm::Euclidean));
            assert!((lhs - rhs).abs() < 1e-12, "p = {p}: {lhs} vs {rhs}");
        }
        let z = concatenate(&AdmissibleControl::zero(2, 3.0), &AdmissibleControl::zero(2, 3.0)).unwrap();
        assert!(z.is_zero());
        assert_eq!(z.breakpoints(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn concatenation_rejects_mismatched_bounds() {
        let u = AdmissibleControl::zero(2, 1.0);
        let v = AdmissibleControl::zero(2, 2.0);
        assert!(matches!(concatenate(&u, &v), Err(Error::BoundMismatch(..))));
    }

    #[test]
    fn lp_examples() {
        let u = ramp(2, 3.0);
        assert_eq!(lp_distance(&u, &u, 2.0, PointNorm::Euclidean), 0.0);
        let one = AdmissibleControl::constant(1.0, dvector![1.0, 0.0], 3.0);
        let zero = AdmissibleControl::zero(2, 3.0);
        // u = (1, 1, 0) has Euclidean length sqrt 2; a constant (1, 0, ..)
        // integrand needs xi^2 = 1 and xi alpha = 0
        let e1 = AdmissibleControl::constant(1.0, dvector![0.0, 0.0], 3.0);
        assert!((lp_distance(&e1, &zero, 2.0, PointNorm::Euclidean) - 1.0).abs() < 1e-14);
        assert!((lp_distance(&one, &zero, 2.0, PointNorm::Euclidean) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn truncation_lp_example_with_sum_norm() {
        let k = 2.5;
        let u = AdmissibleControl::constant(1.0, dvector![k, 0.0], k);
        let h = truncation_homotopy(&u, 0.5);
        let d = lp_distance(&u, &h, 1.0, PointNorm::Sum);
        assert!((d - (1.0 + k) / 2.0).abs() < 1e-13);
    }

    #[test]
    fn truncation_endpoints() {
        let u = ramp(2, 3.0);
        assert_eq!(truncation_homotopy(&u, 0.0), u);
        let z = truncation_homotopy(&u, 1.0);
        assert!(z.is_zero());
        z.validate().unwrap();
    }

    #[test]
    fn truncation_tail_integral_shrinks() {
        let u = ramp(2, 3.0);
        let mut prev = f64::INFINITY;
        for k in 1..=8 {
            let s = 0.5f64.powi(k);
            let h = truncation_homotopy(&u, s);
            h.validate().unwrap();
            let dist = lp_distance_pow(&h, &u, 2.0, PointNorm::Euclidean);
            let tail: f64 = {
                // tail integral of |u|^2 over (1 - s, 1] by dense midpoint rule
                let n = 20_000;
                (0..n)
                    .map(|i| {
                        let t = 1.0 - s + s * (i as f64 + 0.5) / n as f64;
                        u.evaluate(t).unwrap().norm_squared()
                    })
                    .sum::<f64>()
                    * s
                    / n as f64
            };
            assert!((dist - tail).abs() < 1e-8, "s = {s}: {dist} vs {tail}");
            assert!(dist <= prev);
            prev = dist;
        }
    }

    #[test]
    fn identity_reparametrization_is_exact() {
        let u = ramp(2, 3.0);
        assert_eq!(reparametrize(&u, &PiecewiseAffine::identity()).unwrap(), u);
    }

    #[test]
    fn middle_quarter_extraction() {
        let u = ramp(2, 3.0);
        let zero = AdmissibleControl::zero(2, 3.0);
        let c = concatenate(&concatenate(&zero, &u).unwrap(), &zero).unwrap();
        let phi = PiecewiseAffine::affine(0.0, 1.0, 0.25, 0.5);
        let back = reparametrize(&c, &phi).unwrap();
        assert_eq!(back.pieces(), u.pieces());
        for (a, b) in back.breakpoints().iter().zip(u.breakpoints()) {
            assert!((a - b).abs() <= 1e-15);
        }
        let left = reparametrize(
            &concatenate(&zero, &u).unwrap(),
            &PiecewiseAffine::affine(0.0, 1.0, 0.0, 0.5),
        )
        .unwrap();
        assert!(left.is_zero());
    }

    #[test]
    fn decreasing_time_change_is_rejected() {
        let u = ramp(2, 3.0);
        let phi = PiecewiseAffine::new(vec![(0.0, 0.5), (1.0, 0.2)]);
        assert!(matches!(reparametrize(&u, &phi), Err(Error::NonMonotone { segment: 0 })));
    }

    #[test]
    fn concatenation_is_lp_continuous() {
        let u = ramp(2, 3.0);
        let v = AdmissibleControl::constant(1.0, dvector![0.5, 0.5], 3.0);
        let base = concatenate(&u, &v).unwrap();
        let mut prev = f64::INFINITY;
        for n in 1..8 {
            let eps = 0.5f64.powi(n);
            let un = AdmissibleControl::new(
                u.breakpoints().to_vec(),
                u.pieces()
                    .iter()
                    .map(|p| ControlPiece {
                        xi: p.xi + eps,
                        alpha: p.alpha.clone(),
                    })
                    .collect(),
                3.0,
            )
            .unwrap();
            let d = lp_distance(&concatenate(&un, &v).unwrap(), &base, 2.0, PointNorm::Euclidean);
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 0.05);
    }

    fn arb_control() -> impl Strategy<Value = AdmissibleControl> {
        let k = 2.0;
        (1usize..5)
            .prop_flat_map(move |n| {
                (
                    proptest::collection::vec(0.05f64..1.0, n),
                    proptest::collection::vec(0.0f64..3.0, n),
                    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 2 * 4), n),
                )
            })
            .prop_map(move |(lengths, xis, alphas)| {
                let total: f64 = lengths.iter().sum();
                let mut breakpoints = vec![0.0];
                let mut acc = 0.0;
                for l in &lengths[..lengths.len() - 1] {
                    acc += l / total;
                    breakpoints.push(acc);
                }
                breakpoints.push(1.0);
                let pieces = xis
                    .iter()
                    .zip(&alphas)
                    .map(|(&xi, raw)| ControlPiece {
                        xi,
                        alpha: raw
                            .chunks(2)
                            .map(|c| DVector::from_column_slice(c) * (k / 2f64.sqrt()))
                            .collect(),
                    })
                    .collect();
                AdmissibleControl::new(breakpoints, pieces, k).unwrap()
            })
    }

    proptest! {
        #[test]
        fn operations_preserve_admissibility(u in arb_control(), v in arb_control(), s in 0.0f64..1.0,
                                              a in 0.0f64..0.5, b in 0.5f64..1.0) {
            u.validate().unwrap();
            concatenate(&u, &v).unwrap().validate().unwrap();
            truncation_homotopy(&u, s).validate().unwrap();
            let phi = PiecewiseAffine::new(vec![(0.0, 0.0), (0.3, a), (1.0, b)]);
            reparametrize(&u, &phi).unwrap().validate().unwrap();
            for t in [0.0, 0.17, 0.5, 0.93, 1.0] {
                let val = u.evaluate(t).unwrap();
                prop_assert!(val[0] >= 0.0);
                let xi = u.pieces()[u.piece_index(t)].xi;
                prop_assert!((val[0] - xi * xi).abs() <= 1e-15 * (1.0 + xi * xi));
                let rest = val.rows(1, 2).norm();
                prop_assert!(rest <= xi * u.k_bound() * (1.0 + 1e-12));
            }
        }

        #[test]
        fn concatenation_halves_lp_powers(u in arb_control(), v in arb_control(), p in 1.0f64..4.0) {
            let z = AdmissibleControl::zero(2, 2.0);
            let lhs = lp_distance_pow(&concatenate(&u, &v).unwrap(), &z, p, PointNorm::Euclidean);
            let rhs = 0.5 * (lp_distance_pow(&u, &z, p, PointNorm::Euclidean)
                + lp_distance_pow(&v, &z, p, PointNorm::Euclidean));
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
        }
    }
}
