//! Built-in structures: a contact structure on the 3-torus, the Heisenberg
//! group on a box, and a flat (integrable) fixture that fails the step-2
//! certificate.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{Covector, Fields, GeometryConfig, Point, SubRiemannianStructure, Vector};

pub const MODEL_NAMES: [&str; 3] = ["torus", "heisenberg", "flat_invalid"];

/// `omega = cos(2 pi z) dx + sin(2 pi z) dy` on the unit 3-torus with the
/// Euclidean metric.
#[derive(Debug, Clone, Default)]
pub struct TorusContact;

impl Fields for TorusContact {
    fn name(&self) -> &str {
        "torus"
    }
    fn dim(&self) -> usize {
        3
    }
    fn frame_len(&self) -> usize {
        2
    }
    fn omega(&self, x: &Point) -> Covector {
        let (s, c) = (2.0 * PI * x[2]).sin_cos();
        DVector::from_vec(vec![c, s, 0.0])
    }
    fn metric(&self, _x: &Point) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }
    fn frame(&self, x: &Point) -> DMatrix<f64> {
        let (s, c) = (2.0 * PI * x[2]).sin_cos();
        DMatrix::from_column_slice(3, 2, &[0.0, 0.0, 1.0, -s, c, 0.0])
    }
    fn d_omega(&self, x: &Point) -> Option<DMatrix<f64>> {
        let (s, c) = (2.0 * PI * x[2]).sin_cos();
        let mut d = DMatrix::zeros(3, 3);
        d[(2, 0)] = -2.0 * PI * s;
        d[(0, 2)] = 2.0 * PI * s;
        d[(2, 1)] = 2.0 * PI * c;
        d[(1, 2)] = -2.0 * PI * c;
        Some(d)
    }
    fn frame_bracket(&self, i: usize, j: usize, x: &Point) -> Option<Vector> {
        let (s, c) = (2.0 * PI * x[2]).sin_cos();
        let b = DVector::from_vec(vec![-2.0 * PI * c, -2.0 * PI * s, 0.0]);
        Some(match (i, j) {
            (0, 1) => b,
            (1, 0) => -b,
            _ => DVector::zeros(3),
        })
    }
    fn drift(&self, x: &Point) -> Option<Vector> {
        let (s, c) = (2.0 * PI * x[2]).sin_cos();
        Some(DVector::from_vec(vec![-c, -s, 0.0]))
    }
    fn periods(&self) -> Vec<Option<f64>> {
        vec![Some(1.0); 3]
    }
    fn sampling_box(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); 3]
    }
    fn analytic_constants(&self) -> Option<(f64, f64)> {
        Some((1.0, 2.0 * PI))
    }
}

/// Heisenberg group: `omega = dz + (y dx - x dy) / 2` with the left-invariant
/// metric making `X1 = dx - (y/2) dz`, `X2 = dy + (x/2) dz`, `dz` orthonormal.
#[derive(Debug, Clone)]
pub struct Heisenberg {
    pub bounds: Vec<(f64, f64)>,
}

impl Heisenberg {
    pub fn new(bounds: [(f64, f64); 3]) -> Self {
        Self {
            bounds: bounds.to_vec(),
        }
    }
}

impl Fields for Heisenberg {
    fn name(&self) -> &str {
        "heisenberg"
    }
    fn dim(&self) -> usize {
        3
    }
    fn frame_len(&self) -> usize {
        2
    }
    fn omega(&self, x: &Point) -> Covector {
        DVector::from_vec(vec![x[1] / 2.0, -x[0] / 2.0, 1.0])
    }
    fn metric(&self, x: &Point) -> DMatrix<f64> {
        let (a, b) = (x[0], x[1]);
        DMatrix::from_row_slice(
            3,
            3,
            &[
                1.0 + b * b / 4.0,
                -a * b / 4.0,
                b / 2.0,
                -a * b / 4.0,
                1.0 + a * a / 4.0,
                -a / 2.0,
                b / 2.0,
                -a / 2.0,
                1.0,
            ],
        )
    }
    fn frame(&self, x: &Point) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 2, &[1.0, 0.0, -x[1] / 2.0, 0.0, 1.0, x[0] / 2.0])
    }
    fn d_omega(&self, _x: &Point) -> Option<DMatrix<f64>> {
        let mut d = DMatrix::zeros(3, 3);
        d[(0, 1)] = -1.0;
        d[(1, 0)] = 1.0;
        Some(d)
    }
    fn frame_bracket(&self, i: usize, j: usize, _x: &Point) -> Option<Vector> {
        let z = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        Some(match (i, j) {
            (0, 1) => z,
            (1, 0) => -z,
            _ => DVector::zeros(3),
        })
    }
    fn drift(&self, _x: &Point) -> Option<Vector> {
        Some(DVector::from_vec(vec![0.0, 0.0, -1.0]))
    }
    fn sampling_box(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }
    fn analytic_constants(&self) -> Option<(f64, f64)> {
        Some((1.0, 1.0))
    }
}

/// `omega = dz` with the Euclidean metric: integrable, so never step 2.
#[derive(Debug, Clone, Default)]
pub struct FlatInvalid;

impl Fields for FlatInvalid {
    fn name(&self) -> &str {
        "flat_invalid"
    }
    fn dim(&self) -> usize {
        3
    }
    fn frame_len(&self) -> usize {
        2
    }
    fn omega(&self, _x: &Point) -> Covector {
        DVector::from_vec(vec![0.0, 0.0, 1.0])
    }
    fn metric(&self, _x: &Point) -> DMatrix<f64> {
        DMatrix::identity(3, 3)
    }
    fn frame(&self, _x: &Point) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }
    fn d_omega(&self, _x: &Point) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(3, 3))
    }
    fn sampling_box(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); 3]
    }
}

pub fn torus_contact() -> SubRiemannianStructure {
    torus_contact_with(GeometryConfig::default())
}

pub fn torus_contact_with(config: GeometryConfig) -> SubRiemannianStructure {
    SubRiemannianStructure::certified(Arc::new(TorusContact), config)
        .expect("torus model certifies")
}

/// Heisenberg group on the given box.
pub fn heisenberg(bounds: [(f64, f64); 3]) -> SubRiemannianStructure {
    heisenberg_with(bounds, GeometryConfig::default())
}

pub fn heisenberg_with(bounds: [(f64, f64); 3], config: GeometryConfig) -> SubRiemannianStructure {
    SubRiemannianStructure::certified(Arc::new(Heisenberg::new(bounds)), config)
        .expect("heisenberg model certifies")
}

/// Default Heisenberg box `[-1, 1]^3`.
pub fn heisenberg_unit_box() -> SubRiemannianStructure {
    heisenberg([(-1.0, 1.0); 3])
}

/// Uncertified: construction succeeds, every certificate fails.
pub fn flat_invalid() -> SubRiemannianStructure {
    SubRiemannianStructure::new(Arc::new(FlatInvalid), GeometryConfig::default())
}

/// Looks a model up by name and certifies it (except `flat_invalid`,
/// which is returned uncertified).
pub fn by_name(name: &str, config: GeometryConfig) -> Result<SubRiemannianStructure> {
    match name {
        "torus" => SubRiemannianStructure::certified(Arc::new(TorusContact), config),
        "heisenberg" => SubRiemannianStructure::certified(
            Arc::new(Heisenberg::new([(-1.0, 1.0); 3])),
            config,
        ),
        "flat_invalid" => Ok(SubRiemannianStructure::new(Arc::new(FlatInvalid), config)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}
