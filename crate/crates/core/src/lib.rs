//! Sub-Riemannian control model of a corank-one distribution: controls that
//! push along a transverse drift, local surjectivity of the endpoint map and
//! homotopy lifting for its path-level version.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod controls;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod homotopy;
pub mod io;
pub mod models;
pub mod planner;

pub use controls::{AdmissibleControl, ControlPiece, PiecewiseAffine, PointNorm};
pub use error::{Error, Result};
pub use geometry::{Constants, Fields, GeometryConfig, SubRiemannianStructure};
