use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("one-form is degenerate at {point:?} (norm {norm:e})")]
    DegenerateForm { point: Vec<f64>, norm: f64 },

    #[error("step-2 condition fails near {point:?}: {detail}")]
    Step2Violation { point: Vec<f64>, detail: String },

    #[error("sup of the one-form norm does not stabilise under grid refinement ({coarse} -> {fine})")]
    UnboundedForm { coarse: f64, fine: f64 },

    #[error("vector is not tangent to the distribution: |omega(v)| = {defect:e}")]
    NotHorizontal { defect: f64 },

    #[error("frame has rank {rank} but the distribution needs {needed}")]
    RankDeficiency { rank: usize, needed: usize },

    #[error("time {0} outside [0, 1]")]
    OutOfDomain(f64),

    #[error("controls carry different frame bounds ({0} vs {1})")]
    BoundMismatch(f64, f64),

    #[error("reparametrization is decreasing on segment {segment}")]
    NonMonotone { segment: usize },

    #[error("control is not admissible: {0}")]
    Inadmissible(String),

    #[error("state norm {norm:e} exceeded the blow-up bound at t = {time}")]
    BlowUp { time: f64, norm: f64 },

    #[error("integrator error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    AccuracyLoss { estimate: f64, tolerance: f64 },

    #[error("flow left the frame patch (distance {distance:e} > radius {radius:e})")]
    PatchEscape { distance: f64, radius: f64 },

    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("target outside the locality region: {0}")]
    OutsideLocality(String),

    #[error("planning budget exhausted after {legs} legs")]
    BudgetExceeded { legs: usize },

    #[error("homotopy lift failed at {} grid nodes: {offending:?}", offending.len())]
    LiftFailure { offending: Vec<(f64, f64, String)> },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
