use thiserror::Error;

use crate::lattice::Point;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step distribution is not symmetric: p({0}) != p(-{0})")]
    NotSymmetric(Point),
    #[error("covariance is not a multiple of the identity (g11={g11}, g22={g22}, g12={g12})")]
    AnisotropicCovariance { g11: f64, g22: f64, g12: f64 },
    #[error("not a probability distribution: {0}")]
    NotAProbability(String),
    #[error("moment of order {order} diverges for this distribution family")]
    DivergentMoment { order: f64 },
    #[error("invalid distribution spec: {0}")]
    InvalidSpec(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("region is unbounded; supply an explicit bounding region")]
    UnboundedRegion,
    #[error("toral disc radius {n} must be < K/4 = {}", *.k as f64 / 4.0)]
    RadiusTooLarge { n: f64, k: i64 },
    #[error("torus side K={0} is below the minimum of 8")]
    TorusTooSmall(i64),
    #[error("domain has {size} points, above the budget of {budget}")]
    DomainTooLarge { size: usize, budget: usize },
    #[error("domain is empty")]
    EmptyDomain,
    #[error("killed system is singular or not positive definite (pivot {pivot} at row {row})")]
    SingularSystem { row: usize, pivot: f64 },
    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverDidNotConverge { iterations: usize, residual: f64 },
    #[error("source {0} is outside the domain")]
    SourceOutsideDomain(Point),
    #[error("source {0} lies inside the target set")]
    SourceInsideTarget(Point),
    #[error("source {0} is not strictly inside the annulus")]
    SourceOutsideAnnulus(Point),
    #[error("point {0} is outside the exterior annulus")]
    PointOutsideAnnulus(Point),
    #[error("target and forbidden sets overlap")]
    OverlappingSets,
    #[error("distribution is not strongly aperiodic")]
    NotAperiodic,
    #[error("convolution grid of side {side} cannot hold {j_max} steps (leakage bound {bound:e})")]
    GridLeakage { side: usize, j_max: u64, bound: f64 },
    #[error("radii must span at least a factor of 8 (got {min}..{max})")]
    InsufficientSpread { min: f64, max: f64 },
    #[error("formula `{formula}` needs the fitted constant `{constant}`")]
    MissingFittedConstant { formula: String, constant: String },
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("{0} is not supported for this distribution")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
