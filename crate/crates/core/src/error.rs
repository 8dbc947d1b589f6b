use crate::geometry::Point2;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("point ({}, {}) lies outside the model domain", .0.x1, .0.x2)]
    Domain(Point2),

    #[error("H3 violated at {} point(s), first at ({}, {})", .points.len(), .points[0].x1, .points[0].x2)]
    H3Violated { points: Vec<Point2> },

    #[error("sigma vanishes at ({}, {})", .0.x1, .0.x2)]
    SingularSigma(Point2),

    #[error("frame matrix is singular at ({}, {}) (|det| = {det:e})", .point.x1, .point.x2)]
    SingularFrame { point: Point2, det: f64 },

    #[error("path left the model domain at t = {0}")]
    DomainExit(f64),

    #[error("step halving did not converge on [{t0}, {t1}]")]
    StepFailure { t0: f64, t1: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("sample grid spacing {spacing} is not finer than h/4 = {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("R = {r} exceeds the validity limit R_* = {r_star}")]
    Validity { r: f64, r_star: f64 },

    #[error("rate vanishes on the suffix starting at t = {from}")]
    DegenerateRate { from: f64 },

    #[error("no restart reached the endpoint (best gap {best_gap:e})")]
    Unreachable { best_gap: f64 },

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonFailure { iterations: usize, residual: f64 },
}

impl Error {
    /// Configuration problems map to exit code 2, everything else is numeric.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
