use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate face {face}: area {area:e} below threshold {threshold:e}")]
    DegenerateMesh {
        face: usize,
        area: f64,
        threshold: f64,
    },

    #[error("open mesh: edge ({0}, {1}) has a single incident face")]
    OpenMesh(usize, usize),

    #[error("non-manifold or inconsistently wound mesh: {0}")]
    NonManifold(String),

    #[error("mesh has {0} vertices, at least 4 required")]
    TooFewVertices(usize),

    #[error("time {t} is not before the maximal time {t_max}")]
    TimeBeyondTmax { t: f64, t_max: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("surface is not mean-convex: min H = {min_h:e}")]
    NotMeanConvex { min_h: f64 },

    #[error("parabolicity lost: f'(H) = {derivative:e} at vertex {vertex}")]
    ParabolicityLost { vertex: usize, derivative: f64 },

    #[error("time step {dt:e} fell below the minimum {dt_min:e}")]
    StepUnderflow { dt: f64, dt_min: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("field has a negative value {value:e} at vertex {vertex}")]
    NegativeField { vertex: usize, value: f64 },

    #[error("exponent q = {q} must exceed gamma/(gamma-2) = {bound}")]
    ExponentOutOfRange { q: f64, bound: f64 },

    #[error("beta = {beta} is below 2")]
    BetaTooSmall { beta: f64 },

    #[error("trajectory did not terminate at the blow-up threshold")]
    NoBlowup,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateMesh { .. } => "DegenerateMesh",
            Error::OpenMesh(..) => "OpenMesh",
            Error::NonManifold(_) => "NonManifold",
            Error::TooFewVertices(_) => "TooFewVertices",
            Error::TimeBeyondTmax { .. } => "TimeBeyondTmax",
            Error::EmptyTrajectory => "EmptyTrajectory",
            Error::NotMeanConvex { .. } => "NotMeanConvex",
            Error::ParabolicityLost { .. } => "ParabolicityLost",
            Error::StepUnderflow { .. } => "StepUnderflow",
            Error::InsufficientSamples(_) => "InsufficientSamples",
            Error::HypothesisViolated(_) => "HypothesisViolated",
            Error::NegativeField { .. } => "NegativeField",
            Error::ExponentOutOfRange { .. } => "ExponentOutOfRange",
            Error::BetaTooSmall { .. } => "BetaTooSmall",
            Error::NoBlowup => "NoBlowup",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    /// True for errors that signal a violated precondition or theorem hypothesis
    /// rather than a numerical breakdown.
    pub fn is_precondition(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMesh { .. }
                | Error::OpenMesh(..)
                | Error::NonManifold(_)
                | Error::TooFewVertices(_)
                | Error::TimeBeyondTmax { .. }
                | Error::NotMeanConvex { .. }
                | Error::ParabolicityLost { .. }
                | Error::HypothesisViolated(_)
                | Error::NegativeField { .. }
                | Error::ExponentOutOfRange { .. }
                | Error::BetaTooSmall { .. }
                | Error::NoBlowup
                | Error::InvalidArgument(_)
        )
    }
}
