use alloc::string::String;

/// Everything that can go wrong inside the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),

    #[error("Bessel K evaluation overflowed at nu = {nu}; use the squared-exponential family for very smooth fields")]
    BesselOverflow { nu: f64 },

    #[error("latitude {0} lies outside [-pi/2, pi/2]")]
    LatitudeOutOfRange(f64),

    #[error("{n} sites cannot fill a tree of rank {rank}")]
    TooFewSites { n: usize, rank: usize },

    #[error("sites {first} and {second} are identical")]
    DuplicateSite { first: usize, second: usize },

    #[error("landmark placement failed at node {node}: {reason}")]
    Landmarks { node: usize, reason: String },

    #[error("diagonal block at node {node} is singular")]
    SingularBlock { node: usize },

    #[error("block at node {node} is not positive definite")]
    NotPositiveDefinite { node: usize },

    #[error("Riccati equation{} has no admissible symmetric solution (an eigenvalue of I + Xi*Lambda is not positive)", at_node(*.node))]
    RiccatiUnsolvable { node: Option<usize> },

    #[error("landmark Gram matrix at node {node} is not positive definite; try a larger nugget or fewer landmarks")]
    LandmarkGram { node: usize },

    #[error("dense size guard exceeded: {n} > {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("point coincides with observed site {index}; out-of-sample queries need unobserved sites")]
    InSample { index: usize },

    #[error("matrix and tree topologies do not match")]
    TopologyMismatch,

    #[error("determinant is not positive (sign {sign})")]
    NonPositiveDeterminant { sign: i8 },

    #[error("solve through K_h^-1 is inaccurate (relative residual {residual:.1e}); the covariance is too ill-conditioned at these parameters")]
    InaccurateSolve { residual: f64 },

    #[error("Hessian at the estimate is not negative definite; the optimum may lie on a boundary or in a flat region")]
    IndefiniteHessian,

    #[error("objective could not be evaluated at the initial point: {0}")]
    BadInitialPoint(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BesselOverflow { .. }
                | Error::SingularBlock { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::RiccatiUnsolvable { .. }
                | Error::LandmarkGram { .. }
                | Error::NonPositiveDeterminant { .. }
                | Error::InaccurateSolve { .. }
                | Error::IndefiniteHessian
                | Error::BadInitialPoint(_)
        )
    }

    /// Node id carried by the error, if any.
    pub fn node(&self) -> Option<usize> {
        match *self {
            Error::SingularBlock { node }
            | Error::NotPositiveDefinite { node }
            | Error::LandmarkGram { node }
            | Error::Landmarks { node, .. } => Some(node),
            Error::RiccatiUnsolvable { node } => node,
            _ => None,
        }
    }
}

fn at_node(node: Option<usize>) -> String {
    node.map(|n| alloc::format!(" at node {n}")).unwrap_or_default()
}

pub type Result<T> = core::result::Result<T, Error>;
