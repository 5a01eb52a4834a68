use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("event {0:?} lies outside the spacetime domain")]
    OutOfDomain(Vec<f64>),
    #[error("zero tangent vector")]
    ZeroVector,
    #[error("vector is spacelike, expected causal")]
    NotCausal,
    #[error("unknown spacetime `{0}`")]
    UnknownName(String),
    #[error("conformal factor must be positive, got {0}")]
    NonPositiveConformalFactor(f64),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("future edge relation contains a cycle")]
    CyclicGraph,
    #[error("no causal pairs found in the requested region")]
    NoCausalPairs,

    #[error("grid has no nodes inside the domain")]
    EmptyGrid,
    #[error("excised set covers the whole grid box")]
    ExcisionSwallowsBox,
    #[error("grid would have {nodes} nodes, above the limit of {limit}")]
    GridTooLarge { nodes: usize, limit: usize },
    #[error("event {0:?} is not a node of the grid")]
    NodeNotInGrid(Vec<f64>),
    #[error("nodes are not connected in the grid")]
    Disconnected,

    #[error("segment {index} is not causal with the claimed time sense")]
    InvalidSegment { index: usize },
    #[error("ball of radius {radius} leaves the grid along direction {direction}")]
    BallExitsGrid { radius: f64, direction: usize },

    #[error("geodesic left the domain at parameter {s_exit}")]
    LeftDomain { s_exit: f64 },
    #[error("geodesic constraint drift {drift:e} exceeds the monitor threshold")]
    StepTooLarge { drift: f64 },
    #[error("chart inversion did not converge (residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("query lies on the chart axis; direction is undefined")]
    OnAxisDegenerate,

    #[error("map Jacobian is singular")]
    SingularJacobian,
    #[error("map sends a grid node outside the target grid")]
    MapLeavesGrid,
    #[error("conformal factor sample {0} is not positive")]
    NonPositivePhi(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
