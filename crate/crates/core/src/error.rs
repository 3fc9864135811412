use thiserror::Error;

/// Errors produced by the analytical model and its supporting machinery.
#[derive(Debug, Error)]
pub enum ModelError {
    /// One or more scenario parameters violate their bounds. Lists every
    /// violated invariant, not just the first.
    #[error("invalid-parameter: {}", .violations.join("; "))]
    InvalidParameter { violations: Vec<String> },

    /// A transition-matrix row carries no probability mass.
    #[error("degenerate-chain: row {row} is entirely zero")]
    DegenerateChain { row: usize },

    /// The embedded chain is reducible; the stationary system has no
    /// unique solution.
    #[error("singular-system: embedded chain is reducible")]
    SingularSystem,

    /// The steady-state conversion produced probability mass below the
    /// clamping tolerance; the queue is operating past the regime the
    /// model can describe.
    #[error("model-unstable: {detail}")]
    ModelUnstable { detail: String },

    /// Mean-delay computation with a fully blocked queue.
    #[error("division-degenerate: blocking probability is 1")]
    DivisionDegenerate,

    /// Fork probability too close to 1 for Eq.-style latency inflation.
    #[error("fork-saturated: p_fork = {p_fork}")]
    ForkSaturated { p_fork: f64 },

    /// Interpolation nodes share an abscissa.
    #[error("duplicate-node: abscissa {x} appears more than once")]
    DuplicateNode { x: f64 },

    /// Too few usable interpolation nodes after dropping failed ones.
    #[error("insufficient-nodes: {got} usable nodes, need at least {need}")]
    InsufficientNodes { got: usize, need: usize },

    #[error("scenario file: {0}")]
    ScenarioFile(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
