//! Error type shared by every module.

use thiserror::Error;

/// Everything that can go wrong while building, designing or running a problem.
#[derive(Debug, Error)]
pub enum Error {
    #[error("communication graph is disconnected")]
    DisconnectedGraph,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("global Hessian is not positive definite (smallest eigenvalue {min_eigenvalue:.3e})")]
    NotStronglyConvex { min_eigenvalue: f64 },
    #[error("constraint set of agent {agent} is empty")]
    EmptyConstraintSet { agent: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("value is not representable on the quantizer lattice")]
    LatticeMismatch,
    #[error("decoder state does not match the message: {0}")]
    StateMismatch(String),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("projection did not converge within its budget (residual {residual:.3e})")]
    ProjectionBudgetExceeded { residual: f64 },
    #[error("bit budget violated: {required} bits per scalar channel, budget {budget}")]
    BudgetViolation { required: u64, budget: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside the admissible domain: {0}")]
    DomainError(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("no feasible quantization design on the grid")]
    NoFeasibleDesign,
    #[error("iteration budget exhausted: {0}")]
    BudgetExceeded(String),
    #[error("centralized oracle failed: {0}")]
    OracleFailure(String),
    #[error("kinematic singularity: pitch {pitch:.6} rad")]
    KinematicSingularity { pitch: f64 },
    #[error("plant state became non-finite")]
    NonFiniteState,
    #[error("(A, B) is not controllable (rank {rank})")]
    NotControllable { rank: usize },
    #[error("Riccati iteration did not converge (residual {residual:.3e})")]
    RiccatiDivergence { residual: f64 },
    #[error("layout error: {0}")]
    LayoutError(String),
    #[error("random instance generation failed: {0}")]
    GenerationFailure(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse grouping of errors, used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Config,
    Problem,
    Quantizer,
    Design,
    Solver,
    Model,
    Io,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Config => 2,
            ErrorFamily::Problem => 3,
            ErrorFamily::Quantizer => 4,
            ErrorFamily::Design => 5,
            ErrorFamily::Solver => 6,
            ErrorFamily::Model => 7,
            ErrorFamily::Io => 8,
        }
    }
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        use Error::*;
        match self {
            Config(_) | InvalidParameter(_) => ErrorFamily::Config,
            DisconnectedGraph | InvalidGraph(_) | DimensionMismatch(_) | NotStronglyConvex { .. }
            | EmptyConstraintSet { .. } | LayoutError(_) | GenerationFailure(_) => ErrorFamily::Problem,
            NonFiniteInput | LatticeMismatch | StateMismatch(_) | MalformedMessage(_) => {
                ErrorFamily::Quantizer
            }
            DomainError(_) | Infeasible(_) | NoFeasibleDesign => ErrorFamily::Design,
            ProjectionBudgetExceeded { .. } | BudgetViolation { .. } | BudgetExceeded(_)
            | OracleFailure(_) => ErrorFamily::Solver,
            KinematicSingularity { .. } | NonFiniteState | NotControllable { .. }
            | RiccatiDivergence { .. } => ErrorFamily::Model,
            Io(_) | Csv(_) => ErrorFamily::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
