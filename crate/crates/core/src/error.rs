use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has no leader-rooted spanning tree (H is singular)")]
    SpanningTreeMissing,
    #[error("phi has a non-positive entry {value} at agent {agent}")]
    NonPositivePhi { agent: usize, value: f64 },
    #[error("pair is not stabilizable")]
    NotStabilizable,
    #[error("no stabilizing game solution at gamma = {gamma}")]
    GammaTooSmall { gamma: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("{what} diverged at t = {t}")]
    Diverged { what: String, t: f64 },
    #[error("eigenvalue {re}{im:+}i is not a mode of A")]
    ModeNotFound { re: f64, im: f64 },
    #[error("follower Laplacian block is singular")]
    SingularLf,
    #[error("no steady state exists for this attack channel")]
    NoSteadyState,
    #[error("attack energy is zero over the trace")]
    ZeroAttackEnergy,
    #[error("insufficient excitation: regression rank {rank} < {unknowns} unknowns")]
    InsufficientExcitation { rank: usize, unknowns: usize },
    #[error("singular regression")]
    SingularRegression,
    #[error("learning did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize, history: Vec<f64> },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) | Error::DimensionMismatch(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
