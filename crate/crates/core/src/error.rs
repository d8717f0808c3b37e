use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("integration failure: variable {var} at cell (ix={ix}, iy={iy}) became non-finite")]
    Integration { var: usize, ix: usize, iy: usize },

    #[error("standard deviation at index {0} must be positive")]
    ZeroStd(usize),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("block count {gamma} does not tile a {nx}x{ny} grid; {detail}")]
    Partition {
        gamma: usize,
        nx: usize,
        ny: usize,
        detail: String,
    },

    #[error("step size {step} outside admissible range {range}")]
    StepSize { step: f64, range: &'static str },

    #[error("negative distance {0} passed to the taper function")]
    NegativeDistance(f64),

    #[error("singular ensemble transform at cycle {cycle}, grid cell {cell}")]
    SingularTransform { cycle: usize, cell: usize },

    #[error("empty index set")]
    EmptyIndexSet,

    #[error("cycle {cycle}: {source}")]
    AtCycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The underlying error with any cycle context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtCycle { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
