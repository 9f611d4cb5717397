use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },

    #[error("{op}: argument outside the domain ({value})")]
    Domain { op: &'static str, value: f64 },

    #[error("backward requires a 1x1 root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("non-finite objective at parameter {param}, coordinate {index}")]
    NonFiniteObjective { param: usize, index: usize },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph too dense: need {needed} non-edges, only {available} exist")]
    TooDense { needed: usize, available: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}
