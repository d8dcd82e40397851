use crate::activation::ActivationKind;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by analysis, simulation, and data-loading routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// No EoC initialization exists for the requested configuration: the
    /// bias variance solved from `V(q*) = q*` came out negative.
    #[error(
        "EoC infeasible: bias variance negative (sigma_b^2 = {sigma_b2:.6e}) \
         for kind={kind:?}, s={s}, m={m:?}, q*={q_star}"
    )]
    Infeasible {
        kind: ActivationKind,
        s: f64,
        m: Option<f64>,
        q_star: f64,
        sigma_b2: f64,
    },

    /// A root or bracketing search failed to find a solution.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// `q*` passed where a fixed point of the variance map is required.
    #[error("not a fixed point: |V(q) - q| = {residual:.3e} at q = {q}")]
    NotFixedPoint { q: f64, residual: f64 },

    /// Input shape does not match the network or dataset.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// IDX file carries the wrong magic number for its role.
    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxBadMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    /// IDX payload ended early.
    #[error("truncated IDX payload in {path}: expected {expected} bytes, got {actual}")]
    IdxTruncated {
        path: String,
        expected: usize,
        actual: usize,
    },

    /// Image and label files disagree on the number of samples.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
