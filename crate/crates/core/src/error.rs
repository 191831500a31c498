use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel entry ({row}, {col}) is not finite ({value})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("degenerate kernel: h'(0) = 0, so gamma/beta is undefined")]
    DegenerateKernel,

    #[error(
        "exact curvature constants are only available for inner-product kernels; use the trace proxy for RBF kernels"
    )]
    UnsupportedFamily,

    #[error(
        "implicit regularization r = {r} is not positive; for a linear kernel gamma = 0 and the \
         bound on the variance term can become very large in the presence of small eigenvalues"
    )]
    NonPositiveRegularization { r: f64 },

    #[error(
        "singular Gram matrix: smallest eigenvalue {min_eigenvalue:e} <= 1e-10 x largest {max_eigenvalue:e} \
         (condition estimate {condition:e}); retry with the pseudo-inverse option"
    )]
    SingularGram {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
        condition: f64,
    },

    #[error("zero baseline variance in normalized test error")]
    ZeroBaselineVariance,

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("IDX error at byte offset {offset}: {kind}")]
    Idx { offset: u64, kind: IdxErrorKind },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdxErrorKind {
    #[error("unsupported magic number {0:#010x}")]
    UnsupportedMagic(u32),
    #[error("truncated file: needed {needed} bytes, {available} available")]
    Truncated { needed: u64, available: u64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("label value {0} is outside 0..=9")]
    BadLabel(u8),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularGram { .. } | Error::NonFinite { .. } | Error::Linalg(_)
        )
    }
}
