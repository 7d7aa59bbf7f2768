use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Why a closed-form solve or a scale estimate has no unique answer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Degeneracy {
    #[error("only {found} correspondences carry positive weight, at least 3 are required")]
    TooFewCorrespondences { found: usize },
    /// The cross-covariance has a vanishing second singular value. `axis` is the
    /// source-side direction along which the configuration carries no information.
    #[error("rank-deficient configuration (singular value ratio {ratio:.3e}), deficient axis [{:.4}, {:.4}, {:.4}]", axis[0], axis[1], axis[2])]
    RankDeficient { axis: [f64; 3], ratio: f64 },
    #[error("source points have zero spread")]
    ZeroVariance,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{context}: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    ShapeMismatch {
        context: &'static str,
        expected_width: usize,
        expected_height: usize,
        found_width: usize,
        found_height: usize,
    },
    #[error("{context}: count mismatch ({left} vs {right})")]
    CountMismatch { context: &'static str, left: usize, right: usize },
    #[error("degenerate input: {0}")]
    Degenerate(#[from] Degeneracy),
    #[error("insufficient support: {found} effective correspondences, need at least {required}")]
    InsufficientSupport { found: usize, required: usize },
    #[error("non-finite value in {term}")]
    NonFinite { term: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("frame pair ({from}, {to}): {source}")]
    Pair { from: usize, to: usize, source: Box<Error> },
    #[error("frame {index}: {source}")]
    Frame { index: usize, source: Box<Error> },
    #[error("window {index}: {source}")]
    Window { index: usize, source: Box<Error> },
    #[error("frame source: {0}")]
    Source(String),
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            context,
            expected_width: expected.0,
            expected_height: expected.1,
            found_width: found.0,
            found_height: found.1,
        }
    }

    pub(crate) fn in_pair(self, from: usize, to: usize) -> Self {
        Error::Pair { from, to, source: Box::new(self) }
    }

    pub(crate) fn in_frame(self, index: usize) -> Self {
        Error::Frame { index, source: Box::new(self) }
    }

    pub(crate) fn in_window(self, index: usize) -> Self {
        Error::Window { index, source: Box::new(self) }
    }

    /// Innermost error, with pair, frame and window annotations peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pair { source, .. } | Error::Frame { source, .. } | Error::Window { source, .. } => source.root(),
            other => other,
        }
    }
}
