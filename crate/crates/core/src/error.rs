use alloc::boxed::Box;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid dimensions: {0}")]
    InvalidShape(&'static str),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("interpolation index {index} outside 0..={steps}")]
    InvalidIndex { index: usize, steps: usize },
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("row {row} has norm below the zero-row threshold")]
    ZeroRow { row: usize },
    #[error("interpolation endpoints coincide (squared distance {squared_norm:e})")]
    DegenerateDirection { squared_norm: f64 },
    #[error("ids length {ids_length} outside 1..={rows}")]
    InvalidIdsLength { ids_length: usize, rows: usize },
    #[error("stage {stage}: {source}")]
    Stage { stage: u8, source: Box<Error> },
    #[error("attention row {row} sums to ~0")]
    SingularRowSum { row: usize },
    #[error("convolution output would be empty ({height}x{width} input, padding {padding}, stride {stride})")]
    ConvShape {
        height: usize,
        width: usize,
        padding: usize,
        stride: usize,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("map output {index} is not integer-valued")]
    NonIntegerMap { index: usize },
    #[error("bound requires d = {expected}, map has d = {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("grid resolution {given} below the minimum {required}")]
    GridTooCoarse { given: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("invalid video map: {0}")]
    InvalidMap(&'static str),
    #[error("sentences {first} and {second} violate the bi-Lipschitz bound")]
    NotBiLipschitz { first: usize, second: usize },
    #[error("the separation term dominates but no continuous map was supplied")]
    MissingContinuousMap,
}

impl Error {
    /// Tag an error with the mixing stage it came from.
    pub fn in_stage(self, stage: u8) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Strip any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for numeric degeneracies (as opposed to malformed input).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self.root(),
            Error::ZeroRow { .. }
                | Error::DegenerateDirection { .. }
                | Error::SingularRowSum { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
