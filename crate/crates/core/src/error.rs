use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Every failure the core can report. [`Error::code`] gives a stable
/// kebab-case identifier suitable for machine parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyObject,
    InvalidDepth { pixel: usize },
    DegenerateAxes,
    Shape(String),
    Index { index: usize, len: usize },
    NonScalarLoss { len: usize },
    OffSurface { distance: f64 },
    TooSmall { visible: usize },
    NeighborCount { k: usize, n: usize },
    OutsideMask { pixel: usize },
    EmptyMask,
    Diverged { step: usize },
    InvalidArgument(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyObject => "empty-object",
            Error::InvalidDepth { .. } => "invalid-depth",
            Error::DegenerateAxes => "degenerate-axes",
            Error::Shape(_) => "shape",
            Error::Index { .. } => "index",
            Error::NonScalarLoss { .. } => "non-scalar-loss",
            Error::OffSurface { .. } => "off-surface",
            Error::TooSmall { .. } => "too-small",
            Error::NeighborCount { .. } => "k-too-large",
            Error::OutsideMask { .. } => "outside-mask",
            Error::EmptyMask => "empty-mask",
            Error::Diverged { .. } => "diverged",
            Error::InvalidArgument(_) => "invalid-argument",
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.code())?;
        match self {
            Error::EmptyObject => write!(f, "mask selects no pixels"),
            Error::InvalidDepth { pixel } => write!(f, "non-positive depth at pixel {pixel}"),
            Error::DegenerateAxes => write!(f, "rotation axes are zero or parallel"),
            Error::Shape(msg) => write!(f, "{msg}"),
            Error::Index { index, len } => write!(f, "index {index} out of range for {len} rows"),
            Error::NonScalarLoss { len } => write!(f, "loss has {len} elements, expected 1"),
            Error::OffSurface { distance } => {
                write!(f, "point is {distance:.3e} m away from the surface")
            }
            Error::TooSmall { visible } => write!(f, "only {visible} visible pixels"),
            Error::NeighborCount { k, n } => write!(f, "k = {k} needs more than {n} points"),
            Error::OutsideMask { pixel } => write!(f, "pixel {pixel} is not inside the mask"),
            Error::EmptyMask => write!(f, "mask is empty"),
            Error::Diverged { step } => write!(f, "non-finite loss at step {step}"),
            Error::InvalidArgument(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for Error {}
