use alloc::string::String;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max asymmetry {max_asymmetry:.3e})")]
    NonHermitian { max_asymmetry: f64 },

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("invalid density operator: {0}")]
    InvalidDensity(String),

    #[error("projector set is incomplete (deficiency norm {deficiency:.3e})")]
    IncompleteProjectors { deficiency: f64 },

    #[error("basis is not orthonormal (max deviation {deviation:.3e})")]
    NonOrthonormalBasis { deviation: f64 },

    #[error("near-orthogonal selection (|overlap| = {overlap:.3e})")]
    NearOrthogonal { overlap: f64 },

    #[error("orthogonal post-selection (norm {norm:.3e})")]
    OrthogonalPostSelection { norm: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("probe shift {shift:.3} leaves no margin on grid of half-width {x_max}; increase x_max")]
    ShiftExceedsGrid { shift: f64, x_max: f64 },

    #[error("sample {value} outside supported range [{min}, {max}]")]
    SampleOutOfRange { value: f64, min: f64, max: f64 },

    #[error("unsupported angle {alpha:.6} rad; supported: π/4, π/2, 3π/4")]
    UnsupportedAngle { alpha: f64 },

    #[error("singular selection angle {angle_deg}°")]
    SingularAngle { angle_deg: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ill-conditioned fit (condition number {condition:.3e}); use a smaller window or lower order")]
    IllConditioned { condition: f64 },

    #[error("eigenvalues {a} and {b} are too close (gap below 1e-8)")]
    NearDegenerate { a: f64, b: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
