//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Result`]. Variants are
//! grouped by the stage that raises them: dilation construction, quasi-norm
//! geometry, exponent calculus, sampled-field plumbing, multiplier estimation,
//! kernel synthesis, and atomic decomposition.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the library.
#[derive(Debug, Error)]
pub enum Error {
    // --- dilation construction ---
    /// Some eigenvalue modulus is not strictly larger than one.
    #[error("matrix is not expansive: eigenvalue modulus {modulus} is not > 1")]
    NotExpansive { modulus: f64 },

    /// Margins must satisfy 1 < lambda_minus < |lambda_1| and |lambda_n| < lambda_plus.
    #[error("bad spectral margins: need 1 < {lambda_minus} < {eig_min} and {eig_max} < {lambda_plus}")]
    BadMargins {
        lambda_minus: f64,
        lambda_plus: f64,
        eig_min: f64,
        eig_max: f64,
    },

    /// Only dimensions 1, 2 and 3 are supported.
    #[error("unsupported dimension {dim}: expected 1, 2 or 3")]
    UnsupportedDimension { dim: usize },

    /// Requested matrix power is beyond what can be represented reliably.
    #[error("matrix power {k} exceeds the supported range |k| <= {max}")]
    RangeExceeded { k: i64, max: i64 },

    // --- quasi-norm geometry ---
    /// The ellipsoid shape parameter must satisfy 1 < r < lambda_minus.
    #[error("bad shape parameter r = {r}: need 1 < r < {lambda_minus}")]
    BadShapeParameter { r: f64, lambda_minus: f64 },

    /// A scale-index search left the representable range.
    #[error("scale index for |x| = {norm} left the searchable range |k| <= {max}")]
    ScaleUnresolvable { norm: f64, max: i64 },

    // --- exponent calculus ---
    /// An exponent fell outside its admissible interval.
    #[error("bad exponent: {what}")]
    BadExponent { what: String },

    /// A derived parameter range is empty.
    #[error("empty range: {what}")]
    EmptyRange { what: String },

    // --- sampled fields ---
    /// Grid construction parameters are invalid.
    #[error("bad grid: {what}")]
    BadGrid { what: String },

    /// Operation mixed spatial- and frequency-domain fields.
    #[error("domain tag mismatch: expected {expected}, got {got}")]
    TagMismatch {
        expected: &'static str,
        got: &'static str,
    },

    /// A rescaled field's support left the sampling box.
    #[error("dilated support exits the box: scale k = {k}, support radius {support} vs box extent {extent}")]
    ScaleOutOfRange { k: i64, support: f64, extent: f64 },

    /// A derivative order beyond the implemented stencil table was requested.
    #[error("derivative order {order} exceeds the supported maximum {max}")]
    DerivativeOrderExceeded { order: usize, max: usize },

    // --- multiplier estimation ---
    /// An evaluation point does not lie in the required frequency shell.
    #[error("point is outside shell {j}: membership index {found}")]
    OutsideShell { j: i64, found: i64 },

    /// A symbol evaluation or estimate produced a non-finite value.
    #[error("non-finite value encountered: {what}")]
    NonFinite { what: String },

    // --- kernel synthesis ---
    /// Too few grid points fall inside a frequency shell to resolve it.
    #[error("frequency shell {j} is unresolved on the grid: {points} points (need >= {need})")]
    ShellUnresolved { j: i64, points: usize, need: usize },

    // --- atoms and molecules ---
    /// Gram matrix conditioning is too poor for a reliable orthonormal basis.
    #[error("ill-conditioned Gram matrix: estimated condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    /// A constructed atom failed one of its defining conditions.
    #[error("atom validation failed ({which}): residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    AtomValidationFailed {
        which: String,
        residual: f64,
        tol: f64,
    },

    /// The molecule has no usable normalization.
    #[error("degenerate normalization: {what}")]
    NormalizationDegenerate { what: String },

    // --- plumbing ---
    /// I/O failure while reading or writing a field or report.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}
