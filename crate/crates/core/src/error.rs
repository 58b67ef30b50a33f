use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is numerically singular ({0})")]
    Singular(String),

    #[error("eigenvalues nearly coincide: |l1 - l2| = {gap:e} < {tol:e}")]
    DegenerateEigenpair { gap: f64, tol: f64 },

    #[error("spectral parameter {re} + {im}i sits on a band edge")]
    BandEdge { re: f64, im: f64 },

    #[error("margin {delta} too large for q = {q} (smallest half-width {half_width})")]
    DeltaTooLarge { q: usize, delta: f64, half_width: f64 },

    #[error("resolvent diverges: |lambda~| = {0} >= 1 (Im z must be positive)")]
    Divergent(f64),

    #[error("input has a tail on the resonant side of the resolvent")]
    ResonantTail,

    #[error("potential support [{lo}, {hi}] does not fit in window [{win_lo}, {win_hi}]")]
    SupportOverflow { lo: i64, hi: i64, win_lo: i64, win_hi: i64 },

    #[error("square-root branch tracking failed: {0}")]
    BranchTracking(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("Jost function vanishes at z = {0}")]
    ZeroJost(f64),

    #[error("entropy integrand needs positive samples; got {value} at z = {z}")]
    NonPositiveSample { z: f64, value: f64 },

    #[error("sequence must be nonnegative; entry {index} is {value}")]
    Negative { index: usize, value: f64 },

    #[error("accumulated normalizer vanishes")]
    VanishingNormalizer,

    #[error("expanding eigenvalue modulus {0} is not above 1")]
    KappaModulus(f64),

    #[error("unknown potential family: {0}")]
    UnknownFamily(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
