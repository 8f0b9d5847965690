use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("surface fit failed in {region}: {reason}")]
    Fit { region: String, reason: String },

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("degenerate triplet: {0}")]
    DegenerateTriplet(String),

    #[error("degenerate direction: eigenvalue gap {gap:e} below tolerance")]
    DegenerateDirection { gap: f64 },

    #[error("wrinkle has no valid triplets")]
    Unquantified,

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("no closed form available at ({x:.6}, {y:.6})")]
    NotAvailable { x: f64, y: f64 },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
