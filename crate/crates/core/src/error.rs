use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum FilamentError {
    #[error("unsupported kernel derivative order ({0}, {1}); need i + j <= 3")]
    UnsupportedOrder(usize, usize),

    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("non-finite coordinate in sample {0}")]
    NonFinite(usize),

    #[error("Hessian is degenerate at {at:?}: d2f = {d2:?}")]
    Degenerate { at: Option<[f64; 2]>, d2: [f64; 3] },

    #[error("gradient term vanishes at {0:?} (flat filament)")]
    FlatFilament([f64; 2]),

    #[error("density is not positive at {0:?}")]
    ZeroDensity([f64; 2]),

    #[error("derivative of a(t) vanishes at {0:?}")]
    ZeroSlope([f64; 2]),

    #[error("start point {0:?} lies outside the working domain")]
    OutOfBounds([f64; 2]),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("ridge crossing not found")]
    HitNotFound,

    #[error("polyline needs at least {0} vertices")]
    ShortPolyline(usize),

    #[error("{failed} of {total} replicates failed (limit 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("noise grid of {cells} cells exceeds the budget of {budget}")]
    CellBudget { cells: usize, budget: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FilamentError>;
