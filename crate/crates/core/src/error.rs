use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("field: {0}")]
    Field(String),

    #[error("domain: shape does not fit in the grid box with a margin of {margin_cells} cells")]
    ShapeOutsideBox { margin_cells: usize },

    #[error("domain: degenerate shape ({0})")]
    DegenerateShape(String),

    #[error("norm: empty mask")]
    EmptyMask,

    #[error("norm: derivative order {0} outside 0..=3")]
    NormOrder(usize),

    #[error("cgo: radicand 1/h² + a²/4 − k² = {0} is not positive")]
    Radicand(f64),

    #[error("cgo: invalid parameter ({0})")]
    CgoParams(String),

    #[error("cgo: Neumann series does not contract (update ratio {ratio:.3})")]
    NonContraction { ratio: f64 },

    #[error("cgo: fixed point diverging (update {update:.3e} after {iterations} iterations)")]
    Divergence { iterations: usize, update: f64 },

    #[error("cgo: {iterations} iterations exceeded (last update {update:.3e})")]
    MaxIterations { iterations: usize, update: f64 },

    #[error("cgo: |Im ζ|·diam(Ω) = {exponent:.1} exceeds the limit {limit:.1}")]
    Inadmissible { exponent: f64, limit: f64 },

    #[error("forward: {0}")]
    Forward(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("transport: {failed} of {total} characteristics failed")]
    TraceFailures { failed: usize, total: usize },

    #[error("matrix: {0}")]
    Matrix(String),

    #[error("recovery: {0}")]
    Recovery(String),

    #[error("io: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
