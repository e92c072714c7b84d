use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("point outside cell {cell}: barycentric coordinates {bary:?}")]
    Domain { cell: usize, bary: [f64; 3] },
    #[error("monotonicity violated: derivative {deriv} at {at} on [{lo}, {hi}]")]
    Monotonicity { at: f64, deriv: f64, lo: f64, hi: f64 },
    #[error("permeability must be positive, got {value} at ({x}, {y})")]
    Permeability { value: f64, x: f64, y: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve failed: {0}")]
    LinearSolve(String),
    #[error("iteration diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },
    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
