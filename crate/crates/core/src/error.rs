use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh generation failed: {0}")]
    GenerationFailed(String),

    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    #[error("mesh validation failed: {0}")]
    Validation(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("element kernel failed on cell {cell}: {message}")]
    ElementKernel { cell: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data incompatible with essential boundary conditions: {0}")]
    DataIncompatibility(String),

    #[error("non-finite load sample at ({x}, {y})")]
    Evaluation { x: f64, y: f64 },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("Newton failed at step {step} after {iterations} iterations (residual {residual:.3e})")]
    StepFailed {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
