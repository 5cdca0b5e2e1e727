use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid function has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("expected {expected} layers, got {got}")]
    LayerCountMismatch { expected: usize, got: usize },

    #[error("a + b*y = {value:.3e} at layer {layer}, node {index}, t = {t} is below k1/2")]
    DenominatorTooSmall {
        layer: usize,
        index: usize,
        t: f64,
        value: f64,
    },

    #[error("singular banded system at row {row} (pivot {pivot:.3e})")]
    LinearSolveFailure { row: usize, pivot: f64 },

    #[error("invalid stepper configuration: {0}")]
    InvalidStepper(String),

    #[error("infeasible contraction window: {0}")]
    InfeasibleWindow(String),

    #[error("window {window} starting at t = {t0}: {reason}")]
    WindowInfeasible {
        window: usize,
        t0: f64,
        reason: String,
    },

    #[error("Picard iteration did not converge after {iterations} iterations (defect {defect:.3e}, last ratio {ratio:.3})")]
    NoConvergence {
        iterations: usize,
        defect: f64,
        ratio: f64,
    },

    #[error("Gronwall monitor violated at t = {t}: {value:.6e} > {bound:.6e}")]
    BoundViolated { t: f64, value: f64, bound: f64 },

    #[error("perturbed parameters violate hypotheses: {0}")]
    HypothesisViolatedByPerturbation(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("scenario error at `{key}`: {message}")]
    Scenario { key: String, message: String },

    #[error("parse error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn scenario(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            key: key.into(),
            message: message.into(),
        }
    }
}
