use thiserror::Error;

fn dims((r, c): &(usize, usize)) -> String {
    format!("{r}x{c}")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {} vs {}", dims(.left), dims(.right))]
    Shape { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular or ill-conditioned (condition estimate {estimate:e})")]
    Singular { estimate: f64 },
    #[error("non-finite value produced by {op} at flat index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("data length {len} does not match {rows}x{cols}")]
    Length { rows: usize, cols: usize, len: usize },
    #[error("row {row} has length {found}, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(
        "inconsistent constraints: duplicated target column pairs {pairs:?} map to different anchors; \
         unsatisfied columns {columns:?} (residual {residual:e})"
    )]
    Infeasible { pairs: Vec<(usize, usize)>, columns: Vec<usize>, residual: f64 },
    #[error("constraint residual {residual:e} exceeds bound {bound:e}")]
    ConstraintViolated { residual: f64, bound: f64 },
    #[error("oracle declined: {0}")]
    OracleDeclined(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("token id {id} is out of range for vocabulary of size {vocab}")]
    Vocab { id: usize, vocab: usize },
    #[error("model file error at {location}: {message}")]
    Load { location: String, message: String },
    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
}

impl ModelError {
    pub(crate) fn load(location: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Load { location: location.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EraseError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid erase configuration: {0}")]
    Config(String),
    #[error("layer {layer} ({projection}): {source}")]
    Solve {
        layer: usize,
        projection: String,
        #[source]
        source: SolveError,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl EraseError {
    /// True when the failure stems from an unsatisfiable or violated constraint.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            EraseError::Solve {
                source: SolveError::Infeasible { .. } | SolveError::ConstraintViolated { .. },
                ..
            }
        )
    }

    pub fn layer(&self) -> Option<usize> {
        match self {
            EraseError::Solve { layer, .. } => Some(*layer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("models are not structurally identical: {0}")]
    Structure(String),
    #[error("invalid parameter: {0}")]
    Param(String),
}
