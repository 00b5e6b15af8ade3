//! Closed-form concept erasure for layered attention networks.
//!
//! The crate is organised bottom-up: [`linalg`] provides the dense kernels,
//! [`model`] the toy network being edited, [`solvers`] the two closed-form
//! projection updates, [`erasure`] the layer sweeps that apply them (each
//! sweep registered by name), and [`diagnostics`] the measurements taken on
//! edited models. [`oracle`] holds independent reference solvers for tests.

pub mod diagnostics;
pub mod erasure;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod report;
pub mod solvers;

pub use error::{DiagnosticsError, EraseError, LinalgError, ModelError, SolveError};
pub use linalg::Matrix;
pub use model::{Block, BlockKind, GenSpec, ModelStack};
pub use solvers::{EditResult, SolverConfig};
