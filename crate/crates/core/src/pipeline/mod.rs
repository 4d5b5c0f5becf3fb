//! Model-level plumbing: array files, manifests, per-layer compression,
//! reports, verification and the command line.

pub mod cli;
mod compress;
mod manifest;
pub mod npy;
mod report;
mod verify;

pub use compress::{
    compress_model, evaluate_functional_error, resolve_jobs, CompressConfig, CompressOutcome,
    LayerFactors, THREADS_ENV,
};
pub use manifest::{LayerEntry, LayerKind, ModelManifest};
pub use npy::{read_matrix, read_tensor, write_matrix, write_tensor, Array};
pub use report::{
    CompressionReport, InitKind, LayerReport, NormKind, ReportConfig, Status, Totals, SCHEMA,
};
pub use verify::{verify, verify_report, VerifySummary, VERIFY_TOL};
