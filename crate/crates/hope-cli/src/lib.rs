//! Dataset ingestion and model serialization for the `hope` binary.
//!
//! The command-line surface lives in the binary; this library holds the
//! pieces tests and other tools need to read and write the same artifacts:
//! IDX datasets and versioned model files.

pub mod idx;
pub mod modelfile;

pub use idx::{load_idx, read_idx_images, read_idx_labels, IdxDataset, IdxError};
pub use modelfile::{
    load_model, model_bytes, parse_model, save_model, ModelFile, ModelFileError, ModelPayload,
};

use thiserror::Error;

/// Anything a CLI run can fail with.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hope_core::HopeError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error(transparent)]
    Features(#[from] hope_pipeline::FeatureFileError),
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
