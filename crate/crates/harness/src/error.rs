use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Models(#[from] sparsepix_models::ModelsError),
    #[error(transparent)]
    Core(#[from] sparsepix_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png error: {0}")]
    Png(#[from] image::ImageError),
    #[error("no records to aggregate")]
    EmptyRecords,
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
