use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("weights format: {0}")]
    Format(String),
    #[error("dimension mismatch: expected input of length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] sparsepix_core::Error),
}

pub type Result<T> = std::result::Result<T, ModelsError>;
