use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown symbol {symbol:?} for alphabet {alphabet:?}")]
    UnknownSymbol {
        symbol: String,
        alphabet: Vec<String>,
    },
    #[error("pdt: {0}")]
    Pdt(String),
    #[error("grammar: {0}")]
    Grammar(String),
    #[error("sampler for task {task} (seed {seed}) failed after {attempts} attempts")]
    SamplerExhausted {
        task: String,
        seed: u64,
        attempts: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no evaluated positions in split")]
    EmptyMask,
}

pub type Result<T> = std::result::Result<T, Error>;
