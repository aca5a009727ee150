//! Tokenizer experiments: character-level BPE training, encoding,
//! compression and LaTeX-command fragmentation metrics, and config/tokenizer
//! compatibility linting.

mod bpe;
mod lint;
mod metrics;
mod model;

use thiserror::Error;

pub use bpe::{pretokenize, train_bpe, train_bpe_with, TrainConfig};
pub use lint::{
    lint_model_config, tokenizer_family, Diagnostic, DiagnosticCode, ModelConfigSummary, Severity, MODEL_TYPE_FAMILIES,
};
pub use metrics::{
    corpus_token_stats, fragmentation_stats, latex_commands, CommandFragmentation, FragmentationReport, TokenStats,
    DEFAULT_TOP_COMMANDS,
};
pub use model::{byte_token, SpecialTokens, TokenSpan, TokenizerFile, TokenizerModel, TOKENIZER_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("target vocabulary {target} is smaller than the corpus alphabet ({alphabet} symbols)")]
    VocabTooSmall { target: usize, alphabet: usize },
    #[error("cannot encode {0:?}: byte fallback is off and no unk token is defined")]
    UnencodableInput(char),
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("invalid tokenizer: {0}")]
    InvalidModel(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
