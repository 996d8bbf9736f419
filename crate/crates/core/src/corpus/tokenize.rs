//! Token counting for length filters and `TextUnit::token_count`.

use thiserror::Error;

#[derive(Debug, Error)]
#[error("tokenizer failed: {0}")]
pub struct TokenizerError(pub String);

/// Counts model tokens in a string.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> Result<usize, TokenizerError>;
}

/// Splits on Unicode whitespace. Used in tests and for the synthetic corpora.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn count(&self, text: &str) -> Result<usize, TokenizerError> {
        Ok(text.split_whitespace().count())
    }
}

/// Byte-pair tokenizer matching the vocabulary of recent OpenAI chat models.
#[cfg(feature = "tiktoken")]
pub struct BpeTokenizer {
    name: String,
    bpe: tiktoken_rs::CoreBPE,
}

#[cfg(feature = "tiktoken")]
impl BpeTokenizer {
    /// `o200k_base` (gpt-4o family) or `cl100k_base`.
    pub fn new(encoding: &str) -> Result<Self, TokenizerError> {
        let bpe = match encoding {
            "o200k_base" => tiktoken_rs::o200k_base(),
            "cl100k_base" => tiktoken_rs::cl100k_base(),
            other => return Err(TokenizerError(format!("unsupported encoding {other}"))),
        }
        .map_err(|e| TokenizerError(e.to_string()))?;
        Ok(BpeTokenizer { name: encoding.to_string(), bpe })
    }
}

#[cfg(feature = "tiktoken")]
impl Tokenizer for BpeTokenizer {
    fn name(&self) -> &str {
        &self.name
    }

    fn count(&self, text: &str) -> Result<usize, TokenizerError> {
        Ok(self.bpe.encode_with_special_tokens(text).len())
    }
}

/// Resolves a tokenizer by configuration name.
pub fn tokenizer_by_name(name: &str) -> Result<Box<dyn Tokenizer>, TokenizerError> {
    match name {
        "whitespace" => Ok(Box::new(WhitespaceTokenizer)),
        #[cfg(feature = "tiktoken")]
        "o200k_base" | "cl100k_base" => Ok(Box::new(BpeTokenizer::new(name)?)),
        other => Err(TokenizerError(format!(
            "unknown tokenizer {other:?} (BPE vocabularies need the `tiktoken` feature)"
        ))),
    }
}
