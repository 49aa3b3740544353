//! From-scratch trainable text embedder.
//!
//! Text is tokenized, turned into hashed unigram, bigram and character
//! 3-gram features, projected by a dense matrix and L2-normalized. The
//! projection matrix is the only trainable parameter.

mod features;
mod model;
mod tokenize;

pub use features::{
    char_gram_text, feature_index, feature_keys, featurize_text, featurize_tokens, FeatureVector,
};
pub use model::{
    checksum_bytes, cosine, init_bound, init_model, init_model_with_hash_seed, EmbedError,
    Embedding, EmbeddingModel, DEFAULT_EMB_DIM, DEFAULT_FEAT_DIM, DEFAULT_HASH_SEED,
    MODEL_FORMAT_VERSION,
};
pub(crate) use model::{dot, Projected};
pub use tokenize::{is_han, tokenize, TokenSeq};
