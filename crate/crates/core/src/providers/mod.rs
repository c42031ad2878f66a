//! Client side of the model-provider protocol and the embedding file format.
//!
//! Sentence encoders and translators run behind a process boundary. A
//! provider is reached through a child process (stdin/stdout) or over HTTP
//! (`POST /rpc`); both carry the same newline-delimited JSON messages, see
//! [`protocol`]. [`mock::MockProvider`] implements the protocol in-process.

mod client;
mod matrix;
pub mod mock;
pub mod protocol;

pub use client::{
    HttpTransport, InProcessTransport, ProcessTransport, ProviderError, ProviderHandle,
    ProviderOptions, Transport, DEFAULT_EMBED_BATCH, DEFAULT_TRANSLATE_BATCH,
};
pub use matrix::{load_embeddings, read_embeddings, EmbeddingError, EmbeddingMatrix, EMBEDDING_MAGIC};
pub use mock::{MockProvider, MockTranslate};
