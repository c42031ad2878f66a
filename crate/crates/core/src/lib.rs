//! Mining pseudoparallel sentence pairs from comparable web corpora.
//!
//! The pipeline crawls monolingual pages, cleans and deduplicates sentences,
//! optionally code-switches the source side through a bilingual dictionary,
//! embeds both sides with an external provider, and mines translation pairs
//! with a margin criterion over k-nearest-neighbor search.

pub mod bpe;
pub mod codeswitch;
pub mod corpus;
pub mod crawler;
pub mod eval;
pub mod mine;
pub mod providers;
