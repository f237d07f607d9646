//! Corpus ingestion: tokenization, vocabulary, numericalization, splits.

mod cache;
mod dataset;
mod load;
mod tokenize;
mod vocab;

pub use cache::{read_cache, write_cache, CACHE_VERSION};
pub use dataset::{stratified_indices, EncodedDataset, RawDataset, Record};
pub use load::{load_corpus, load_csv, load_review_dirs, Corpus};
pub use tokenize::{tokenize_regex, tokenize_simple, TokenizerKind, DEFAULT_MAX_LEN, IMDB_MAX_LEN};
pub use vocab::{Vocab, PAD, UNK};
