//! Posts, users, thread instances and the text plumbing around them.

mod encoder;
pub mod io;
mod sentence;
mod tokenize;
mod types;
mod vocab;

pub use encoder::{
    sentence_key, EncoderConfig, FileEncoder, HashedEncoder, SentenceEncoder, SentenceVector,
};
pub use sentence::{split_sentences, Abbreviations};
pub use tokenize::{token_spans, tokenize, words};
pub use types::{Post, RiskLabel, ThreadInstance, UserLabel, UserRecord};
pub use vocab::Vocabulary;
