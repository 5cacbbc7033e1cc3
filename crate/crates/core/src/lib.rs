//! Statistics engine for auditing person-centric annotations of image-text
//! corpora.

pub mod consensus;
pub mod audit;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod io;
pub mod sae;
pub mod sentiment;
pub mod synth;
pub mod textindex;
pub mod topics;
pub mod transfer;

pub use corpus::{CorpusView, Gender, Identity, ImageRecord, PersonBox, Race};
pub use error::{Error, Result};
pub use textindex::{InvertedIndex, KeywordQuery, LemmaDictionary};
