//! The bundled laptop-review sample: two reviews, four aspect units, one of
//! them category-level, plus embeddings covering its vocabulary.

use crate::corpus::{parse_corpus, Corpus};
use crate::embeddings::{parse_embeddings, EmbeddingTable};
use crate::engine::Resources;

pub const SAMPLE_CORPUS: &str = include_str!("../resources/sample_corpus.json");
pub const SAMPLE_EMBEDDINGS: &str = include_str!("../resources/sample_embeddings.txt");

pub fn sample_corpus() -> Corpus {
    parse_corpus(SAMPLE_CORPUS).expect("bundled sample corpus parses")
}

pub fn sample_embeddings() -> EmbeddingTable {
    parse_embeddings(SAMPLE_EMBEDDINGS).expect("bundled sample embeddings parse")
}

/// Bundled lexicon and connectives with the sample embeddings.
pub fn sample_resources() -> Resources {
    Resources {
        embeddings: Some(sample_embeddings()),
        ..Resources::bundled()
    }
}
