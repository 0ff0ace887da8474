//! Word vectors in the whitespace-separated text format.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `None` for tokens without a vector.
    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Cosine similarity; unknown tokens and zero vectors score 0.
    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        match (self.get(a), self.get(b)) {
            (Some(x), Some(y)) => cosine(x, y),
            _ => 0.0,
        }
    }

    pub fn from_vectors(dimension: usize, vectors: HashMap<String, Vec<f32>>) -> Result<Self> {
        if let Some((token, v)) = vectors.iter().find(|(_, v)| v.len() != dimension) {
            return Err(Error::parse(
                format!("vector for `{token}`"),
                format!("dimension {} differs from {dimension}", v.len()),
            ));
        }
        Ok(EmbeddingTable { dimension, vectors })
    }
}

fn cosine(x: &[f32], y: &[f32]) -> f64 {
    let (mut dot, mut nx, mut ny) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot / (nx.sqrt() * ny.sqrt())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text).map_err(|e| match e {
        Error::EmptyEmbeddings(_) => Error::EmptyEmbeddings(path.display().to_string()),
        other => other,
    })
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut dimension = None;
    let mut vectors = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        // "<count> <dim>" header
        if idx == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dimension = Some(fields[1].parse::<usize>().unwrap());
            continue;
        }
        let found = fields.len() - 1;
        let expected = *dimension.get_or_insert(found);
        if found != expected || found == 0 {
            return Err(Error::EmbeddingArity {
                line: lineno,
                expected,
                found,
            });
        }
        let vector = fields[1..]
            .iter()
            .map(|f| f.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(format!("line {lineno}"), e))?;
        vectors.insert(fields[0].to_lowercase(), vector);
    }
    match dimension {
        Some(d) if !vectors.is_empty() => Ok(EmbeddingTable {
            dimension: d,
            vectors,
        }),
        _ => Err(Error::EmptyEmbeddings("<input>".into())),
    }
}
