//! Review corpora, aspect units and tokenization.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary aspect polarity. Neutral instances are not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == Polarity::Positive
    }

    pub fn flip(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    pub reviews: Vec<Review>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Review {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    /// Byte ranges of `tokens` in `text`; empty when the input was pre-tokenized.
    #[serde(skip)]
    pub offsets: Vec<(usize, usize)>,
    pub aspects: Vec<AspectRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AspectRef {
    pub id: String,
    pub term: Option<String>,
    pub category: Option<String>,
    /// Half-open token range of the term.
    pub term_span: Option<(usize, usize)>,
    pub gold: Option<Polarity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Atsa,
    Acsa,
}

/// One (review, sentence, aspect) triple. Indices point into the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AspectUnit {
    pub unit_id: usize,
    pub review: usize,
    pub sentence: usize,
    pub aspect: usize,
    pub mode: Mode,
}

impl Corpus {
    pub fn sentence(&self, unit: &AspectUnit) -> &Sentence {
        &self.reviews[unit.review].sentences[unit.sentence]
    }

    pub fn aspect(&self, unit: &AspectUnit) -> &AspectRef {
        &self.sentence(unit).aspects[unit.aspect]
    }

    pub fn review_id(&self, unit: &AspectUnit) -> &str {
        &self.reviews[unit.review].id
    }

    pub fn gold(&self, unit: &AspectUnit) -> Option<Polarity> {
        self.aspect(unit).gold
    }

    pub fn sentence_count(&self) -> usize {
        self.reviews.iter().map(|r| r.sentences.len()).sum()
    }

    /// Serializes back into the corpus JSON schema.
    pub fn to_json(&self) -> serde_json::Value {
        let reviews: Vec<RawReview> = self
            .reviews
            .iter()
            .map(|r| RawReview {
                id: r.id.clone(),
                sentences: r
                    .sentences
                    .iter()
                    .map(|s| RawSentence {
                        id: s.id.clone(),
                        text: s.text.clone(),
                        tokens: if s.offsets.is_empty() && !s.tokens.is_empty() {
                            Some(s.tokens.clone())
                        } else {
                            None
                        },
                        aspects: s
                            .aspects
                            .iter()
                            .map(|a| RawAspect {
                                id: a.id.clone(),
                                term: a.term.clone(),
                                category: a.category.clone(),
                                term_span: a.term_span.map(|(s, e)| [s, e]),
                                gold: a.gold,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        serde_json::to_value(RawCorpus { reviews }).expect("corpus serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    reviews: Vec<RawReview>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReview {
    id: String,
    sentences: Vec<RawSentence>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSentence {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    aspects: Vec<RawAspect>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAspect {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    term: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    term_span: Option<[usize; 2]>,
    #[serde(default)]
    gold: Option<Polarity>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text).map_err(|e| match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{}: {context}", path.display()),
            message,
        },
        other => other,
    })
}

/// Parses a corpus JSON document.
pub fn parse_corpus(json: &str) -> Result<Corpus> {
    let raw: RawCorpus = serde_json::from_str(json)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e))?;
    let mut review_ids = HashSet::new();
    let mut reviews = Vec::with_capacity(raw.reviews.len());
    for r in raw.reviews {
        if !review_ids.insert(r.id.clone()) {
            return Err(Error::DuplicateId {
                kind: "review",
                id: r.id,
            });
        }
        let mut sentence_ids = HashSet::new();
        let mut sentences = Vec::with_capacity(r.sentences.len());
        for s in r.sentences {
            if !sentence_ids.insert(s.id.clone()) {
                return Err(Error::DuplicateId {
                    kind: "sentence",
                    id: format!("{}/{}", r.id, s.id),
                });
            }
            let (tokens, offsets): (Vec<String>, Vec<(usize, usize)>) = match s.tokens {
                Some(tokens) => (
                    tokens.iter().map(|t| normalize_token(t)).collect(),
                    Vec::new(),
                ),
                None => tokenize(&s.text)
                    .into_iter()
                    .map(|t| (t.text, (t.start, t.end)))
                    .unzip(),
            };
            let mut aspect_ids = HashSet::new();
            let mut aspects = Vec::with_capacity(s.aspects.len());
            for a in s.aspects {
                let qualified = format!("{}/{}/{}", r.id, s.id, a.id);
                if !aspect_ids.insert(a.id.clone()) {
                    return Err(Error::DuplicateId {
                        kind: "aspect",
                        id: qualified,
                    });
                }
                if a.term.is_none() && a.category.is_none() {
                    return Err(Error::AspectWithoutTarget(qualified));
                }
                let term_span = match (a.term_span, &a.term) {
                    (Some([start, end]), _) => {
                        if start >= end || end > tokens.len() {
                            return Err(Error::InvalidTermSpan {
                                id: qualified,
                                start,
                                end,
                                len: tokens.len(),
                            });
                        }
                        Some((start, end))
                    }
                    (None, Some(term)) => locate_term(&tokens, term),
                    (None, None) => None,
                };
                aspects.push(AspectRef {
                    id: a.id,
                    term: a.term,
                    category: a.category,
                    term_span,
                    gold: a.gold,
                });
            }
            sentences.push(Sentence {
                id: s.id,
                text: s.text,
                tokens,
                offsets,
                aspects,
            });
        }
        reviews.push(Review {
            id: r.id,
            sentences,
        });
    }
    Ok(Corpus { reviews })
}

/// First occurrence of the tokenized term inside `tokens`.
fn locate_term(tokens: &[String], term: &str) -> Option<(usize, usize)> {
    let needle: Vec<String> = tokenize(term).into_iter().map(|t| t.text).collect();
    if needle.is_empty() || needle.len() > tokens.len() {
        return None;
    }
    tokens
        .windows(needle.len())
        .position(|w| w == needle.as_slice())
        .map(|start| (start, start + needle.len()))
}

/// Lists aspect units in review, sentence, aspect order.
pub fn enumerate_aspect_units(corpus: &Corpus) -> Vec<AspectUnit> {
    let mut units = Vec::new();
    for (ri, review) in corpus.reviews.iter().enumerate() {
        for (si, sentence) in review.sentences.iter().enumerate() {
            for (ai, aspect) in sentence.aspects.iter().enumerate() {
                units.push(AspectUnit {
                    unit_id: units.len(),
                    review: ri,
                    sentence: si,
                    aspect: ai,
                    mode: if aspect.term.is_some() {
                        Mode::Atsa
                    } else {
                        Mode::Acsa
                    },
                });
            }
        }
    }
    units
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn normalize_token(t: &str) -> String {
    t.to_lowercase().replace('\u{2019}', "'")
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercased word/punctuation tokens with byte offsets into `text`.
///
/// Apostrophes and hyphens between word characters stay inside the token,
/// so "don't" and "well-made" are single tokens. Every other
/// non-alphanumeric, non-whitespace character is its own token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| chars.get(i + 1).map_or(text.len(), |&(b, _)| b);
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i;
            loop {
                let next = j + 1;
                if next < chars.len() && chars[next].1.is_alphanumeric() {
                    j = next;
                } else if next + 1 < chars.len()
                    && (is_apostrophe(chars[next].1) || chars[next].1 == '-')
                    && chars[next + 1].1.is_alphanumeric()
                {
                    j = next + 1;
                } else {
                    break;
                }
            }
            let end = end_of(j);
            tokens.push(Token {
                text: normalize_token(&text[start..end]),
                start,
                end,
            });
            i = j + 1;
        } else {
            let end = end_of(i);
            tokens.push(Token {
                text: text[start..end].to_string(),
                start,
                end,
            });
            i += 1;
        }
    }
    tokens
}

pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}
