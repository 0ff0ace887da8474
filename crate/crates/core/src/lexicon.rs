//! Sentiment lexicons, connective lists, negation handling and the
//! lexicon-sum fallback scorer.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Serialize;

use crate::corpus::{tokenize, Polarity};
use crate::error::{Error, Result};

pub const DEFAULT_CONNECTIVES: &str = include_str!("../resources/connectives.ini");
pub const DEFAULT_LEXICON: &str = include_str!("../resources/lexicon_en.tsv");

/// Scores are rescaled into this range when normalization is requested.
pub const SCORE_BOUND: f64 = 4.0;
pub const DEFAULT_MIN_STRENGTH: f64 = 1.0;
pub const DEFAULT_NEGATION_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: HashMap<String, f64>,
    pub min_strength: f64,
}

impl Lexicon {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Lexicon {
            entries: entries
                .into_iter()
                .map(|(k, v)| (k.into().to_lowercase(), v))
                .collect(),
            min_strength: DEFAULT_MIN_STRENGTH,
        }
    }

    pub fn with_min_strength(mut self, min_strength: f64) -> Self {
        self.min_strength = min_strength;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    /// Score of a token that counts as a sentiment word.
    pub fn active_score(&self, token: &str) -> Option<f64> {
        self.score(token)
            .filter(|s| *s != 0.0 && s.abs() >= self.min_strength)
    }

    pub fn is_active(&self, token: &str) -> bool {
        self.active_score(token).is_some()
    }

    /// Linearly rescales scores so the largest magnitude becomes 4.
    pub fn normalize(&mut self) {
        let max = self.entries.values().fold(0.0f64, |m, s| m.max(s.abs()));
        if max > 0.0 {
            let scale = SCORE_BOUND / max;
            for s in self.entries.values_mut() {
                *s *= scale;
            }
        }
    }

    /// `token<TAB>score` lines in token order.
    pub fn to_tsv(&self) -> String {
        let mut entries: Vec<_> = self.entries.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        entries.iter().map(|(t, s)| format!("{t}\t{s}\n")).collect()
    }

    pub fn bundled() -> Self {
        parse_lexicon(DEFAULT_LEXICON, false).expect("bundled lexicon parses")
    }
}

pub fn load_lexicon(path: impl AsRef<Path>, normalize: bool) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text, normalize).map_err(|e| match e {
        Error::Parse { context, message } => Error::Parse {
            context: format!("{}: {context}", path.display()),
            message,
        },
        other => other,
    })
}

/// Parses `token<TAB>score` lines. Blank lines and `#` comments are skipped;
/// a repeated token keeps its last score.
pub fn parse_lexicon(text: &str, normalize: bool) -> Result<Lexicon> {
    let mut entries = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, score) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(format!("line {}", idx + 1), "expected token<TAB>score"))?;
        let score: f64 = score.trim().parse().map_err(|e| {
            Error::parse(format!("line {}", idx + 1), format!("score `{score}`: {e}"))
        })?;
        if !score.is_finite() {
            return Err(Error::parse(
                format!("line {}", idx + 1),
                "score is not finite",
            ));
        }
        let token = token.trim().to_lowercase();
        if entries.insert(token.clone(), score).is_some() {
            log::warn!(
                "lexicon line {}: duplicate entry `{token}`, keeping the last score",
                idx + 1
            );
        }
    }
    let mut lexicon = Lexicon {
        entries,
        min_strength: DEFAULT_MIN_STRENGTH,
    };
    if normalize {
        lexicon.normalize();
    }
    Ok(lexicon)
}

/// A connective phrase as a token sequence.
pub type Phrase = Vec<String>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConnectiveLists {
    pub contrast: Vec<Phrase>,
    pub hypothetical: Vec<Phrase>,
    pub condition: Vec<Phrase>,
    pub negation: HashSet<String>,
    pub shift: Vec<Phrase>,
}

impl ConnectiveLists {
    pub fn bundled() -> Self {
        parse_connectives(DEFAULT_CONNECTIVES).expect("bundled connectives parse")
    }

    pub fn is_negation(&self, token: &str) -> bool {
        self.negation.contains(token) || token.ends_with("n't")
    }

    /// Token ranges of shift-word occurrences.
    pub fn shift_matches(&self, tokens: &[String]) -> Vec<(usize, usize)> {
        match_phrases(tokens, &self.shift)
    }

    /// True if the tokens contain a contrast, hypothetical or condition connective.
    pub fn has_blocking_connective(&self, tokens: &[String]) -> bool {
        [&self.contrast, &self.hypothetical, &self.condition]
            .iter()
            .any(|list| !match_phrases(tokens, list).is_empty())
    }
}

pub fn load_connectives(path: impl AsRef<Path>) -> Result<ConnectiveLists> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_connectives(&text)
}

/// Parses the INI-like `[section]` format.
pub fn parse_connectives(text: &str) -> Result<ConnectiveLists> {
    let mut lists = ConnectiveLists::default();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_lowercase();
            if !matches!(
                name.as_str(),
                "contrast" | "hypothetical" | "condition" | "negation" | "shift"
            ) {
                return Err(Error::parse(
                    format!("line {}", idx + 1),
                    format!("unknown section [{name}]"),
                ));
            }
            section = Some(name);
            continue;
        }
        let phrase: Phrase = tokenize(line).into_iter().map(|t| t.text).collect();
        match section.as_deref() {
            None => {
                return Err(Error::parse(
                    format!("line {}", idx + 1),
                    "entry before any [section]",
                ));
            }
            Some("negation") => {
                lists
                    .negation
                    .insert(line.to_lowercase().replace('\u{2019}', "'"));
            }
            Some("contrast") => lists.contrast.push(phrase),
            Some("hypothetical") => lists.hypothetical.push(phrase),
            Some("condition") => lists.condition.push(phrase),
            Some(_) => lists.shift.push(phrase),
        }
    }
    Ok(lists)
}

/// Greedy left-to-right, longest-first, non-overlapping phrase matches.
pub fn match_phrases(tokens: &[String], phrases: &[Phrase]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = phrases
            .iter()
            .filter(|p| {
                !p.is_empty() && i + p.len() <= tokens.len() && tokens[i..i + p.len()] == p[..]
            })
            .map(Vec::len)
            .max();
        match best {
            Some(len) => {
                out.push((i, i + len));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentimentHit {
    pub token_index: usize,
    pub word: String,
    pub score: f64,
    pub raw_polarity: Polarity,
    pub negated: bool,
    pub effective_polarity: Polarity,
}

impl SentimentHit {
    pub fn new(token_index: usize, word: &str, score: f64, negated: bool) -> Self {
        let raw = Polarity::from_bit(score > 0.0);
        SentimentHit {
            token_index,
            word: word.to_string(),
            score,
            raw_polarity: raw,
            negated,
            effective_polarity: if negated { raw.flip() } else { raw },
        }
    }

    pub fn toggle_negation(&self) -> Self {
        SentimentHit::new(self.token_index, &self.word, self.score, !self.negated)
    }

    /// Score with the sign of the effective polarity.
    pub fn signed_score(&self) -> f64 {
        match self.effective_polarity {
            Polarity::Positive => self.score.abs(),
            Polarity::Negative => -self.score.abs(),
        }
    }
}

/// One hit per active lexicon token. A hit is negated when an odd number of
/// negation cues occurs among the `window` tokens right before it.
pub fn find_sentiment_hits(
    tokens: &[String],
    lexicon: &Lexicon,
    connectives: &ConnectiveLists,
    window: usize,
) -> Vec<SentimentHit> {
    tokens
        .iter()
        .enumerate()
        .filter_map(|(i, tok)| {
            let score = lexicon.active_score(tok)?;
            let cues = tokens[i.saturating_sub(window)..i]
                .iter()
                .filter(|t| connectives.is_negation(t))
                .count();
            Some(SentimentHit::new(i, tok, score, cues % 2 == 1))
        })
        .collect()
}

/// True iff some negation cue is outside the preceding window of every hit.
pub fn has_long_distance_negation(
    tokens: &[String],
    hits: &[SentimentHit],
    connectives: &ConnectiveLists,
    window: usize,
) -> bool {
    tokens.iter().enumerate().any(|(p, tok)| {
        connectives.is_negation(tok)
            && !hits
                .iter()
                .any(|h| p < h.token_index && p + window >= h.token_index)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FallbackLabel {
    pub polarity: Polarity,
    pub score: f64,
    /// Set when the score was exactly zero and the default sign was used.
    pub default: bool,
}

/// Polarity of the summed effective hit scores; a zero sum resolves to
/// positive and is flagged as a default decision.
pub fn fallback_label(hits: &[SentimentHit]) -> FallbackLabel {
    let score: f64 = hits.iter().map(SentimentHit::signed_score).sum();
    FallbackLabel {
        polarity: Polarity::from_bit(score >= 0.0),
        score,
        default: score == 0.0,
    }
}
