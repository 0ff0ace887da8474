//! Clause segmentation, opinion-span association, word and relational
//! feature extraction, and the running label statistics over features.

use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{is_punctuation, AspectUnit, Corpus, Mode, Polarity, Sentence};
use crate::embeddings::EmbeddingTable;
use crate::lexicon::{find_sentiment_hits, ConnectiveLists, Lexicon, SentimentHit};
use crate::par;

pub const DEFAULT_SIM_THRESHOLD: f64 = 0.5;
pub const DEFAULT_KGRAM_MAX: usize = 3;

const CLAUSE_PUNCTUATION: &[&str] = &[
    ",", ";", ":", ".", "!", "?", "(", ")", "[", "]", "-", "\u{2013}", "\u{2014}",
];

/// Function words that are never opinion-target candidates.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "it", "its", "it's", "i", "me", "my", "we",
    "our", "you", "your", "he", "she", "they", "them", "their", "is", "are", "was", "were", "be",
    "been", "am", "has", "have", "had", "do", "does", "did", "can", "could", "will", "would",
    "should", "may", "might", "must", "and", "or", "of", "to", "in", "on", "at", "for", "with",
    "by", "from", "as", "about", "so", "very", "also", "too", "just", "really", "quite", "there",
    "here", "what", "which", "who", "when", "than", "then", "all", "any", "some", "up", "out",
    "over", "more", "most", "much", "only", "even",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segmentation {
    /// Half-open token ranges, in order.
    pub clauses: Vec<(usize, usize)>,
    /// `shift_boundaries[i]` tells whether a shift word separates clause i from i + 1.
    pub shift_boundaries: Vec<bool>,
    /// The sentence opens with a shift word ("However, ...").
    pub leading_shift: bool,
    /// A shift word occurs after the opening position.
    pub inner_shift: bool,
}

impl Segmentation {
    pub fn has_shift(&self) -> bool {
        self.leading_shift || self.inner_shift
    }

    /// Index of the clause holding `token`, or of the next clause when the
    /// token is a separator.
    pub fn clause_of(&self, token: usize) -> Option<usize> {
        self.clauses
            .iter()
            .position(|&(s, e)| token < e && token >= s)
            .or_else(|| self.clauses.iter().position(|&(s, _)| s > token))
            .or_else(|| self.clauses.len().checked_sub(1))
    }

    /// Whether a shift boundary lies between two clauses.
    pub fn shift_between(&self, a: usize, b: usize) -> bool {
        let (lo, hi) = (a.min(b), a.max(b));
        self.shift_boundaries[lo..hi].iter().any(|&s| s)
    }
}

pub fn segment_clauses(tokens: &[String], connectives: &ConnectiveLists) -> Segmentation {
    let shifts = connectives.shift_matches(tokens);
    let mut clauses = Vec::new();
    let mut shift_boundaries = Vec::new();
    let mut leading_shift = false;
    let mut inner_shift = false;
    let mut pending_shift = false;
    let mut current: Option<usize> = None;
    let mut next_shift = shifts.iter().peekable();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(&&(s, e)) = next_shift.peek() {
            if s == i {
                next_shift.next();
                if let Some(start) = current.take() {
                    clauses.push((start, i));
                }
                if clauses.is_empty() {
                    leading_shift = true;
                } else {
                    inner_shift = true;
                    pending_shift = true;
                }
                i = e;
                continue;
            }
        }
        if CLAUSE_PUNCTUATION.contains(&tokens[i].as_str()) {
            if let Some(start) = current.take() {
                clauses.push((start, i));
            }
        } else if current.is_none() {
            if !clauses.is_empty() {
                shift_boundaries.push(pending_shift);
            }
            pending_shift = false;
            current = Some(i);
        }
        i += 1;
    }
    if let Some(start) = current {
        clauses.push((start, tokens.len()));
    }
    // a second shift word before the first clause is still "inner"
    if leading_shift && shifts.len() > 1 && clauses.is_empty() {
        inner_shift = true;
    }
    Segmentation {
        clauses,
        shift_boundaries,
        leading_shift,
        inner_shift,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Association {
    ExplicitTerm,
    EmbeddingSimilarity,
    WholeSentence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpinionSpan {
    pub unit_id: usize,
    pub start: usize,
    pub end: usize,
    /// Clause index in the sentence segmentation; `None` for whole-sentence spans.
    pub clause: Option<usize>,
    pub association: Association,
}

impl OpinionSpan {
    pub fn whole(unit_id: usize, sentence: &Sentence) -> Self {
        OpinionSpan {
            unit_id,
            start: 0,
            end: sentence.tokens.len(),
            clause: None,
            association: Association::WholeSentence,
        }
    }

    pub fn tokens<'a>(&self, sentence: &'a Sentence) -> &'a [String] {
        &sentence.tokens[self.start..self.end]
    }
}

fn category_tokens(category: &str) -> Vec<String> {
    category
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Associates a unit with the clause that expresses the opinion about it.
///
/// Aspect terms pick the clause that contains them. Aspect categories pick
/// the clause whose opinion-target candidates or sentiment words are most
/// similar to a category token, provided the similarity reaches
/// `sim_threshold`. Anything unresolved falls back to the whole sentence.
pub fn resolve_opinion_span(
    unit: &AspectUnit,
    corpus: &Corpus,
    segmentation: &Segmentation,
    lexicon: &Lexicon,
    embeddings: Option<&EmbeddingTable>,
    sim_threshold: f64,
) -> OpinionSpan {
    let sentence = corpus.sentence(unit);
    let aspect = corpus.aspect(unit);
    let clause_span = |ci: usize, association| {
        let (start, end) = segmentation.clauses[ci];
        OpinionSpan {
            unit_id: unit.unit_id,
            start,
            end,
            clause: Some(ci),
            association,
        }
    };
    if segmentation.clauses.is_empty() {
        return OpinionSpan::whole(unit.unit_id, sentence);
    }
    if unit.mode == Mode::Atsa {
        return match aspect
            .term_span
            .and_then(|(s, _)| segmentation.clause_of(s))
        {
            Some(ci) => clause_span(ci, Association::ExplicitTerm),
            None => OpinionSpan::whole(unit.unit_id, sentence),
        };
    }
    let targets = category_tokens(aspect.category.as_deref().unwrap_or_default());
    let similarity = |tok: &str| {
        targets
            .iter()
            .map(|c| {
                if c == tok {
                    1.0
                } else {
                    embeddings.map_or(0.0, |e| e.similarity(c, tok))
                }
            })
            .fold(0.0f64, f64::max)
    };
    let mut best: Option<(usize, f64)> = None;
    for (ci, &(s, e)) in segmentation.clauses.iter().enumerate() {
        let score = sentence.tokens[s..e]
            .iter()
            .filter(|t| {
                lexicon.is_active(t) || (!is_punctuation(t) && !STOPWORDS.contains(&t.as_str()))
            })
            .map(|t| similarity(t))
            .fold(0.0f64, f64::max);
        if score >= sim_threshold && best.is_none_or(|(_, b)| score > b) {
            best = Some((ci, score));
        }
    }
    match best {
        Some((ci, _)) => clause_span(ci, Association::EmbeddingSimilarity),
        None => OpinionSpan::whole(unit.unit_id, sentence),
    }
}

/// Hits of the sentence that fall inside the span. Negation is checked over
/// the full sentence so cues just before the span still count.
pub fn span_hits(
    sentence: &Sentence,
    span: &OpinionSpan,
    lexicon: &Lexicon,
    connectives: &ConnectiveLists,
    window: usize,
) -> Vec<SentimentHit> {
    find_sentiment_hits(&sentence.tokens, lexicon, connectives, window)
        .into_iter()
        .filter(|h| h.token_index >= span.start && h.token_index < span.end)
        .collect()
}

/// Interning key of a word feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct WordKey {
    pub surface: Vec<String>,
    pub negated: bool,
}

impl WordKey {
    pub fn label(&self) -> String {
        let mut s = self.surface.join(" ");
        if self.negated {
            s.push_str(" [neg]");
        }
        s
    }
}

/// Unigram features for every hit plus every k-gram (2 ≤ k ≤ `kgram_max`)
/// inside the span that contains a hit. A k-gram takes the negation flag of
/// its rightmost hit.
pub fn extract_word_features(
    sentence: &Sentence,
    span: &OpinionSpan,
    hits: &[SentimentHit],
    kgram_max: usize,
) -> Vec<WordKey> {
    let mut keys = Vec::new();
    for h in hits {
        keys.push(WordKey {
            surface: vec![h.word.clone()],
            negated: h.negated,
        });
    }
    let tokens = &sentence.tokens;
    for k in 2..=kgram_max {
        if k > span.end - span.start {
            break;
        }
        for s in span.start..=span.end - k {
            let window = &tokens[s..s + k];
            if window.iter().any(|t| is_punctuation(t)) {
                continue;
            }
            if let Some(hit) = hits
                .iter()
                .rev()
                .find(|h| h.token_index >= s && h.token_index < s + k)
            {
                keys.push(WordKey {
                    surface: window.to_vec(),
                    negated: hit.negated,
                });
            }
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Similar,
    Opposite,
}

impl RelationKind {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Whether the relation's prediction holds for a pair of labels.
    pub fn holds(self, a: Polarity, b: Polarity) -> bool {
        match self {
            RelationKind::Similar => a == b,
            RelationKind::Opposite => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WordFeature {
    pub id: usize,
    pub key: WordKey,
    /// Unit ids, ascending.
    pub bearers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationalFeature {
    pub id: usize,
    pub kind: RelationKind,
    pub rule: u8,
    /// Unit ids with `endpoints.0 < endpoints.1`.
    pub endpoints: (usize, usize),
}

impl RelationalFeature {
    pub fn other(&self, unit: usize) -> usize {
        if self.endpoints.0 == unit {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

/// Relation between two units of one review, if any rule applies.
/// Rule 3 (opposite, same sentence across a shift boundary) takes precedence
/// over rule 2 (opposite, adjacent sentences joined by a leading shift word),
/// which takes precedence over rule 1 (similar, same or adjacent sentences
/// free of shift words).
pub fn relate(
    a: (&AspectUnit, &OpinionSpan, &Segmentation),
    b: (&AspectUnit, &OpinionSpan, &Segmentation),
) -> Option<(RelationKind, u8)> {
    let ((ua, sa, ga), (ub, sb, gb)) = (a, b);
    if ua.review != ub.review {
        return None;
    }
    if ua.sentence == ub.sentence {
        if let (Some(ca), Some(cb)) = (sa.clause, sb.clause) {
            if ca != cb && ga.shift_between(ca, cb) {
                return Some((RelationKind::Opposite, 3));
            }
        }
        return (!ga.has_shift()).then_some((RelationKind::Similar, 1));
    }
    if ua.sentence.abs_diff(ub.sentence) != 1 {
        return None;
    }
    let later = if ua.sentence > ub.sentence { ga } else { gb };
    if later.leading_shift && !ga.inner_shift && !gb.inner_shift {
        return Some((RelationKind::Opposite, 2));
    }
    (!ga.has_shift() && !gb.has_shift()).then_some((RelationKind::Similar, 1))
}

/// Global registry of word and relational features.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FeatureIndex {
    pub word: Vec<WordFeature>,
    pub relations: Vec<RelationalFeature>,
    /// Word feature ids per unit, ascending.
    pub unit_word: Vec<Vec<usize>>,
    /// Relational feature ids per unit, ascending.
    pub unit_relations: Vec<Vec<usize>>,
    #[serde(skip)]
    lookup: HashMap<WordKey, usize>,
}

impl FeatureIndex {
    pub fn new(units: usize) -> Self {
        FeatureIndex {
            unit_word: vec![Vec::new(); units],
            unit_relations: vec![Vec::new(); units],
            ..Default::default()
        }
    }

    pub fn intern(&mut self, key: WordKey, unit: usize) -> usize {
        let id = *self.lookup.entry(key.clone()).or_insert_with(|| {
            self.word.push(WordFeature {
                id: self.word.len(),
                key,
                bearers: Vec::new(),
            });
            self.word.len() - 1
        });
        let bearers = &mut self.word[id].bearers;
        if bearers.last() != Some(&unit) {
            bearers.push(unit);
            self.unit_word[unit].push(id);
        }
        id
    }

    pub fn find(&self, key: &WordKey) -> Option<usize> {
        self.lookup.get(key).copied()
    }

    pub fn add_relation(&mut self, kind: RelationKind, rule: u8, a: usize, b: usize) -> usize {
        let id = self.relations.len();
        self.relations.push(RelationalFeature {
            id,
            kind,
            rule,
            endpoints: (a.min(b), a.max(b)),
        });
        self.unit_relations[a].push(id);
        self.unit_relations[b].push(id);
        id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtractionConfig {
    pub sim_threshold: f64,
    pub kgram_max: usize,
    pub negation_window: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            sim_threshold: DEFAULT_SIM_THRESHOLD,
            kgram_max: DEFAULT_KGRAM_MAX,
            negation_window: crate::lexicon::DEFAULT_NEGATION_WINDOW,
        }
    }
}

/// Everything the feature step derives from a corpus.
#[derive(Debug, Clone)]
pub struct Extraction {
    /// Segmentation per review, per sentence.
    pub segmentations: Vec<Vec<Segmentation>>,
    pub spans: Vec<OpinionSpan>,
    pub hits: Vec<Vec<SentimentHit>>,
    pub index: FeatureIndex,
}

impl Extraction {
    pub fn segmentation(&self, unit: &AspectUnit) -> &Segmentation {
        &self.segmentations[unit.review][unit.sentence]
    }
}

/// Runs segmentation, span resolution and feature extraction over the corpus.
/// Per-review work fans out when `parallel` is set; interning happens
/// afterwards in unit order so feature ids do not depend on scheduling.
pub fn extract(
    corpus: &Corpus,
    units: &[AspectUnit],
    lexicon: &Lexicon,
    connectives: &ConnectiveLists,
    embeddings: Option<&EmbeddingTable>,
    config: &ExtractionConfig,
    parallel: bool,
) -> Extraction {
    let segmentations: Vec<Vec<Segmentation>> = par::map(&corpus.reviews, parallel, |r| {
        r.sentences
            .iter()
            .map(|s| segment_clauses(&s.tokens, connectives))
            .collect()
    });
    let per_unit: Vec<(OpinionSpan, Vec<SentimentHit>, Vec<WordKey>)> =
        par::map(units, parallel, |u| {
            let seg = &segmentations[u.review][u.sentence];
            let span =
                resolve_opinion_span(u, corpus, seg, lexicon, embeddings, config.sim_threshold);
            let sentence = corpus.sentence(u);
            let hits = span_hits(
                sentence,
                &span,
                lexicon,
                connectives,
                config.negation_window,
            );
            let keys = extract_word_features(sentence, &span, &hits, config.kgram_max);
            (span, hits, keys)
        });
    let mut index = FeatureIndex::new(units.len());
    let mut spans = Vec::with_capacity(units.len());
    let mut hits = Vec::with_capacity(units.len());
    for (u, (span, h, keys)) in units.iter().zip(per_unit) {
        for key in keys {
            index.intern(key, u.unit_id);
        }
        spans.push(span);
        hits.push(h);
    }
    for f in &mut index.word {
        f.bearers.sort_unstable();
    }
    // units of one review are contiguous in enumeration order
    let mut start = 0;
    while start < units.len() {
        let review = units[start].review;
        let end = start
            + units[start..]
                .iter()
                .take_while(|u| u.review == review)
                .count();
        for i in start..end {
            for j in i + 1..end {
                let (ui, uj) = (&units[i], &units[j]);
                let rel = relate(
                    (ui, &spans[i], &segmentations[ui.review][ui.sentence]),
                    (uj, &spans[j], &segmentations[uj.review][uj.sentence]),
                );
                if let Some((kind, rule)) = rel {
                    index.add_relation(kind, rule, ui.unit_id, uj.unit_id);
                }
            }
        }
        start = end;
    }
    Extraction {
        segmentations,
        spans,
        hits,
        index,
    }
}

/// Label counts over features, kept current as units get labeled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureStats {
    pub positive: Vec<u32>,
    pub labeled: Vec<u32>,
    /// Per relation kind: pairs whose both endpoints are labeled.
    pub pairs: [u32; 2],
    /// Per relation kind: labeled pairs agreeing with the relation.
    pub correct: [u32; 2],
}

impl FeatureStats {
    pub fn new(index: &FeatureIndex) -> Self {
        FeatureStats {
            positive: vec![0; index.word.len()],
            labeled: vec![0; index.word.len()],
            pairs: [0; 2],
            correct: [0; 2],
        }
    }

    /// Statistics over an arbitrary labeled map, computed from scratch.
    pub fn from_labels(index: &FeatureIndex, labels: &[Option<Polarity>]) -> Self {
        let mut stats = FeatureStats::new(index);
        for f in &index.word {
            for &b in &f.bearers {
                if let Some(p) = labels[b] {
                    stats.labeled[f.id] += 1;
                    stats.positive[f.id] += p.is_positive() as u32;
                }
            }
        }
        for r in &index.relations {
            if let (Some(a), Some(b)) = (labels[r.endpoints.0], labels[r.endpoints.1]) {
                stats.pairs[r.kind.index()] += 1;
                stats.correct[r.kind.index()] += r.kind.holds(a, b) as u32;
            }
        }
        stats
    }

    /// Folds in a new label for `unit`. `labels` holds the labels assigned
    /// before this one; `unit` itself must still be unlabeled there.
    /// Returns the relation kinds whose accuracy changed.
    pub fn observe(
        &mut self,
        index: &FeatureIndex,
        labels: &[Option<Polarity>],
        unit: usize,
        label: Polarity,
    ) -> [bool; 2] {
        debug_assert!(labels[unit].is_none());
        for &f in &index.unit_word[unit] {
            self.labeled[f] += 1;
            self.positive[f] += label.is_positive() as u32;
        }
        let mut touched = [false; 2];
        for &r in &index.unit_relations[unit] {
            let rel = &index.relations[r];
            if let Some(other) = labels[rel.other(unit)] {
                let k = rel.kind.index();
                self.pairs[k] += 1;
                self.correct[k] += rel.kind.holds(label, other) as u32;
                touched[k] = true;
            }
        }
        touched
    }

    /// Laplace-smoothed positive fraction among labeled bearers.
    pub fn p(&self, feature: usize) -> f64 {
        (self.positive[feature] as f64 + 1.0) / (self.labeled[feature] as f64 + 2.0)
    }

    pub fn n(&self, feature: usize) -> u32 {
        self.labeled[feature]
    }

    pub fn observed(&self, feature: usize) -> bool {
        self.labeled[feature] > 0
    }

    /// Laplace-smoothed accuracy of a relation kind.
    pub fn r(&self, kind: RelationKind) -> f64 {
        let k = kind.index();
        (self.correct[k] as f64 + 1.0) / (self.pairs[k] as f64 + 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{enumerate_aspect_units, parse_corpus, tokenize};
    use crate::embeddings::parse_embeddings;
    use approx::assert_abs_diff_eq;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    fn key(s: &str, negated: bool) -> WordKey {
        WordKey {
            surface: toks(s),
            negated,
        }
    }

    #[test]
    fn comma_boundary_is_not_a_shift() {
        let seg = segment_clauses(
            &toks("I like this laptop, the only problem is that it can not last long time"),
            &ConnectiveLists::bundled(),
        );
        assert_eq!(seg.clauses.len(), 2);
        assert_eq!(seg.shift_boundaries, [false]);
        assert!(!seg.has_shift());
    }

    #[test]
    fn shift_word_boundary() {
        let seg = segment_clauses(
            &toks("nice screen but terrible keyboard"),
            &ConnectiveLists::bundled(),
        );
        assert_eq!(seg.clauses, [(0, 2), (3, 5)]);
        assert_eq!(seg.shift_boundaries, [true]);
        assert!(seg.inner_shift && !seg.leading_shift);
        assert!(seg.shift_between(1, 0));
    }

    #[test]
    fn single_clause_and_leading_shift() {
        let c = ConnectiveLists::bundled();
        let seg = segment_clauses(&toks("The laptop has a long battery life."), &c);
        assert_eq!(seg.clauses, [(0, 7)]);
        assert!(seg.shift_boundaries.is_empty() && !seg.has_shift());
        let seg = segment_clauses(
            &toks("However, the keyboard sits a little far back for me."),
            &c,
        );
        assert_eq!(seg.clauses, [(2, 11)]);
        assert!(seg.leading_shift && !seg.inner_shift);
    }

    #[test]
    fn kgram_features() {
        let sentence = Sentence {
            id: "s".into(),
            text: String::new(),
            tokens: toks("long battery life"),
            offsets: vec![],
            aspects: vec![],
        };
        let lex = Lexicon::from_entries([("long", 1.0), ("good", 2.0)]);
        let c = ConnectiveLists::bundled();
        let span = OpinionSpan::whole(0, &sentence);
        let hits = span_hits(&sentence, &span, &lex, &c, 3);
        let keys = extract_word_features(&sentence, &span, &hits, 3);
        // oracle: every contiguous window of length 1..=3 that covers a hit
        let mut oracle = Vec::new();
        for k in 1..=3 {
            for s in 0..=sentence.tokens.len() - k {
                if (s..s + k).contains(&0) && (k > 1 || s == 0) {
                    oracle.push(WordKey {
                        surface: sentence.tokens[s..s + k].to_vec(),
                        negated: false,
                    });
                }
            }
        }
        oracle.sort();
        assert_eq!(keys, oracle);
        assert_eq!(
            oracle,
            [
                key("long", false),
                key("long battery", false),
                key("long battery life", false)
            ]
        );

        let sentence = Sentence {
            tokens: toks("not good"),
            ..sentence
        };
        let span = OpinionSpan::whole(0, &sentence);
        let hits = span_hits(&sentence, &span, &lex, &c, 3);
        let keys = extract_word_features(&sentence, &span, &hits, 3);
        assert_eq!(keys, [key("good", true), key("not good", true)]);

        let sentence = Sentence {
            tokens: toks("the keyboard sits back"),
            ..sentence
        };
        let span = OpinionSpan::whole(0, &sentence);
        assert!(extract_word_features(&sentence, &span, &[], 3).is_empty());
    }

    const LAPTOP_REVIEWS: &str = r#"{"reviews":[
      {"id":"r1","sentences":[
        {"id":"s11","text":"I like the battery that can last long time.","aspects":[{"id":"a","term":"battery"}]},
        {"id":"s12","text":"However, the keyboard sits a little far back for me.","aspects":[{"id":"a","term":"keyboard"}]}]},
      {"id":"r2","sentences":[
        {"id":"s21","text":"The laptop has a long battery life.","aspects":[{"id":"a","term":"battery"}]},
        {"id":"s22","text":"It also can run my games smoothly.","aspects":[{"id":"a","category":"performance"}]}]}]}"#;

    fn run_extract(
        json: &str,
        emb: Option<&EmbeddingTable>,
    ) -> (Corpus, Vec<AspectUnit>, Extraction) {
        let corpus = parse_corpus(json).unwrap();
        let units = enumerate_aspect_units(&corpus);
        let ex = extract(
            &corpus,
            &units,
            &Lexicon::bundled(),
            &ConnectiveLists::bundled(),
            emb,
            &ExtractionConfig::default(),
            false,
        );
        (corpus, units, ex)
    }

    #[test]
    fn running_example_relations() {
        let (_, _, ex) = run_extract(LAPTOP_REVIEWS, None);
        let rels: Vec<_> = ex
            .index
            .relations
            .iter()
            .map(|r| (r.endpoints, r.kind, r.rule))
            .collect();
        assert_eq!(
            rels,
            [
                ((0, 1), RelationKind::Opposite, 2),
                ((2, 3), RelationKind::Similar, 1)
            ]
        );
        // "long" is shared by s11 and s21
        let long = ex.index.find(&key("long", false)).unwrap();
        assert_eq!(ex.index.word[long].bearers, [0, 2]);
        assert!(ex.index.unit_word[1].is_empty());
    }

    #[test]
    fn inner_shift_gives_opposite_and_reviews_are_isolated() {
        let json = r#"{"reviews":[
          {"id":"r","sentences":[{"id":"s","text":"nice screen but terrible keyboard",
            "aspects":[{"id":"a1","term":"screen"},{"id":"a2","term":"keyboard"}]}]},
          {"id":"q","sentences":[{"id":"s","text":"great screen","aspects":[{"id":"a","term":"screen"}]}]}]}"#;
        let (_, _, ex) = run_extract(json, None);
        assert_eq!(ex.index.relations.len(), 1);
        let r = &ex.index.relations[0];
        assert_eq!(
            (r.endpoints, r.kind, r.rule),
            ((0, 1), RelationKind::Opposite, 3)
        );
    }

    #[test]
    fn acsa_span_uses_embedding_similarity() {
        let emb = parse_embeddings(
            "performance 1 0 0\ngames 0.9 0.1 0\nrun 0.8 0.3 0\nprice 0 0 1\ncheap 0 0.1 1\n",
        )
        .unwrap();
        let json = r#"{"reviews":[{"id":"r","sentences":[
          {"id":"s","text":"The price is fine, it can run my games smoothly.","aspects":[{"id":"a","category":"performance"}]},
          {"id":"t","text":"The keyboard is sturdy.","aspects":[{"id":"a","category":"performance"}]}]}]}"#;
        let (corpus, units, ex) = run_extract(json, Some(&emb));
        let span = &ex.spans[0];
        assert_eq!(span.association, Association::EmbeddingSimilarity);
        assert_eq!(span.clause, Some(1));
        assert!(span
            .tokens(corpus.sentence(&units[0]))
            .contains(&"games".to_string()));
        assert_eq!(ex.spans[1].association, Association::WholeSentence);
    }

    #[test]
    fn running_example_acsa_span() {
        let emb = parse_embeddings("performance 1 0\ngames 0.8 0.2\nbattery 0 1\n").unwrap();
        let (_, _, ex) = run_extract(LAPTOP_REVIEWS, Some(&emb));
        assert_eq!(ex.spans[3].association, Association::EmbeddingSimilarity);
        assert_eq!(ex.spans[0].association, Association::ExplicitTerm);
    }

    #[test]
    fn relation_extraction_is_order_invariant() {
        let json = r#"{"reviews":[{"id":"r","sentences":[
          {"id":"a","text":"Good screen.","aspects":[{"id":"x","term":"screen"}]},
          {"id":"b","text":"But the fan is loud, although the keys feel nice.","aspects":[{"id":"x","term":"fan"},{"id":"y","term":"keys"}]},
          {"id":"c","text":"Great speakers.","aspects":[{"id":"x","term":"speakers"}]},
          {"id":"d","text":"However, the price is high.","aspects":[{"id":"x","term":"price"}]}]}]}"#;
        let corpus = parse_corpus(json).unwrap();
        let units = enumerate_aspect_units(&corpus);
        let ex = extract(
            &corpus,
            &units,
            &Lexicon::bundled(),
            &ConnectiveLists::bundled(),
            None,
            &ExtractionConfig::default(),
            false,
        );
        for (i, j) in [(0usize, 1usize), (1, 2), (0, 3), (2, 4), (3, 4), (1, 3)] {
            let a = (&units[i], &ex.spans[i], ex.segmentation(&units[i]));
            let b = (&units[j], &ex.spans[j], ex.segmentation(&units[j]));
            assert_eq!(relate(a, b), relate(b, a), "pair {i},{j}");
        }
        let rels: Vec<_> = ex
            .index
            .relations
            .iter()
            .map(|r| (r.endpoints, r.kind, r.rule))
            .collect();
        // sentence b has an inner shift, so no rule 1/2 links around it
        assert_eq!(
            rels,
            [
                ((1, 2), RelationKind::Opposite, 3),
                ((3, 4), RelationKind::Opposite, 2)
            ]
        );
    }

    #[test]
    fn extraction_is_deterministic_across_modes() {
        let (corpus, units, ex) = run_extract(LAPTOP_REVIEWS, None);
        let par = extract(
            &corpus,
            &units,
            &Lexicon::bundled(),
            &ConnectiveLists::bundled(),
            None,
            &ExtractionConfig::default(),
            true,
        );
        assert_eq!(ex.index.word, par.index.word);
        assert_eq!(ex.index.relations, par.index.relations);
    }

    #[test]
    fn smoothed_statistics() {
        let mut index = FeatureIndex::new(14);
        for u in 0..4 {
            index.intern(key("good", false), u);
        }
        index.intern(key("bad", false), 4);
        let mut labels = vec![None; 14];
        for (u, p) in [(0, true), (1, true), (2, true), (3, false)] {
            labels[u] = Some(Polarity::from_bit(p));
        }
        // ten similar pairs, nine agreeing
        for i in 0..10 {
            index.add_relation(RelationKind::Similar, 1, 4 + i % 10, (5 + i) % 14);
        }
        let mut l2 = labels.clone();
        l2[4..14].fill(Some(Polarity::Positive));
        l2[4] = Some(Polarity::Negative);
        let stats = FeatureStats::from_labels(&index, &l2);
        assert_abs_diff_eq!(stats.p(0), 4.0 / 6.0, epsilon = 1e-12);
        assert_eq!(stats.n(1), 1);
        let stats = FeatureStats::from_labels(&index, &labels);
        assert_eq!(stats.n(1), 0);
        assert!(!stats.observed(1));
        assert_abs_diff_eq!(stats.p(1), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn relation_accuracy_smoothing() {
        let mut index = FeatureIndex::new(20);
        for i in 0..10 {
            index.add_relation(RelationKind::Similar, 1, 2 * i, 2 * i + 1);
        }
        let mut labels = vec![Some(Polarity::Positive); 20];
        labels[19] = Some(Polarity::Negative);
        let stats = FeatureStats::from_labels(&index, &labels);
        assert_abs_diff_eq!(stats.r(RelationKind::Similar), 10.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.r(RelationKind::Opposite), 0.5, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn incremental_stats_match_batch(order in proptest::sample::subsequence((0..12usize).collect::<Vec<_>>(), 0..12),
                                         bits in proptest::collection::vec(proptest::bool::ANY, 12)) {
            let mut index = FeatureIndex::new(12);
            for u in 0..12 {
                index.intern(key(if u % 3 == 0 { "good" } else { "bad" }, u % 2 == 0), u);
                if u + 1 < 12 {
                    index.add_relation(if u % 2 == 0 { RelationKind::Similar } else { RelationKind::Opposite }, 1, u, u + 1);
                }
            }
            let mut labels = vec![None; 12];
            let mut stats = FeatureStats::new(&index);
            for &u in &order {
                let l = Polarity::from_bit(bits[u]);
                stats.observe(&index, &labels, u, l);
                labels[u] = Some(l);
                for f in 0..index.word.len() {
                    proptest::prop_assert!(stats.p(f) > 0.0 && stats.p(f) < 1.0);
                }
            }
            proptest::prop_assert_eq!(stats, FeatureStats::from_labels(&index, &labels));
        }
    }
}
