//! Easy-instance labeling: a unit is easy when its opinion is decided by
//! lexicon rules alone.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::{AspectUnit, Corpus, Polarity};
use crate::error::{Error, Result};
use crate::features::Extraction;
use crate::lexicon::{find_sentiment_hits, has_long_distance_negation, ConnectiveLists, Lexicon};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HardReason {
    NoSentimentWord,
    ConflictingPolarities,
    ConnectivePresent,
    LongDistanceNegation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Easy(Polarity),
    Hard(BTreeSet<HardReason>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EasyDecision {
    pub unit_id: usize,
    pub verdict: Verdict,
}

impl EasyDecision {
    pub fn polarity(&self) -> Option<Polarity> {
        match self.verdict {
            Verdict::Easy(p) => Some(p),
            Verdict::Hard(_) => None,
        }
    }
}

/// Applies the three easiness conditions. Hit homogeneity and negation are
/// checked on the clause; connectives on the whole sentence.
pub fn classify_easiness(
    unit_id: usize,
    sentence_tokens: &[String],
    clause_tokens: &[String],
    lexicon: &Lexicon,
    connectives: &ConnectiveLists,
    window: usize,
) -> EasyDecision {
    let hits = find_sentiment_hits(clause_tokens, lexicon, connectives, window);
    let mut reasons = BTreeSet::new();
    if clause_tokens.is_empty() || hits.is_empty() {
        reasons.insert(HardReason::NoSentimentWord);
    }
    let polarity = hits.first().map(|h| h.effective_polarity);
    if hits.iter().any(|h| Some(h.effective_polarity) != polarity) {
        reasons.insert(HardReason::ConflictingPolarities);
    }
    if connectives.has_blocking_connective(sentence_tokens) {
        reasons.insert(HardReason::ConnectivePresent);
    }
    if has_long_distance_negation(clause_tokens, &hits, connectives, window) {
        reasons.insert(HardReason::LongDistanceNegation);
    }
    let verdict = match polarity {
        Some(p) if reasons.is_empty() => Verdict::Easy(p),
        _ => Verdict::Hard(reasons),
    };
    EasyDecision { unit_id, verdict }
}

/// Fixed labels of the easy units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceSet {
    pub labels: BTreeMap<usize, Polarity>,
}

impl EvidenceSet {
    pub fn source(&self) -> &'static str {
        "easy"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EasyStats {
    pub units: usize,
    pub easy: usize,
    pub proportion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub reason_histogram: BTreeMap<HardReason, usize>,
}

#[derive(Debug, Clone)]
pub struct EasyOutcome {
    pub decisions: Vec<EasyDecision>,
    pub evidence: EvidenceSet,
    pub stats: EasyStats,
}

/// Classifies every unit and assembles the evidence set. Fails when no unit
/// is easy, since inference has nothing to start from.
pub fn label_easy_instances(
    corpus: &Corpus,
    units: &[AspectUnit],
    extraction: &Extraction,
    lexicon: &Lexicon,
    connectives: &ConnectiveLists,
    window: usize,
    parallel: bool,
) -> Result<EasyOutcome> {
    let decisions: Vec<EasyDecision> = par::map(units, parallel, |u| {
        let sentence = corpus.sentence(u);
        let span = &extraction.spans[u.unit_id];
        classify_easiness(
            u.unit_id,
            &sentence.tokens,
            span.tokens(sentence),
            lexicon,
            connectives,
            window,
        )
    });
    let labels: BTreeMap<usize, Polarity> = decisions
        .iter()
        .filter_map(|d| d.polarity().map(|p| (d.unit_id, p)))
        .collect();
    let stats = easy_stats(corpus, units, &decisions);
    if labels.is_empty() && !units.is_empty() {
        return Err(Error::NoEvidence { units: units.len() });
    }
    Ok(EasyOutcome {
        decisions,
        evidence: EvidenceSet { labels },
        stats,
    })
}

pub fn easy_stats(corpus: &Corpus, units: &[AspectUnit], decisions: &[EasyDecision]) -> EasyStats {
    let mut reason_histogram = BTreeMap::new();
    let (mut easy, mut graded, mut correct) = (0usize, 0usize, 0usize);
    for (u, d) in units.iter().zip(decisions) {
        match &d.verdict {
            Verdict::Easy(p) => {
                easy += 1;
                if let Some(g) = corpus.gold(u) {
                    graded += 1;
                    correct += (g == *p) as usize;
                }
            }
            Verdict::Hard(reasons) => {
                for r in reasons {
                    *reason_histogram.entry(*r).or_insert(0) += 1;
                }
            }
        }
    }
    EasyStats {
        units: units.len(),
        easy,
        proportion: if units.is_empty() {
            0.0
        } else {
            easy as f64 / units.len() as f64
        },
        accuracy: (graded > 0).then(|| correct as f64 / graded as f64),
        reason_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{enumerate_aspect_units, parse_corpus, tokenize};
    use crate::features::{extract, ExtractionConfig};

    fn toks(s: &str) -> Vec<String> {
        tokenize(s).into_iter().map(|t| t.text).collect()
    }

    fn classify(s: &str) -> Verdict {
        let t = toks(s);
        classify_easiness(
            0,
            &t,
            &t,
            &Lexicon::bundled(),
            &ConnectiveLists::bundled(),
            3,
        )
        .verdict
    }

    fn hard(reasons: &[HardReason]) -> Verdict {
        Verdict::Hard(reasons.iter().copied().collect())
    }

    #[test]
    fn easy_and_hard_sentence_shapes() {
        assert_eq!(
            classify("the screen is not good for carrying around in your bare hands"),
            Verdict::Easy(Polarity::Negative)
        );
        assert_eq!(
            classify(
                "I don't know why anyone would want to write a great review about this battery"
            ),
            hard(&[HardReason::LongDistanceNegation])
        );
        assert_eq!(
            classify("I like this laptop, the only problem is that it can not last long time"),
            hard(&[HardReason::ConflictingPolarities])
        );
    }

    #[test]
    fn empty_and_connective_cases() {
        assert_eq!(classify(""), hard(&[HardReason::NoSentimentWord]));
        assert_eq!(
            classify("would be a very nice laptop if the mousepad worked"),
            hard(&[HardReason::ConnectivePresent])
        );
        assert_eq!(
            classify("the screen is great but the keyboard is bad"),
            hard(&[
                HardReason::ConflictingPolarities,
                HardReason::ConnectivePresent
            ])
        );
    }

    #[test]
    fn removing_a_connective_adds_no_reason() {
        let with = classify("the screen is great but heavy");
        let without = classify("the screen is great heavy");
        let (Verdict::Hard(a), Verdict::Hard(b)) = (with, without) else {
            panic!("both should be hard");
        };
        assert!(b.is_subset(&a));
    }

    const LAPTOP_REVIEWS: &str = r#"{"reviews":[
      {"id":"r1","sentences":[
        {"id":"s11","text":"I like the battery that can last long time.","aspects":[{"id":"a","term":"battery","gold":"positive"}]},
        {"id":"s12","text":"However, the keyboard sits a little far back for me.","aspects":[{"id":"a","term":"keyboard","gold":"negative"}]}]},
      {"id":"r2","sentences":[
        {"id":"s21","text":"The laptop has a long battery life.","aspects":[{"id":"a","term":"battery","gold":"positive"}]},
        {"id":"s22","text":"It also can run my games smoothly.","aspects":[{"id":"a","term":"games","gold":"positive"}]}]}]}"#;

    fn outcome(json: &str) -> Result<EasyOutcome> {
        let corpus = parse_corpus(json).unwrap();
        let units = enumerate_aspect_units(&corpus);
        let (lex, con) = (Lexicon::bundled(), ConnectiveLists::bundled());
        let ex = extract(
            &corpus,
            &units,
            &lex,
            &con,
            None,
            &ExtractionConfig::default(),
            false,
        );
        label_easy_instances(&corpus, &units, &ex, &lex, &con, 3, false)
    }

    #[test]
    fn running_example_evidence() {
        let out = outcome(LAPTOP_REVIEWS).unwrap();
        let expected: BTreeMap<_, _> = [
            (0, Polarity::Positive),
            (2, Polarity::Positive),
            (3, Polarity::Positive),
        ]
        .into();
        assert_eq!(out.evidence.labels, expected);
        assert_eq!(
            out.decisions[1].verdict,
            hard(&[HardReason::NoSentimentWord, HardReason::ConnectivePresent])
        );
        assert_eq!(out.stats.proportion, 0.75);
        assert_eq!(out.stats.accuracy, Some(1.0));
        assert_eq!(
            out.stats.reason_histogram[&HardReason::ConnectivePresent],
            1
        );
    }

    #[test]
    fn all_contrast_corpus_has_no_evidence() {
        let json = r#"{"reviews":[{"id":"r","sentences":[
          {"id":"a","text":"Good screen but slow.","aspects":[{"id":"x","term":"screen"}]},
          {"id":"b","text":"Nice keys but loud fan.","aspects":[{"id":"x","term":"keys"}]}]}]}"#;
        assert!(matches!(outcome(json), Err(Error::NoEvidence { units: 2 })));
    }
}
