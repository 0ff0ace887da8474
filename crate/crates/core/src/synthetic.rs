//! Seeded generator of labeled review corpora for scaling and sensitivity
//! runs. Each corpus comes with the lexicon its templates draw from.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{parse_corpus, Corpus, Polarity};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;

const ASPECTS: &[&str] = &[
    "battery",
    "screen",
    "keyboard",
    "trackpad",
    "speaker",
    "camera",
    "charger",
    "hinge",
    "fan",
    "webcam",
    "display",
    "processor",
    "memory",
    "case",
    "port",
    "touchscreen",
    "microphone",
    "stylus",
    "dock",
    "remote",
];

const POSITIVE: &[(&str, f64)] = &[
    ("good", 2.0),
    ("great", 3.0),
    ("excellent", 3.0),
    ("superb", 3.0),
    ("fast", 2.0),
    ("reliable", 2.0),
    ("sturdy", 2.0),
    ("bright", 1.0),
    ("crisp", 2.0),
    ("quiet", 1.0),
    ("smooth", 2.0),
    ("responsive", 2.0),
    ("elegant", 2.0),
    ("comfortable", 2.0),
    ("solid", 1.0),
    ("fantastic", 3.0),
    ("lovely", 2.0),
    ("sharp", 1.0),
    ("decent", 1.0),
    ("impressive", 3.0),
];

const NEGATIVE: &[(&str, f64)] = &[
    ("bad", -2.0),
    ("poor", -2.0),
    ("terrible", -3.0),
    ("awful", -3.0),
    ("sluggish", -2.0),
    ("flimsy", -2.0),
    ("dim", -1.0),
    ("noisy", -1.0),
    ("fragile", -2.0),
    ("buggy", -2.0),
    ("clunky", -2.0),
    ("ugly", -2.0),
    ("weak", -1.0),
    ("cheap", -1.0),
    ("laggy", -2.0),
    ("horrible", -3.0),
    ("disappointing", -2.0),
    ("faulty", -2.0),
    ("annoying", -2.0),
    ("mediocre", -1.0),
];

/// Sentiment-free predicates for units that must be inferred from context.
const NEUTRAL: &[&str] = &[
    "sits next to the lamp",
    "came in the original box",
    "was checked by the store clerk",
    "is on the left side",
    "was updated last week",
    "arrived on tuesday",
    "is made of aluminium",
    "looks like the older model",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticParams {
    pub n_units: usize,
    /// Target fraction of units that the easy-instance rules can label.
    pub easy_fraction: f64,
    /// Probability that a review continues with another sentence.
    pub relation_density: f64,
    /// Probability that a discourse transition misstates the polarity
    /// change, and that a hard unit is written in a misleading form.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n_units: 1000,
            easy_fraction: 0.5,
            relation_density: 0.7,
            noise: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain {
                    name,
                    value: v,
                    domain: "[0, 1]",
                })
            }
        };
        unit("easy_fraction", self.easy_fraction)?;
        unit("relation_density", self.relation_density)?;
        unit("noise", self.noise)
    }
}

pub struct Synthetic {
    pub corpus: Corpus,
    pub lexicon: Lexicon,
    /// Unit ids written with an easy template, in enumeration order.
    pub planted_easy: Vec<usize>,
}

pub fn synthetic_lexicon() -> Lexicon {
    Lexicon::from_entries(POSITIVE.iter().chain(NEGATIVE).map(|&(w, s)| (w, s)))
}

#[derive(Clone, Copy, PartialEq)]
enum Shape {
    Easy,
    /// Leads with a shift word and carries a sentiment word.
    ShiftWord,
    /// Leads with a shift word and carries no sentiment.
    ShiftNeutral,
    /// Contrast inside the sentence.
    Concessive,
    /// Two aspects of opposite polarity joined by a contrast word.
    Pair,
    /// No sentiment and no shift.
    Neutral,
    /// Sentiment word negated from outside the negation window.
    Misleading,
}

impl Shape {
    fn any_shift(self) -> bool {
        matches!(
            self,
            Shape::ShiftWord | Shape::ShiftNeutral | Shape::Concessive | Shape::Pair
        )
    }

    fn inner_shift(self) -> bool {
        matches!(self, Shape::Concessive | Shape::Pair)
    }
}

struct Writer<'a> {
    rng: &'a mut ChaCha8Rng,
}

impl Writer<'_> {
    fn word(&mut self, p: Polarity) -> &'static str {
        let list = if p.is_positive() { POSITIVE } else { NEGATIVE };
        list.choose(self.rng).expect("nonempty").0
    }

    fn aspect(&mut self) -> &'static str {
        ASPECTS.choose(self.rng).expect("nonempty")
    }

    fn easy(&mut self, a: &str, p: Polarity) -> String {
        match self.rng.gen_range(0..4) {
            0 => format!("the {a} is {}.", self.word(p)),
            1 => format!("the {a} is not {}.", self.word(p.flip())),
            2 => format!("the {a} is {} and {}.", self.word(p), self.word(p)),
            _ => format!("i think the {a} is really {}.", self.word(p)),
        }
    }
}

/// Generates a corpus of exactly `n_units` aspect units with gold labels.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<Synthetic> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // pair sentences add two hard units, so easy sentences are drawn a bit
    // more often to keep the unit-level fraction on target
    const PAIR_SHARE: f64 = 0.1;
    let hard_units = 1.0 + PAIR_SHARE;
    let e = params.easy_fraction;
    let p_easy = if e >= 1.0 {
        1.0
    } else {
        e * hard_units / (1.0 - e + e * hard_units)
    };

    let mut reviews = Vec::new();
    let mut planted_easy = Vec::new();
    let mut produced = 0;
    while produced < params.n_units {
        let mut sentences = Vec::new();
        let mut prev: Option<(Shape, Polarity)> = None;
        loop {
            let left = params.n_units - produced;
            let easy = rng.gen_bool(p_easy);
            let shape = if easy {
                Shape::Easy
            } else {
                let prev_shape = prev.map(|(s, _)| s);
                let flip = prev.is_some() && rng.gen_bool(0.5);
                if flip {
                    if prev_shape.is_some_and(|s| !s.inner_shift()) && rng.gen_bool(0.3) {
                        Shape::ShiftNeutral
                    } else {
                        Shape::ShiftWord
                    }
                } else if rng.gen_bool(params.noise) {
                    Shape::Misleading
                } else {
                    let r: f64 = rng.gen();
                    let neutral_ok = prev_shape.is_some_and(|s| !s.any_shift());
                    if r < 2.0 * PAIR_SHARE && left >= 2 {
                        Shape::Pair
                    } else if neutral_ok && r < 0.6 {
                        Shape::Neutral
                    } else {
                        Shape::Concessive
                    }
                }
            };
            // the polarity the transition signals, then possibly violated
            let mut gold = match prev {
                None => Polarity::from_bit(rng.gen_bool(0.5)),
                Some((_, p)) if matches!(shape, Shape::ShiftWord | Shape::ShiftNeutral) => p.flip(),
                Some((_, p)) => p,
            };
            if prev.is_some() && rng.gen_bool(params.noise) {
                gold = gold.flip();
            }
            let mut w = Writer { rng: &mut rng };
            let a = w.aspect();
            let (text, aspects) = match shape {
                Shape::Easy => (w.easy(a, gold), vec![(a, gold)]),
                Shape::ShiftWord => (
                    format!("however, the {a} is {}.", w.word(gold)),
                    vec![(a, gold)],
                ),
                Shape::ShiftNeutral => {
                    let n = NEUTRAL.choose(w.rng).expect("nonempty");
                    (format!("however, the {a} {n}."), vec![(a, gold)])
                }
                Shape::Concessive => {
                    let (x, y) = (w.word(gold), w.word(gold.flip()));
                    (format!("the {a} is {x} though a bit {y}."), vec![(a, gold)])
                }
                Shape::Pair => {
                    let mut b = w.aspect();
                    while b == a {
                        b = w.aspect();
                    }
                    let (x, y) = (w.word(gold), w.word(gold.flip()));
                    (
                        format!("the {a} is {x} but the {b} is {y}."),
                        vec![(a, gold), (b, gold.flip())],
                    )
                }
                Shape::Neutral => {
                    let n = NEUTRAL.choose(w.rng).expect("nonempty");
                    (format!("the {a} {n}."), vec![(a, gold)])
                }
                Shape::Misleading => (
                    format!("i do not really think the {a} is {}.", w.word(gold.flip())),
                    vec![(a, gold)],
                ),
            };
            if shape == Shape::Easy {
                planted_easy.push(produced);
            }
            produced += aspects.len();
            let last = aspects.last().expect("one aspect at least").1;
            sentences.push((text, aspects));
            prev = Some((shape, last));
            if produced >= params.n_units
                || !rng.gen_bool(params.relation_density)
                || sentences.len() >= 12
            {
                break;
            }
        }
        reviews.push(sentences);
    }

    // going through the regular ingest path fills tokens and term spans
    let doc = serde_json::json!({
        "reviews": reviews.into_iter().enumerate().map(|(r, sentences)| serde_json::json!({
            "id": format!("r{r}"),
            "sentences": sentences.into_iter().enumerate().map(|(s, (text, aspects))| serde_json::json!({
                "id": format!("s{s}"),
                "text": text,
                "aspects": aspects.into_iter().enumerate().map(|(i, (term, gold))| serde_json::json!({
                    "id": format!("a{i}"),
                    "term": term,
                    "gold": gold,
                })).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    let corpus = parse_corpus(&doc.to_string())?;
    Ok(Synthetic {
        corpus,
        lexicon: synthetic_lexicon(),
        planted_easy,
    })
}
