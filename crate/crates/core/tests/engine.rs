use gml_core::corpus::{parse_corpus, Polarity};
use gml_core::engine::{evaluate, parse_predictions, run, EngineConfig, Resources};
use gml_core::graph::LabelMethod;
use gml_core::sample::{sample_corpus, sample_resources};
use gml_core::Error;

fn corpus(sentences: &[(&str, &str, &str)]) -> gml_core::corpus::Corpus {
    // one review per sentence keeps units unrelated
    let reviews: Vec<_> = sentences
        .iter()
        .enumerate()
        .map(|(i, (text, term, gold))| {
            let mut aspect = serde_json::json!({"id": "a", "term": term});
            if !gold.is_empty() {
                aspect["gold"] = serde_json::json!(gold);
            }
            serde_json::json!({
                "id": format!("r{i}"),
                "sentences": [{"id": "s", "text": text, "aspects": [aspect]}],
            })
        })
        .collect();
    parse_corpus(&serde_json::json!({ "reviews": reviews }).to_string()).unwrap()
}

#[test]
fn all_easy_needs_no_iterations() {
    let c = corpus(&[
        ("The screen is great.", "screen", "positive"),
        ("The battery is terrible.", "battery", "negative"),
    ]);
    let r = run(&c, &Resources::bundled(), &EngineConfig::default()).unwrap();
    assert_eq!(r.iterations, 0);
    assert!(r
        .records
        .iter()
        .all(|x| x.method == LabelMethod::Easy && x.iteration == 0));
    assert_eq!(evaluate(&r.records, &c).unwrap().accuracy, Some(1.0));
}

#[test]
fn featureless_hard_unit_falls_back() {
    let c = corpus(&[
        ("The screen is great.", "screen", "positive"),
        ("The lamp arrived on tuesday.", "lamp", "negative"),
    ]);
    let r = run(&c, &Resources::bundled(), &EngineConfig::default()).unwrap();
    assert_eq!(r.iterations, 1);
    let hard = &r.records[1];
    assert_eq!(hard.method, LabelMethod::Fallback);
    // no sentiment words at all: the lexicon sum is zero
    assert_eq!(hard.predicted, Polarity::Positive);
    assert_eq!(
        (hard.probability, hard.entropy, hard.iteration),
        (None, None, 1)
    );
    assert!(r
        .to_jsonl()
        .lines()
        .nth(1)
        .unwrap()
        .contains("\"probability\":null"));
}

#[test]
fn no_easy_unit_is_an_error() {
    let c = corpus(&[("The lamp arrived on tuesday.", "lamp", "")]);
    let err = run(&c, &Resources::bundled(), &EngineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::NoEvidence { .. }), "{err}");
}

#[test]
fn evaluation_without_gold_has_no_accuracy() {
    let c = corpus(&[
        ("The screen is great.", "screen", ""),
        ("The keyboard is bad.", "keyboard", ""),
    ]);
    let r = run(&c, &Resources::bundled(), &EngineConfig::default()).unwrap();
    let m = evaluate(&r.records, &c).unwrap();
    assert_eq!((m.units, m.graded, m.accuracy), (2, 0, None));
    assert_eq!(m.easy.proportion, 1.0);
}

#[test]
fn evaluation_rejects_mismatched_records() {
    let c = sample_corpus();
    let r = run(&c, &sample_resources(), &EngineConfig::default()).unwrap();
    let mut records = r.records.clone();
    records[0].unit_id = 40;
    match evaluate(&records, &c) {
        Err(Error::UnitMismatch { first, .. }) => assert!(first.contains(&40), "{first:?}"),
        other => panic!("expected a mismatch, got {other:?}"),
    }
    assert!(evaluate(&r.records[..3], &c).is_err());
}

#[test]
fn sample_corpus_is_labeled_correctly_and_round_trips() {
    let c = sample_corpus();
    let r = run(&c, &sample_resources(), &EngineConfig::default()).unwrap();
    assert_eq!(r.records.len(), 4);
    assert_eq!(evaluate(&r.records, &c).unwrap().accuracy, Some(1.0));
    let back = parse_predictions(&r.to_jsonl()).unwrap();
    assert_eq!(back, r.records);
    let seq = run(
        &c,
        &sample_resources(),
        &EngineConfig {
            parallel: false,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(seq.to_jsonl(), r.to_jsonl());
}

#[test]
fn acsa_without_embeddings_is_refused() {
    let err = run(
        &sample_corpus(),
        &Resources::bundled(),
        &EngineConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingEmbeddings));
    assert!(err.is_input_error());
}
