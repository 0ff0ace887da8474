//! The gradual labeling loop: easy instances first, then one unlabeled unit
//! per iteration chosen by evidential support, approximate ranking and
//! subgraph inference.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{enumerate_aspect_units, AspectUnit, Corpus, Mode, Polarity};
use crate::easy::{classify_easiness, easy_stats, label_easy_instances, EasyOutcome, EasyStats};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evidence::{conflict_rank_key, EvidenceView, RankKey, UncertaintyParams};
use crate::features::{extract, Extraction, ExtractionConfig, FeatureStats};
use crate::graph::{
    build_graph, extract_subgraph, FactorGraph, InitialWeights, LabelMethod, SubgraphOptions,
    DEFAULT_HOPS, DEFAULT_SUBGRAPH_CAP,
};
use crate::inference::{entropy, infer_marginal, learn_weights, InferenceConfig, MarginalResult};
use crate::lexicon::{fallback_label, ConnectiveLists, Lexicon};
use crate::par;
use crate::synthetic::{generate_synthetic, SyntheticParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineConfig {
    /// Candidates kept after support scoring.
    pub m: usize,
    /// Candidates kept after approximate ranking, each inferred in full.
    pub k: usize,
    pub uncertainty: UncertaintyParams,
    pub inference: InferenceConfig,
    pub init: InitialWeights,
    pub extraction: ExtractionConfig,
    pub hops: usize,
    pub subgraph_cap: usize,
    pub seed: u64,
    /// Fan out per-iteration work when built with the `parallel` feature.
    pub parallel: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            m: 20,
            k: 3,
            uncertainty: UncertaintyParams::default(),
            inference: InferenceConfig::default(),
            init: InitialWeights::default(),
            extraction: ExtractionConfig::default(),
            hops: DEFAULT_HOPS,
            subgraph_cap: DEFAULT_SUBGRAPH_CAP,
            seed: 0,
            parallel: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.m {
            return Err(Error::Config(format!(
                "need 1 <= k <= m, got k={} m={}",
                self.k, self.m
            )));
        }
        if self.subgraph_cap == 0 {
            return Err(Error::Config("subgraph cap must be positive".into()));
        }
        self.uncertainty.validate()?;
        self.inference.validate()
    }
}

/// Lexical resources shared by every run.
#[derive(Debug, Clone)]
pub struct Resources {
    pub lexicon: Lexicon,
    pub connectives: ConnectiveLists,
    pub embeddings: Option<EmbeddingTable>,
}

impl Resources {
    pub fn bundled() -> Self {
        Resources {
            lexicon: Lexicon::bundled(),
            connectives: ConnectiveLists::bundled(),
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub unit_id: usize,
    pub review_id: String,
    pub sentence_id: String,
    pub aspect_id: String,
    pub predicted: Polarity,
    /// Absent for fallback labels, which come from lexicon scores alone.
    pub probability: Option<f64>,
    pub entropy: Option<f64>,
    pub method: LabelMethod,
    /// 0 for easy labels; inferred and fallback labels count from 1.
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub preparation_seconds: f64,
    pub loop_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    /// One record per unit, in unit order.
    pub records: Vec<UnitRecord>,
    pub iterations: usize,
    pub easy: EasyStats,
    pub relation_weights: [f64; 2],
    pub timing: Timing,
}

impl RunResult {
    /// Records as JSON lines; contains no timing, so it is reproducible.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Metrics document; timing lives under its own key.
    pub fn metrics_json(&self, corpus: &Corpus) -> Result<serde_json::Value> {
        let metrics = evaluate(&self.records, corpus)?;
        Ok(serde_json::json!({
            "metrics": metrics,
            "iterations": self.iterations,
            "relation_weights": self.relation_weights,
            "timing": self.timing,
        }))
    }
}

/// Everything computed before the labeling loop starts.
pub struct Prepared {
    pub units: Vec<AspectUnit>,
    pub extraction: Extraction,
    pub easy: EasyOutcome,
    pub graph: FactorGraph,
    pub stats: FeatureStats,
}

/// Enumerates units, extracts features, labels easy instances and builds the
/// factor graph.
pub fn prepare(corpus: &Corpus, resources: &Resources, config: &EngineConfig) -> Result<Prepared> {
    config.validate()?;
    let units = enumerate_aspect_units(corpus);
    if resources.embeddings.is_none() && units.iter().any(|u| u.mode == Mode::Acsa) {
        return Err(Error::MissingEmbeddings);
    }
    let extraction = extract(
        corpus,
        &units,
        &resources.lexicon,
        &resources.connectives,
        resources.embeddings.as_ref(),
        &config.extraction,
        config.parallel,
    );
    let easy = label_easy_instances(
        corpus,
        &units,
        &extraction,
        &resources.lexicon,
        &resources.connectives,
        config.extraction.negation_window,
        config.parallel,
    )?;
    let graph = build_graph(
        units.len(),
        &easy.evidence,
        extraction.index.clone(),
        config.init,
    )?;
    let stats = FeatureStats::from_labels(&graph.index, graph.labels());
    Ok(Prepared {
        units,
        extraction,
        easy,
        graph,
        stats,
    })
}

/// Easy-instance statistics alone; unlike [`prepare`] this succeeds when no
/// unit is easy.
pub fn easy_report(
    corpus: &Corpus,
    resources: &Resources,
    config: &EngineConfig,
) -> Result<EasyStats> {
    config.validate()?;
    let units = enumerate_aspect_units(corpus);
    if resources.embeddings.is_none() && units.iter().any(|u| u.mode == Mode::Acsa) {
        return Err(Error::MissingEmbeddings);
    }
    let extraction = extract(
        corpus,
        &units,
        &resources.lexicon,
        &resources.connectives,
        resources.embeddings.as_ref(),
        &config.extraction,
        config.parallel,
    );
    let decisions = par::map(&units, config.parallel, |u| {
        let sentence = corpus.sentence(u);
        classify_easiness(
            u.unit_id,
            &sentence.tokens,
            extraction.spans[u.unit_id].tokens(sentence),
            &resources.lexicon,
            &resources.connectives,
            config.extraction.negation_window,
        )
    });
    Ok(easy_stats(corpus, &units, &decisions))
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined word
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(a << 6)
        .wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the inference of `target` at `iteration`, independent of which
/// worker runs it.
pub fn candidate_seed(seed: u64, target: usize, iteration: usize) -> u64 {
    mix(mix(seed, target as u64), iteration as u64)
}

/// Learns and infers one candidate on its own subgraph.
pub fn infer_candidate(
    graph: &FactorGraph,
    target: usize,
    iteration: usize,
    config: &EngineConfig,
) -> (crate::graph::Subgraph, MarginalResult) {
    let seed = candidate_seed(config.seed, target, iteration);
    let opts = SubgraphOptions {
        hops: config.hops,
        cap: config.subgraph_cap,
        seed,
    };
    let mut sub = extract_subgraph(graph, target, &opts);
    let inference = InferenceConfig {
        seed,
        ..config.inference
    };
    learn_weights(&mut sub, &inference);
    let result = infer_marginal(&sub, &inference);
    (sub, result)
}

/// Unlabeled units with positive support, kept ordered by support
/// (descending) then unit id.
#[derive(Debug, Clone, Default)]
pub struct SupportRanking {
    scores: Vec<f64>,
    // support is in [0, 1], where the bit pattern orders like the value
    order: BTreeSet<(Reverse<u64>, usize)>,
}

impl SupportRanking {
    pub fn new(n: usize) -> Self {
        SupportRanking {
            scores: vec![0.0; n],
            order: BTreeSet::new(),
        }
    }

    pub fn set(&mut self, unit: usize, score: f64) {
        self.remove(unit);
        self.scores[unit] = score;
        if score > 0.0 {
            self.order.insert((Reverse(score.to_bits()), unit));
        }
    }

    pub fn remove(&mut self, unit: usize) {
        let old = self.scores[unit];
        if old > 0.0 {
            self.order.remove(&(Reverse(old.to_bits()), unit));
        }
        self.scores[unit] = 0.0;
    }

    pub fn score(&self, unit: usize) -> f64 {
        self.scores[unit]
    }

    pub fn top(&self, m: usize) -> Vec<usize> {
        self.order.iter().take(m).map(|&(_, u)| u).collect()
    }
}

/// Ranks the support-selected pool by approximate entropy and keeps `k`.
pub fn select_candidates(
    graph: &FactorGraph,
    stats: &FeatureStats,
    pool: &[usize],
    config: &EngineConfig,
) -> Vec<RankKey> {
    let view = EvidenceView {
        index: &graph.index,
        stats,
        labels: graph.labels(),
    };
    let mut keys: Vec<RankKey> = pool
        .iter()
        .map(|&u| {
            conflict_rank_key(
                u,
                &view.certainty_masses(u, graph.relation_weights, &config.uncertainty),
            )
        })
        .collect();
    keys.sort_by(RankKey::rank_order);
    keys.truncate(config.k);
    keys
}

/// Labels every aspect unit of the corpus.
pub fn run(corpus: &Corpus, resources: &Resources, config: &EngineConfig) -> Result<RunResult> {
    let started = Instant::now();
    let Prepared {
        units,
        extraction,
        easy,
        mut graph,
        mut stats,
    } = prepare(corpus, resources, config)?;
    let preparation_seconds = started.elapsed().as_secs_f64();
    let loop_started = Instant::now();

    let n = units.len();
    // unlabeled units with a relation of each kind whose other endpoint is
    // labeled; their support moves whenever that kind's accuracy does
    let mut observed_kind: [BTreeSet<usize>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for u in graph.unlabeled() {
        for &r in &graph.index.unit_relations[u] {
            let rel = &graph.index.relations[r];
            if graph.labels()[rel.other(u)].is_some() {
                observed_kind[rel.kind.index()].insert(u);
            }
        }
    }

    let score_all = |graph: &FactorGraph, stats: &FeatureStats, targets: &[usize]| -> Vec<f64> {
        let view = EvidenceView {
            index: &graph.index,
            stats,
            labels: graph.labels(),
        };
        par::map(targets, config.parallel, |&u| {
            view.evidential_support(u, &config.uncertainty).score
        })
    };
    let mut support = SupportRanking::new(n);
    let pending: Vec<usize> = graph.unlabeled().collect();
    for (&u, s) in pending.iter().zip(score_all(&graph, &stats, &pending)) {
        support.set(u, s);
    }

    let mut iteration = 0;
    let mut dirty = vec![false; n];
    while graph.unlabeled_count() > 0 {
        iteration += 1;
        let keys = select_candidates(&graph, &stats, &support.top(config.m), config);
        let (unit, label, probability, method) = if keys.is_empty() {
            // no unlabeled unit has any observed feature
            let unit = graph.unlabeled().next().expect("loop guard");
            let fb = fallback_label(&extraction.hits[unit]);
            (unit, fb.polarity, None, LabelMethod::Fallback)
        } else {
            let results = par::map(&keys, config.parallel, |key| {
                infer_candidate(&graph, key.unit_id, iteration, config)
            });
            let (sub, best) = results
                .iter()
                .min_by(|(a, ra), (b, rb)| {
                    ra.entropy
                        .total_cmp(&rb.entropy)
                        .then(a.target_unit().cmp(&b.target_unit()))
                })
                .expect("k >= 1");
            sub.write_back(&mut graph);
            let label = Polarity::from_bit(best.probability >= 0.5);
            (
                sub.target_unit(),
                label,
                Some(best.probability),
                LabelMethod::Inferred,
            )
        };
        log::debug!(
            "iteration {iteration}: unit {unit} -> {label} ({method:?}, p={probability:?})"
        );

        let touched = stats.observe(&graph.index, graph.labels(), unit, label);
        graph.set_label(unit, label, probability, iteration, method)?;
        support.remove(unit);

        let mut rescore = Vec::new();
        let mut mark = |u: usize, rescore: &mut Vec<usize>| {
            if graph_unlabeled(&graph, u) && !dirty[u] {
                dirty[u] = true;
                rescore.push(u);
            }
        };
        for &f in &graph.index.unit_word[unit] {
            for &b in &graph.index.word[f].bearers {
                mark(b, &mut rescore);
            }
        }
        for &r in &graph.index.unit_relations[unit] {
            mark(graph.index.relations[r].other(unit), &mut rescore);
        }
        for k in 0..2 {
            if touched[k] {
                for &u in &observed_kind[k] {
                    mark(u, &mut rescore);
                }
            }
        }
        for set in &mut observed_kind {
            set.remove(&unit);
        }
        for &r in &graph.index.unit_relations[unit] {
            let rel = &graph.index.relations[r];
            let other = rel.other(unit);
            if graph_unlabeled(&graph, other) {
                observed_kind[rel.kind.index()].insert(other);
            }
        }
        for (&u, s) in rescore.iter().zip(score_all(&graph, &stats, &rescore)) {
            support.set(u, s);
            dirty[u] = false;
        }
    }

    let records = units
        .iter()
        .map(|u| {
            let v = &graph.variables[u.unit_id];
            let sentence = corpus.sentence(u);
            let probability = v.probability;
            UnitRecord {
                unit_id: u.unit_id,
                review_id: corpus.review_id(u).to_string(),
                sentence_id: sentence.id.clone(),
                aspect_id: corpus.aspect(u).id.clone(),
                predicted: v.value.expect("every unit labeled"),
                probability,
                entropy: probability.map(|p| entropy(p).expect("probability in [0, 1]")),
                method: v.method.expect("every unit labeled"),
                iteration: v.labeled_at.unwrap_or(0),
            }
        })
        .collect();
    let loop_seconds = loop_started.elapsed().as_secs_f64();
    Ok(RunResult {
        records,
        iterations: iteration,
        easy: easy.stats,
        relation_weights: graph.relation_weights,
        timing: Timing {
            total_seconds: started.elapsed().as_secs_f64(),
            preparation_seconds,
            loop_seconds,
        },
    })
}

fn graph_unlabeled(graph: &FactorGraph, u: usize) -> bool {
    graph.labels()[u].is_none()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EasyMetrics {
    pub proportion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub units: usize,
    pub graded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub by_method: BTreeMap<String, MethodMetrics>,
    pub easy: EasyMetrics,
    /// Accuracy over graded non-easy labels after each iteration.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

fn ratio(correct: usize, graded: usize) -> Option<f64> {
    (graded > 0).then(|| correct as f64 / graded as f64)
}

/// Scores predictions against the corpus gold labels. Records must cover
/// exactly the corpus's units.
pub fn evaluate(records: &[UnitRecord], corpus: &Corpus) -> Result<Metrics> {
    let units = enumerate_aspect_units(corpus);
    let expected: BTreeMap<usize, &AspectUnit> = units.iter().map(|u| (u.unit_id, u)).collect();
    let mut seen = BTreeMap::new();
    let mut bad = Vec::new();
    for r in records {
        let ok = expected.get(&r.unit_id).is_some_and(|u| {
            corpus.review_id(u) == r.review_id
                && corpus.sentence(u).id == r.sentence_id
                && corpus.aspect(u).id == r.aspect_id
        });
        if !ok || seen.insert(r.unit_id, r).is_some() {
            bad.push(r.unit_id);
        }
    }
    bad.extend(expected.keys().filter(|u| !seen.contains_key(u)));
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::UnitMismatch {
            count: bad.len(),
            first: bad.iter().take(10).copied().collect(),
        });
    }

    let mut by_method: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let (mut graded, mut correct) = (0, 0);
    let mut steps: Vec<(usize, bool)> = Vec::new();
    for (id, r) in &seen {
        let gold = corpus.gold(expected[id]);
        let entry = by_method
            .entry(method_name(r.method).to_string())
            .or_default();
        entry.0 += 1;
        if let Some(g) = gold {
            let hit = g == r.predicted;
            graded += 1;
            correct += hit as usize;
            entry.1 += 1;
            entry.2 += hit as usize;
            if r.method != LabelMethod::Easy {
                steps.push((r.iteration, hit));
            }
        }
    }
    steps.sort_unstable();
    let mut trace = Vec::with_capacity(steps.len());
    let mut right = 0;
    for (i, &(_, hit)) in steps.iter().enumerate() {
        right += hit as usize;
        trace.push(right as f64 / (i + 1) as f64);
    }
    let easy = by_method.get("easy").copied().unwrap_or_default();
    Ok(Metrics {
        units: units.len(),
        graded,
        accuracy: ratio(correct, graded),
        easy: EasyMetrics {
            proportion: if units.is_empty() {
                0.0
            } else {
                easy.0 as f64 / units.len() as f64
            },
            accuracy: ratio(easy.2, easy.1),
        },
        by_method: by_method
            .into_iter()
            .map(|(k, (count, g, c))| {
                (
                    k,
                    MethodMetrics {
                        count,
                        accuracy: ratio(c, g),
                    },
                )
            })
            .collect(),
        trace,
    })
}

fn method_name(m: LabelMethod) -> &'static str {
    match m {
        LabelMethod::Easy => "easy",
        LabelMethod::Inferred => "inferred",
        LabelMethod::Fallback => "fallback",
    }
}

/// Parses prediction JSON lines, skipping blank lines.
pub fn parse_predictions(text: &str) -> Result<Vec<UnitRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                context: format!("predictions line {}", i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub size: usize,
    pub total_seconds: f64,
    pub seconds_per_label: f64,
}

/// Times full runs on synthetic corpora of the given sizes.
pub fn bench_scaling(
    sizes: &[usize],
    params: &SyntheticParams,
    config: &EngineConfig,
) -> Result<Vec<ScalingRow>> {
    if sizes.contains(&0) {
        return Err(Error::Config("bench sizes must be positive".into()));
    }
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("bench sizes must be ascending".into()));
    }
    sizes
        .iter()
        .map(|&size| {
            let synth = generate_synthetic(&SyntheticParams {
                n_units: size,
                ..*params
            })?;
            let resources = Resources {
                lexicon: synth.lexicon,
                connectives: ConnectiveLists::bundled(),
                embeddings: None,
            };
            let started = Instant::now();
            let result = run(&synth.corpus, &resources, config)?;
            let total_seconds = started.elapsed().as_secs_f64();
            let labels = result.iterations.max(1);
            Ok(ScalingRow {
                size,
                total_seconds,
                seconds_per_label: total_seconds / labels as f64,
            })
        })
        .collect()
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("size,total_seconds,seconds_per_label\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.9}",
            r.size, r.total_seconds, r.seconds_per_label
        );
    }
    out
}

/// Diagnostic dump of one unit in the prepared (pre-loop) state.
pub fn inspect(
    corpus: &Corpus,
    resources: &Resources,
    config: &EngineConfig,
    unit: usize,
) -> Result<serde_json::Value> {
    let prepared = prepare(corpus, resources, config)?;
    let Some(u) = prepared.units.get(unit) else {
        return Err(Error::Config(format!(
            "unit {unit} out of range (corpus has {} units)",
            prepared.units.len()
        )));
    };
    let graph = &prepared.graph;
    let view = EvidenceView {
        index: &graph.index,
        stats: &prepared.stats,
        labels: graph.labels(),
    };
    let words: Vec<serde_json::Value> = graph.index.unit_word[unit]
        .iter()
        .map(|&f| {
            serde_json::json!({
                "id": f,
                "feature": graph.index.word[f].key.label(),
                "bearers": graph.index.word[f].bearers.len(),
                "labeled": prepared.stats.n(f),
                "p": prepared.stats.p(f),
                "weight": graph.word_weights[f],
            })
        })
        .collect();
    let relations: Vec<serde_json::Value> = graph.index.unit_relations[unit]
        .iter()
        .map(|&r| {
            let rel = &graph.index.relations[r];
            serde_json::json!({ "id": r, "kind": rel.kind, "rule": rel.rule, "other": rel.other(unit) })
        })
        .collect();
    let support = view.evidential_support(unit, &config.uncertainty);
    let certainty = view.certainty_masses(unit, graph.relation_weights, &config.uncertainty);
    let sentence = corpus.sentence(u);
    let span = &prepared.extraction.spans[unit];
    let mut doc = serde_json::json!({
        "unit_id": unit,
        "review_id": corpus.review_id(u),
        "sentence_id": sentence.id,
        "aspect_id": corpus.aspect(u).id,
        "mode": u.mode,
        "sentence": sentence.text,
        "opinion_span": span.tokens(sentence),
        "easy": prepared.easy.decisions[unit].verdict,
        "word_features": words,
        "relations": relations,
        "support": support,
        "support_masses": view.support_masses(unit, &config.uncertainty),
        "certainty_masses": certainty,
        "rank_key": conflict_rank_key(unit, &certainty),
    });
    if graph.labels()[unit].is_none() {
        let sub = extract_subgraph(
            graph,
            unit,
            &SubgraphOptions {
                hops: config.hops,
                cap: config.subgraph_cap,
                seed: config.seed,
            },
        );
        doc["subgraph"] = serde_json::json!({
            "units": sub.units,
            "evidence": sub.evidence_count(),
            "word_factors": sub.word_factors.len(),
            "relation_factors": sub.relation_factors.len(),
        });
    }
    Ok(doc)
}
