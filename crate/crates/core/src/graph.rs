//! The factor graph over polarity variables, and inference subgraphs.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Polarity;
use crate::easy::EvidenceSet;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, RelationKind};

pub const DEFAULT_HOPS: usize = 2;
pub const DEFAULT_SUBGRAPH_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Evidence,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMethod {
    Easy,
    Inferred,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarityVariable {
    pub unit_id: usize,
    pub kind: VariableKind,
    pub value: Option<Polarity>,
    pub probability: Option<f64>,
    pub labeled_at: Option<usize>,
    pub method: Option<LabelMethod>,
}

/// Initial weights of word, similar and opposite factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialWeights {
    pub word: f64,
    pub similar: f64,
    pub opposite: f64,
}

impl Default for InitialWeights {
    fn default() -> Self {
        InitialWeights {
            word: 0.0,
            similar: 2.0,
            opposite: -2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorGraph {
    pub variables: Vec<PolarityVariable>,
    pub index: FeatureIndex,
    pub word_weights: Vec<f64>,
    /// Tied weights, indexed by [`RelationKind::index`].
    pub relation_weights: [f64; 2],
    #[serde(skip)]
    labels: Vec<Option<Polarity>>,
}

/// Potential of a word factor: 1 for a negative value, `e^w` for a positive one.
pub fn word_potential(weight: f64, value: bool) -> f64 {
    if value {
        weight.exp()
    } else {
        1.0
    }
}

/// Potential of a relational factor: `e^w` when both values agree, else 1.
pub fn relational_potential(weight: f64, a: bool, b: bool) -> f64 {
    if a == b {
        weight.exp()
    } else {
        1.0
    }
}

pub fn build_graph(
    n_units: usize,
    evidence: &EvidenceSet,
    index: FeatureIndex,
    init: InitialWeights,
) -> Result<FactorGraph> {
    for f in &index.word {
        if let Some(&b) = f.bearers.iter().find(|&&b| b >= n_units) {
            return Err(Error::Inconsistent(format!(
                "word feature {} has dangling bearer {b}",
                f.id
            )));
        }
    }
    for r in &index.relations {
        if r.endpoints.1 >= n_units || r.endpoints.0 == r.endpoints.1 {
            return Err(Error::Inconsistent(format!(
                "relation {} has bad endpoints {:?}",
                r.id, r.endpoints
            )));
        }
    }
    if index.unit_word.len() != n_units || index.unit_relations.len() != n_units {
        return Err(Error::Inconsistent(
            "feature adjacency does not cover every unit".into(),
        ));
    }
    if let Some((&u, _)) = evidence.labels.range(n_units..).next() {
        return Err(Error::Inconsistent(format!(
            "evidence for unknown unit {u}"
        )));
    }
    let mut labels = vec![None; n_units];
    let variables = (0..n_units)
        .map(|u| match evidence.labels.get(&u) {
            Some(&p) => {
                labels[u] = Some(p);
                PolarityVariable {
                    unit_id: u,
                    kind: VariableKind::Evidence,
                    value: Some(p),
                    probability: Some(if p.is_positive() { 1.0 } else { 0.0 }),
                    labeled_at: None,
                    method: Some(LabelMethod::Easy),
                }
            }
            None => PolarityVariable {
                unit_id: u,
                kind: VariableKind::Inference,
                value: None,
                probability: None,
                labeled_at: None,
                method: None,
            },
        })
        .collect();
    Ok(FactorGraph {
        variables,
        word_weights: vec![init.word; index.word.len()],
        relation_weights: [init.similar, init.opposite],
        index,
        labels,
    })
}

impl FactorGraph {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn labels(&self) -> &[Option<Polarity>] {
        &self.labels
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_none())
            .map(|(u, _)| u)
    }

    pub fn unlabeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Labels an inference variable. Labels are final.
    pub fn set_label(
        &mut self,
        unit: usize,
        value: Polarity,
        probability: Option<f64>,
        iteration: usize,
        method: LabelMethod,
    ) -> Result<()> {
        if self.labels[unit].is_some() {
            return Err(Error::Inconsistent(format!(
                "unit {unit} is already labeled"
            )));
        }
        self.labels[unit] = Some(value);
        let v = &mut self.variables[unit];
        v.value = Some(value);
        v.probability = probability;
        v.labeled_at = Some(iteration);
        v.method = Some(method);
        Ok(())
    }

    /// Units reachable from `target` over at most `hops` relational factors.
    pub fn relational_neighborhood(&self, target: usize, hops: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([target]);
        let mut frontier = vec![target];
        for _ in 0..hops {
            let mut next = Vec::new();
            for u in frontier {
                for &r in &self.index.unit_relations[u] {
                    let o = self.index.relations[r].other(u);
                    if seen.insert(o) {
                        next.push(o);
                    }
                }
            }
            frontier = next;
        }
        seen
    }

    /// JSON adjacency listing for debugging.
    pub fn dump(&self) -> serde_json::Value {
        let vars: Vec<_> = self
            .variables
            .iter()
            .map(|v| {
                let words: Vec<_> = self.index.unit_word[v.unit_id]
                    .iter()
                    .map(|&f| {
                        serde_json::json!({
                            "id": f,
                            "feature": self.index.word[f].key.label(),
                            "weight": self.word_weights[f],
                        })
                    })
                    .collect();
                let relations: Vec<_> = self.index.unit_relations[v.unit_id]
                    .iter()
                    .map(|&r| {
                        let rel = &self.index.relations[r];
                        serde_json::json!({
                            "id": r,
                            "kind": rel.kind,
                            "rule": rel.rule,
                            "other": rel.other(v.unit_id),
                            "weight": self.relation_weights[rel.kind.index()],
                        })
                    })
                    .collect();
                serde_json::json!({
                    "unit_id": v.unit_id,
                    "kind": v.kind,
                    "value": v.value,
                    "word_factors": words,
                    "relational_factors": relations,
                })
            })
            .collect();
        serde_json::json!({ "variables": vars })
    }
}

/// What a subgraph weight parameter refers to in the global graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Param {
    Word(usize),
    Relation(RelationKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Incident {
    Word { param: usize },
    Relation { other: usize, param: usize },
}

/// A self-contained inference problem around one target variable.
///
/// Variables are local indices; index 0 is the target. Every factor whose
/// scope lies inside the variable set is present.
#[derive(Debug, Clone, Serialize)]
pub struct Subgraph {
    pub units: Vec<usize>,
    /// Fixed values of evidence variables; `None` for unlabeled ones.
    pub clamped: Vec<Option<bool>>,
    /// (variable, parameter)
    pub word_factors: Vec<(usize, usize)>,
    /// (variable, variable, parameter)
    pub relation_factors: Vec<(usize, usize, usize)>,
    pub params: Vec<Param>,
    pub weights: Vec<f64>,
    // factors touching each variable, as offsets into one flat list
    #[serde(skip)]
    incident_start: Vec<usize>,
    #[serde(skip)]
    incident: Vec<Incident>,
}

impl Subgraph {
    /// Assembles a subgraph from raw parts; variable 0 is the target.
    pub fn from_parts(
        units: Vec<usize>,
        clamped: Vec<Option<bool>>,
        word_factors: Vec<(usize, usize)>,
        relation_factors: Vec<(usize, usize, usize)>,
        params: Vec<Param>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = units.len();
        if n == 0 || clamped.len() != n || params.len() != weights.len() {
            return Err(Error::Inconsistent(
                "subgraph parts have mismatched sizes".into(),
            ));
        }
        let mut degree = vec![0usize; n + 1];
        for &(v, p) in &word_factors {
            if v >= n || p >= params.len() {
                return Err(Error::Inconsistent("word factor out of range".into()));
            }
            degree[v + 1] += 1;
        }
        for &(a, b, p) in &relation_factors {
            if a >= n || b >= n || a == b || p >= params.len() {
                return Err(Error::Inconsistent("relational factor out of range".into()));
            }
            degree[a + 1] += 1;
            degree[b + 1] += 1;
        }
        for v in 0..n {
            degree[v + 1] += degree[v];
        }
        let incident_start = degree;
        let mut fill = incident_start.clone();
        let mut incident = vec![Incident::Word { param: 0 }; incident_start[n]];
        let mut put = |v: usize, inc: Incident| {
            incident[fill[v]] = inc;
            fill[v] += 1;
        };
        for &(v, p) in &word_factors {
            put(v, Incident::Word { param: p });
        }
        for &(a, b, p) in &relation_factors {
            put(a, Incident::Relation { other: b, param: p });
            put(b, Incident::Relation { other: a, param: p });
        }
        Ok(Subgraph {
            units,
            clamped,
            word_factors,
            relation_factors,
            params,
            weights,
            incident_start,
            incident,
        })
    }

    pub(crate) fn incident(&self, v: usize) -> &[Incident] {
        &self.incident[self.incident_start[v]..self.incident_start[v + 1]]
    }

    pub fn target_unit(&self) -> usize {
        self.units[0]
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.clamped.iter().filter(|c| c.is_none()).count()
    }

    pub fn evidence_count(&self) -> usize {
        self.len() - self.unlabeled_count()
    }

    /// Unnormalized probability of a full assignment: the product of all
    /// factor potentials.
    pub fn score(&self, values: &[bool]) -> f64 {
        let mut s = 1.0;
        for &(v, p) in &self.word_factors {
            s *= word_potential(self.weights[p], values[v]);
        }
        for &(a, b, p) in &self.relation_factors {
            s *= relational_potential(self.weights[p], values[a], values[b]);
        }
        s
    }

    /// Copies learned weights back into the global graph.
    pub fn write_back(&self, graph: &mut FactorGraph) {
        for (param, &w) in self.params.iter().zip(&self.weights) {
            match *param {
                Param::Word(f) => graph.word_weights[f] = w,
                Param::Relation(k) => graph.relation_weights[k.index()] = w,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgraphOptions {
    pub hops: usize,
    /// Largest bearer set taken whole; above it unlabeled bearers are sampled.
    pub cap: usize,
    pub seed: u64,
}

impl Default for SubgraphOptions {
    fn default() -> Self {
        SubgraphOptions {
            hops: DEFAULT_HOPS,
            cap: DEFAULT_SUBGRAPH_CAP,
            seed: 0,
        }
    }
}

/// Builds the inference subgraph of an unlabeled target: its relational
/// neighbors within `hops`, plus the bearers of each of its word features.
/// Labeled variables (easy or previously inferred) enter as evidence.
pub fn extract_subgraph(graph: &FactorGraph, target: usize, opts: &SubgraphOptions) -> Subgraph {
    let mut members: Vec<usize> = graph
        .relational_neighborhood(target, opts.hops)
        .into_iter()
        .collect();
    for &f in &graph.index.unit_word[target] {
        let bearers = &graph.index.word[f].bearers;
        if bearers.len() <= opts.cap {
            members.extend_from_slice(bearers);
            continue;
        }
        let (labeled, mut unlabeled): (Vec<usize>, Vec<usize>) =
            bearers.iter().partition(|&&b| graph.labels[b].is_some());
        members.extend(labeled.iter().copied());
        let room = opts.cap.saturating_sub(labeled.len());
        let mut rng =
            ChaCha8Rng::seed_from_u64(opts.seed ^ (f as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        unlabeled.shuffle(&mut rng);
        members.extend(unlabeled.into_iter().take(room));
    }
    members.sort_unstable();
    members.dedup();
    members.retain(|&u| u != target);

    // local index: 0 for the target, 1 + position among the sorted rest
    let local = |u: usize| -> Option<usize> {
        if u == target {
            Some(0)
        } else {
            members.binary_search(&u).ok().map(|i| i + 1)
        }
    };
    let mut units = Vec::with_capacity(members.len() + 1);
    units.push(target);
    units.extend_from_slice(&members);

    let mut params = vec![
        Param::Relation(RelationKind::Similar),
        Param::Relation(RelationKind::Opposite),
    ];
    let mut weights = graph.relation_weights.to_vec();
    let mut word_param: HashMap<usize, usize> = HashMap::new();
    let mut word_factors = Vec::new();
    let mut relation_factors = Vec::new();
    for (i, &u) in units.iter().enumerate() {
        for &f in &graph.index.unit_word[u] {
            let p = *word_param.entry(f).or_insert_with(|| {
                params.push(Param::Word(f));
                weights.push(graph.word_weights[f]);
                params.len() - 1
            });
            word_factors.push((i, p));
        }
        for &r in &graph.index.unit_relations[u] {
            let rel = &graph.index.relations[r];
            // each relation is listed under both endpoints; keep one copy
            if let Some(j) = local(rel.other(u)).filter(|&j| j > i) {
                relation_factors.push((i, j, rel.kind.index()));
            }
        }
    }
    let clamped = units
        .iter()
        .map(|&u| graph.labels[u].map(Polarity::is_positive))
        .collect();
    Subgraph::from_parts(
        units,
        clamped,
        word_factors,
        relation_factors,
        params,
        weights,
    )
    .expect("subgraph assembled from a consistent graph")
}
