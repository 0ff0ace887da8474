//! Weight learning and marginal inference on subgraphs by Gibbs sampling,
//! with an exact-enumeration reference.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evidence::sigmoid;
use crate::features::RelationKind;
use crate::graph::{relational_potential, word_potential, Incident, Param, Subgraph};

/// Largest number of unlabeled variables [`exact_marginal`] will enumerate.
pub const EXACT_LIMIT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InferenceConfig {
    pub burn_in_sweeps: usize,
    pub sample_sweeps: usize,
    pub learning_epochs: usize,
    pub step_size: f64,
    pub l2: f64,
    pub weight_clamp: f64,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            burn_in_sweeps: 100,
            sample_sweeps: 500,
            learning_epochs: 5,
            step_size: 0.01,
            l2: 0.01,
            weight_clamp: 10.0,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in_sweeps == 0 || self.sample_sweeps == 0 || self.learning_epochs == 0 {
            return Err(Error::Config(
                "sweep and epoch counts must be positive".into(),
            ));
        }
        if self.weight_clamp.is_nan()
            || self.weight_clamp <= 0.0
            || self.step_size.is_nan()
            || self.step_size <= 0.0
            || self.l2.is_nan()
            || self.l2 < 0.0
        {
            return Err(Error::Config(
                "step size and clamp must be positive, l2 non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalResult {
    pub probability: f64,
    pub entropy: f64,
    pub learned_weights: Vec<f64>,
}

/// Natural-log binary entropy with 0·ln 0 = 0.
pub fn entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "[0, 1]",
        });
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    Ok(-(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
}

/// Log-odds of `var` being positive given the current values of its neighbors.
fn logit(sub: &Subgraph, values: &[bool], var: usize) -> f64 {
    let mut z = 0.0;
    for inc in sub.incident(var) {
        match *inc {
            Incident::Word { param } => z += sub.weights[param],
            Incident::Relation { other, param } => {
                let w = sub.weights[param];
                z += if values[other] { w } else { -w };
            }
        }
    }
    z
}

fn sweep(sub: &Subgraph, values: &mut [bool], order: &[usize], rng: &mut ChaCha8Rng) {
    for &v in order {
        let p = sigmoid(logit(sub, values, v));
        values[v] = rng.gen::<f64>() < p;
    }
}

fn initial_state(sub: &Subgraph, rng: &mut ChaCha8Rng) -> Vec<bool> {
    sub.clamped
        .iter()
        .map(|c| c.unwrap_or_else(|| rng.gen_bool(0.5)))
        .collect()
}

/// Unlabeled variables connected to the target through relational factors
/// that do not pass through evidence. Word factors are unary, so nothing
/// outside this set influences the target's marginal.
fn target_component(sub: &Subgraph) -> Vec<usize> {
    let mut seen = vec![false; sub.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        out.push(v);
        for inc in sub.incident(v) {
            if let Incident::Relation { other, .. } = *inc {
                if !seen[other] && sub.clamped[other].is_none() {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
    }
    out.sort_unstable();
    out
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// The target's relational component as a pairwise binary model: evidence
/// folded into unary fields, and dangling tree branches summed out exactly
/// into the variable they hang from. The target is variable 0.
struct Collapsed {
    field: Vec<f64>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, f64)>,
}

impl Collapsed {
    fn new(sub: &Subgraph) -> Self {
        let order = target_component(sub);
        let mut local = vec![usize::MAX; sub.len()];
        for (i, &v) in order.iter().enumerate() {
            local[v] = i;
        }
        let mut field = vec![0.0; order.len()];
        let mut edges = Vec::new();
        for (i, &v) in order.iter().enumerate() {
            for inc in sub.incident(v) {
                match *inc {
                    Incident::Word { param } => field[i] += sub.weights[param],
                    Incident::Relation { other, param } => {
                        let w = sub.weights[param];
                        match sub.clamped[other] {
                            Some(e) => field[i] += if e { w } else { -w },
                            None if local[other] > i => edges.push((i, local[other], w)),
                            None => {}
                        }
                    }
                }
            }
        }

        let n = order.len();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (e, &(a, b, _)) in edges.iter().enumerate() {
            incident[a].push(e);
            incident[b].push(e);
        }
        let mut degree: Vec<usize> = incident.iter().map(Vec::len).collect();
        let mut alive_edge = vec![true; edges.len()];
        let mut alive = vec![true; n];
        let mut leaves: Vec<usize> = (1..n).filter(|&v| degree[v] == 1).collect();
        while let Some(l) = leaves.pop() {
            alive[l] = false;
            let Some(&e) = incident[l].iter().find(|&&e| alive_edge[e]) else {
                continue;
            };
            alive_edge[e] = false;
            let (a, b, w) = edges[e];
            let u = if a == l { b } else { a };
            // log Σ_x exp(h·x + w·[x = x_u]) at x_u = 1 minus at x_u = 0
            let h = field[l];
            field[u] += log_add_exp(h + w, 0.0) - log_add_exp(h, w);
            degree[u] -= 1;
            if u != 0 && degree[u] == 1 {
                leaves.push(u);
            }
        }

        let kept: Vec<usize> = (0..n).filter(|&v| alive[v]).collect();
        let mut compact = vec![usize::MAX; n];
        for (i, &v) in kept.iter().enumerate() {
            compact[v] = i;
        }
        let mut adj_start = vec![0];
        let mut adj = Vec::new();
        for &v in &kept {
            for &e in &incident[v] {
                if alive_edge[e] {
                    let (a, b, w) = edges[e];
                    adj.push((compact[if a == v { b } else { a }], w));
                }
            }
            adj_start.push(adj.len());
        }
        Collapsed {
            field: kept.iter().map(|&v| field[v]).collect(),
            adj_start,
            adj,
        }
    }

    fn len(&self) -> usize {
        self.field.len()
    }

    fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[self.adj_start[v]..self.adj_start[v + 1]]
    }

    fn logit(&self, values: &[bool], v: usize) -> f64 {
        self.neighbors(v).iter().fold(
            self.field[v],
            |z, &(u, w)| if values[u] { z + w } else { z - w },
        )
    }

    fn sweep(&self, values: &mut [bool], rng: &mut ChaCha8Rng) {
        for v in 0..self.len() {
            values[v] = rng.gen::<f64>() < sigmoid(self.logit(values, v));
        }
    }

    /// Swendsen-Wang style move: bond each satisfied coupling with
    /// probability 1 − e^−|w|, then flip every bond cluster as a unit
    /// according to its fields. Leaves the same distribution invariant as a
    /// sweep but crosses the barriers strong couplings put in front of
    /// single-site updates. Returns the target's probability of ending up
    /// positive given the bonds.
    fn cluster_move(&self, values: &mut [bool], c: &mut Clusters, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.len();
        c.parent.clear();
        c.parent.extend(0..n);
        c.delta.clear();
        c.delta.resize(n, 0.0);
        for v in 0..n {
            for &(u, w) in self.neighbors(v) {
                if u < v || w == 0.0 || (values[v] == values[u]) != (w > 0.0) {
                    continue;
                }
                if rng.gen::<f64>() < -(-w.abs()).exp_m1() {
                    let (a, b) = (c.root(v), c.root(u));
                    c.parent[b] = a;
                }
            }
        }
        // log-weight change of flipping each cluster
        for (v, &x) in values.iter().enumerate() {
            let r = c.root(v);
            c.delta[r] += if x { -self.field[v] } else { self.field[v] };
        }
        c.flip.clear();
        c.flip.resize(n, false);
        for v in 0..n {
            if c.parent[v] == v {
                c.flip[v] = rng.gen::<f64>() < sigmoid(c.delta[v]);
            }
        }
        let r = c.root(0);
        let target = if values[0] {
            1.0 - sigmoid(c.delta[r])
        } else {
            sigmoid(c.delta[r])
        };
        for (v, x) in values.iter_mut().enumerate() {
            let r = c.root(v);
            *x ^= c.flip[r];
        }
        target
    }
}

#[derive(Default)]
struct Clusters {
    parent: Vec<usize>,
    delta: Vec<f64>,
    flip: Vec<bool>,
}

impl Clusters {
    fn root(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }
}

/// Estimates the target's probability of being positive by Gibbs sampling
/// the unlabeled variables with evidence clamped.
///
/// Only the target's relational component matters; dangling branches of it
/// are summed out exactly first, and each sweep over what remains is
/// followed by a cluster move. The estimate averages the target's
/// conditional probability, given its neighbors or given the cluster bonds,
/// over the post-burn-in sweeps (a Rao-Blackwellized form of the fraction
/// of sweeps with the target positive). The target is always sampled as if
/// unlabeled.
pub fn infer_marginal(sub: &Subgraph, config: &InferenceConfig) -> MarginalResult {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = Collapsed::new(sub);
    let mut values: Vec<bool> = (0..model.len()).map(|_| rng.gen_bool(0.5)).collect();
    let mut clusters = Clusters::default();
    for _ in 0..config.burn_in_sweeps {
        model.sweep(&mut values, &mut rng);
        model.cluster_move(&mut values, &mut clusters, &mut rng);
    }
    let mut acc = 0.0;
    for _ in 0..config.sample_sweeps {
        model.sweep(&mut values, &mut rng);
        let before = sigmoid(model.logit(&values, 0));
        let bonded = model.cluster_move(&mut values, &mut clusters, &mut rng);
        acc += (before + bonded + sigmoid(model.logit(&values, 0))) / 3.0;
    }
    let probability = (acc / config.sample_sweeps as f64).clamp(0.0, 1.0);
    MarginalResult {
        probability,
        entropy: entropy(probability).expect("probability in [0, 1]"),
        learned_weights: sub.weights.clone(),
    }
}

/// Exact probability that the target is positive, by enumerating every
/// assignment of the unlabeled variables and weighting it by the product of
/// factor potentials.
pub fn exact_marginal(sub: &Subgraph) -> Result<f64> {
    let free: Vec<usize> = (0..sub.len())
        .filter(|&v| v == 0 || sub.clamped[v].is_none())
        .collect();
    if free.len() > EXACT_LIMIT {
        return Err(Error::TooLarge {
            unlabeled: free.len(),
            limit: EXACT_LIMIT,
        });
    }
    let mut values: Vec<bool> = sub.clamped.iter().map(|c| c.unwrap_or(false)).collect();
    // log-domain products keep large subgraphs finite
    let mut logs = Vec::with_capacity(1 << free.len());
    for mask in 0u32..(1u32 << free.len()) {
        for (bit, &v) in free.iter().enumerate() {
            values[v] = mask & (1 << bit) != 0;
        }
        let mut log_score = 0.0;
        for &(v, p) in &sub.word_factors {
            log_score += word_potential(sub.weights[p], values[v]).ln();
        }
        for &(a, b, p) in &sub.relation_factors {
            log_score += relational_potential(sub.weights[p], values[a], values[b]).ln();
        }
        logs.push((values[0], log_score));
    }
    let max = logs
        .iter()
        .map(|&(_, l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut pos, mut total) = (0.0, 0.0);
    for (target, l) in logs {
        let w = (l - max).exp();
        total += w;
        if target {
            pos += w;
        }
    }
    Ok(pos / total)
}

fn sufficient_statistics(sub: &Subgraph, values: &[bool], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for &(v, p) in &sub.word_factors {
        if values[v] {
            out[p] += 1.0;
        }
    }
    for &(a, b, p) in &sub.relation_factors {
        if values[a] == values[b] {
            out[p] += 1.0;
        }
    }
}

/// Learns the subgraph's weights by minimizing the negative log marginal
/// likelihood of the evidence, one stochastic gradient step per epoch.
///
/// Each epoch advances two persistent Gibbs chains by one sweep: one with
/// evidence clamped, one free over every variable. The gradient is the
/// difference of their factor statistics, with L2 shrinkage on the
/// parameters that have factors here. Relational weights stay tied per kind
/// and keep their sign (similar ≥ 0 ≥ opposite); all weights are clamped to
/// ±`weight_clamp`.
pub fn learn_weights(sub: &mut Subgraph, config: &InferenceConfig) -> Vec<f64> {
    let n_params = sub.weights.len();
    let mut present = vec![false; n_params];
    for &(_, p) in &sub.word_factors {
        present[p] = true;
    }
    for &(_, _, p) in &sub.relation_factors {
        present[p] = true;
    }
    if sub.evidence_count() == 0 || !present.iter().any(|&p| p) {
        return sub.weights.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_1EA2);
    let mut clamped = initial_state(sub, &mut rng);
    // the free chain starts from the data, contrastive-divergence style
    let mut free = clamped.clone();
    let unlabeled: Vec<usize> = (0..sub.len())
        .filter(|&v| sub.clamped[v].is_none())
        .collect();
    let everything: Vec<usize> = (0..sub.len()).collect();
    let mut stat_c = vec![0.0; n_params];
    let mut stat_f = vec![0.0; n_params];
    for _ in 0..config.learning_epochs {
        sweep(sub, &mut clamped, &unlabeled, &mut rng);
        sweep(sub, &mut free, &everything, &mut rng);
        sufficient_statistics(sub, &clamped, &mut stat_c);
        sufficient_statistics(sub, &free, &mut stat_f);
        for p in 0..n_params {
            if !present[p] {
                continue;
            }
            let w = sub.weights[p];
            let grad = stat_c[p] - stat_f[p] - config.l2 * w;
            let mut next =
                (w + config.step_size * grad).clamp(-config.weight_clamp, config.weight_clamp);
            match sub.params[p] {
                Param::Relation(RelationKind::Similar) => next = next.max(0.0),
                Param::Relation(RelationKind::Opposite) => next = next.min(0.0),
                Param::Word(_) => {}
            }
            sub.weights[p] = next;
        }
    }
    sub.weights.clone()
}
