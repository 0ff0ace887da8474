//! Dempster–Shafer mass functions over two-proposition frames, used to
//! measure evidential support and to approximate entropy ranking.

use std::cmp::Ordering;

use serde::Serialize;

use crate::corpus::Polarity;
use crate::error::{Error, Result};
use crate::features::{FeatureIndex, FeatureStats};
use crate::inference::entropy;

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Which pair of propositions a mass function ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    /// {label, leave unlabeled}
    Support,
    /// {positive, negative}
    Certainty,
}

/// Basic belief assignment on {a, b}: masses on {a}, {b} and {a, b}.
/// The empty set carries no mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mass {
    pub frame: Frame,
    pub a: f64,
    pub b: f64,
    pub both: f64,
    /// Conflict accumulated over the combinations that produced this mass.
    pub conflict: f64,
}

impl Mass {
    pub fn new(frame: Frame, a: f64, b: f64, both: f64) -> Result<Self> {
        for (name, v) in [("m(a)", a), ("m(b)", b), ("m(a,b)", both)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "[0, 1]",
                });
            }
        }
        let total = a + b + both;
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Domain {
                name: "mass total",
                value: total,
                domain: "{1}",
            });
        }
        Ok(Mass {
            frame,
            a,
            b,
            both,
            conflict: 0.0,
        })
    }

    pub fn vacuous(frame: Frame) -> Self {
        Mass {
            frame,
            a: 0.0,
            b: 0.0,
            both: 1.0,
            conflict: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.a + self.b + self.both
    }

    /// Conflict K between two masses: product mass landing on the empty set.
    pub fn conflict_with(&self, other: &Mass) -> f64 {
        self.a * other.b + self.b * other.a
    }

    /// Dempster's rule of combination.
    pub fn combine(&self, other: &Mass) -> Result<Mass> {
        if self.frame != other.frame {
            return Err(Error::FrameMismatch);
        }
        let k = self.conflict_with(other);
        let norm = 1.0 - k;
        if norm <= 0.0 {
            return Err(Error::TotalConflict);
        }
        Ok(Mass {
            frame: self.frame,
            a: (self.a * other.a + self.a * other.both + self.both * other.a) / norm,
            b: (self.b * other.b + self.b * other.both + self.both * other.b) / norm,
            both: self.both * other.both / norm,
            conflict: 1.0 - (1.0 - self.conflict) * (1.0 - other.conflict) * norm,
        })
    }

    /// Pignistic probability of the first proposition.
    pub fn pignistic(&self) -> f64 {
        self.a + self.both / 2.0
    }
}

pub fn combine(m1: &Mass, m2: &Mass) -> Result<Mass> {
    m1.combine(m2)
}

/// Combines in order; `None` for an empty sequence.
pub fn combine_all<'a>(masses: impl IntoIterator<Item = &'a Mass>) -> Result<Option<Mass>> {
    let mut acc: Option<Mass> = None;
    for m in masses {
        acc = Some(match acc {
            None => *m,
            Some(a) => a.combine(m)?,
        });
    }
    Ok(acc)
}

/// Degrees of uncertainty for support (`d_f`, `d_fp`) and certainty
/// (`d_f_star`, `d_fp_star`) masses of word and relational features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyParams {
    pub d_f: f64,
    pub d_fp: f64,
    pub d_f_star: f64,
    pub d_fp_star: f64,
}

impl Default for UncertaintyParams {
    fn default() -> Self {
        UncertaintyParams {
            d_f: 0.4,
            d_fp: 0.1,
            d_f_star: 0.4,
            d_fp_star: 0.1,
        }
    }
}

impl UncertaintyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_f", self.d_f),
            ("d_fp", self.d_fp),
            ("d_f_star", self.d_f_star),
            ("d_fp_star", self.d_fp_star),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Domain {
                    name,
                    value: v,
                    domain: "(0, 1]",
                });
            }
        }
        if self.d_fp >= self.d_f {
            log::warn!("d_fp ({}) is not below d_f ({}); relational evidence will be discounted at least as much as word evidence", self.d_fp, self.d_f);
        }
        Ok(())
    }
}

fn check_unit(name: &'static str, v: f64, open: bool) -> Result<()> {
    let ok = if open {
        v > 0.0 && v < 1.0
    } else {
        (0.0..=1.0).contains(&v)
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value: v,
            domain: if open { "(0, 1)" } else { "[0, 1]" },
        })
    }
}

/// Support a word feature lends: extreme positive fractions mean more
/// support for labeling.
pub fn word_support_mass(p: f64, d_f: f64) -> Result<Mass> {
    check_unit("P(f)", p, true)?;
    check_unit("d_f", d_f, false)?;
    let (hi, lo) = (p.max(1.0 - p), p.min(1.0 - p));
    Ok(Mass {
        frame: Frame::Support,
        a: (1.0 - d_f) * hi,
        b: (1.0 - d_f) * lo,
        both: d_f,
        conflict: 0.0,
    })
}

/// Support a relation lends, from the estimated accuracy of its kind.
pub fn relation_support_mass(r: f64, d_fp: f64) -> Result<Mass> {
    check_unit("R(f')", r, true)?;
    check_unit("d_fp", d_fp, false)?;
    Ok(Mass {
        frame: Frame::Support,
        a: (1.0 - d_fp) * r,
        b: (1.0 - d_fp) * (1.0 - r),
        both: d_fp,
        conflict: 0.0,
    })
}

/// Certainty mass on {positive, negative} for a probability of positive.
pub fn certainty_mass(p_positive: f64, d: f64) -> Result<Mass> {
    check_unit("P", p_positive, false)?;
    check_unit("d*", d, false)?;
    Ok(Mass {
        frame: Frame::Certainty,
        a: (1.0 - d) * p_positive,
        b: (1.0 - d) * (1.0 - p_positive),
        both: d,
        conflict: 0.0,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability that a unit is positive given only a relation to a labeled
/// unit, under the relation's current weight.
pub fn relation_positive_probability(weight: f64, other: Polarity) -> f64 {
    match other {
        Polarity::Positive => sigmoid(weight),
        Polarity::Negative => 1.0 - sigmoid(weight),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Support {
    pub score: f64,
    pub observed: usize,
    /// Set when the combination hit total conflict; the score is then 0.
    pub total_conflict: bool,
}

/// Read-only view of what evidential scoring needs about the graph state.
pub struct EvidenceView<'a> {
    pub index: &'a FeatureIndex,
    pub stats: &'a FeatureStats,
    pub labels: &'a [Option<Polarity>],
}

impl EvidenceView<'_> {
    fn support_iter<'s>(
        &'s self,
        unit: usize,
        params: &'s UncertaintyParams,
    ) -> impl Iterator<Item = Mass> + 's {
        let words = self.index.unit_word[unit]
            .iter()
            .filter(|&&f| self.stats.observed(f))
            .map(|&f| word_support_mass(self.stats.p(f), params.d_f).expect("smoothed P in (0,1)"));
        let relations = self.index.unit_relations[unit]
            .iter()
            .map(|&r| &self.index.relations[r])
            .filter(move |rel| self.labels[rel.other(unit)].is_some())
            .map(|rel| {
                relation_support_mass(self.stats.r(rel.kind), params.d_fp)
                    .expect("smoothed R in (0,1)")
            });
        words.chain(relations)
    }

    /// Support masses of the unit's observed features, word features first,
    /// each in id order.
    pub fn support_masses(&self, unit: usize, params: &UncertaintyParams) -> Vec<Mass> {
        self.support_iter(unit, params).collect()
    }

    /// Combined belief in "label this unit"; 0 without observed features.
    pub fn evidential_support(&self, unit: usize, params: &UncertaintyParams) -> Support {
        let mut acc: Option<Mass> = None;
        let mut observed = 0;
        for m in self.support_iter(unit, params) {
            observed += 1;
            acc = match acc {
                None => Some(m),
                Some(a) => match a.combine(&m) {
                    Ok(c) => Some(c),
                    Err(_) => {
                        return Support {
                            score: 0.0,
                            observed,
                            total_conflict: true,
                        }
                    }
                },
            };
        }
        Support {
            score: acc.map_or(0.0, |m| m.a),
            observed,
            total_conflict: false,
        }
    }

    /// Per-feature certainty masses, word features first.
    pub fn certainty_masses(
        &self,
        unit: usize,
        relation_weights: [f64; 2],
        params: &UncertaintyParams,
    ) -> Vec<Mass> {
        let mut masses = Vec::new();
        for &f in &self.index.unit_word[unit] {
            if self.stats.observed(f) {
                masses.push(certainty_mass(self.stats.p(f), params.d_f_star).expect("P in [0,1]"));
            }
        }
        for &r in &self.index.unit_relations[unit] {
            let rel = &self.index.relations[r];
            if let Some(other) = self.labels[rel.other(unit)] {
                let p = relation_positive_probability(relation_weights[rel.kind.index()], other);
                masses.push(certainty_mass(p, params.d_fp_star).expect("P in [0,1]"));
            }
        }
        masses
    }
}

/// Ranking key for the approximate entropy step: less conflict first, then
/// lower pignistic entropy, then lower unit id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankKey {
    pub conflict: f64,
    pub pignistic_entropy: f64,
    pub unit_id: usize,
}

impl RankKey {
    pub fn rank_order(&self, other: &RankKey) -> Ordering {
        self.conflict
            .total_cmp(&other.conflict)
            .then(self.pignistic_entropy.total_cmp(&other.pignistic_entropy))
            .then(self.unit_id.cmp(&other.unit_id))
    }
}

/// Rank key from a variable's certainty masses. Total conflict ranks last.
pub fn conflict_rank_key(unit_id: usize, masses: &[Mass]) -> RankKey {
    match combine_all(masses) {
        Ok(Some(m)) => RankKey {
            conflict: m.conflict,
            pignistic_entropy: entropy(m.pignistic().clamp(0.0, 1.0))
                .unwrap_or(std::f64::consts::LN_2),
            unit_id,
        },
        Ok(None) => RankKey {
            conflict: 0.0,
            pignistic_entropy: std::f64::consts::LN_2,
            unit_id,
        },
        Err(_) => RankKey {
            conflict: 1.0,
            pignistic_entropy: std::f64::consts::LN_2,
            unit_id,
        },
    }
}

/// Reference combination that enumerates every pair of focal elements and
/// intersects them as sets. Kept independent of [`Mass::combine`].
pub fn combine_by_enumeration(m1: &Mass, m2: &Mass) -> Option<(Mass, f64)> {
    // focal elements as bitsets over {a = 0b01, b = 0b10}
    let focal = |m: &Mass| [(0b01u8, m.a), (0b10u8, m.b), (0b11u8, m.both)];
    let mut out = [0.0f64; 4];
    for (s1, v1) in focal(m1) {
        for (s2, v2) in focal(m2) {
            out[(s1 & s2) as usize] += v1 * v2;
        }
    }
    let k = out[0];
    if k >= 1.0 {
        return None;
    }
    let norm = 1.0 - k;
    Some((
        Mass {
            frame: m1.frame,
            a: out[1] / norm,
            b: out[2] / norm,
            both: out[3] / norm,
            conflict: k,
        },
        k,
    ))
}
