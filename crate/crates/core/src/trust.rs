//! Pairwise trust from experience and reputation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TrustGraph;
use crate::solver::ReputationVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("trust weights must be non-negative and sum to 1, got ({0}, {1})")]
    InvalidWeights(f64, f64),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("reputation score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustWeights {
    pub w1: f64,
    pub w2: f64,
}

impl TrustWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self, TrustError> {
        if w1 >= 0.0 && w2 >= 0.0 && ((w1 + w2) - 1.0).abs() <= 1e-12 {
            Ok(Self { w1, w2 })
        } else {
            Err(TrustError::InvalidWeights(w1, w2))
        }
    }
}

impl Default for TrustWeights {
    fn default() -> Self {
        Self { w1: 0.5, w2: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrustBasis {
    ExperienceAndReputation,
    ReputationOnly,
}

impl TrustBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            TrustBasis::ExperienceAndReputation => "experience_and_reputation",
            TrustBasis::ReputationOnly => "reputation_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustScore {
    pub value: f64,
    pub basis: TrustBasis,
}

#[derive(Debug, Clone, Copy)]
pub struct TrustQuery<'a> {
    pub trustor: &'a str,
    pub trustee: &'a str,
    pub weights: TrustWeights,
}

/// How raw reputation was mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Scores used as given.
    Identity,
    /// `(r - min) / (max - min)` over the population.
    MinMax { min: f64, max: f64 },
}

/// Reputation on the same `[0, 1]` scale as experience.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationScores {
    raw: Vec<f64>,
    normalization: Normalization,
}

impl ReputationScores {
    /// Min-max normalizes overall reputation over the population. When every
    /// user has the same reputation the raw values are kept.
    pub fn min_max(vec: &ReputationVector) -> Self {
        let min = vec.rep.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vec.rep.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let normalization = if vec.rep.is_empty() || max <= min {
            Normalization::Identity
        } else {
            Normalization::MinMax { min, max }
        };
        Self {
            raw: vec.rep.clone(),
            normalization,
        }
    }

    /// Scores already on `[0, 1]`.
    pub fn identity(values: Vec<f64>) -> Result<Self, TrustError> {
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(TrustError::ScoreOutOfRange(bad));
        }
        Ok(Self {
            raw: values,
            normalization: Normalization::Identity,
        })
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Normalized reputation of user `index`. Users the solver never saw get
    /// the bootstrap value `1/population` before normalization.
    pub fn score(&self, index: usize, population: usize) -> f64 {
        let raw = self
            .raw
            .get(index)
            .copied()
            .unwrap_or(1.0 / population.max(1) as f64);
        match self.normalization {
            Normalization::Identity => raw.clamp(0.0, 1.0),
            Normalization::MinMax { min, max } => ((raw - min) / (max - min)).clamp(0.0, 1.0),
        }
    }
}

pub fn trust(
    graph: &TrustGraph,
    scores: &ReputationScores,
    query: &TrustQuery<'_>,
) -> Result<TrustScore, TrustError> {
    let a = lookup(graph, query.trustor)?;
    let b = lookup(graph, query.trustee)?;
    Ok(trust_at(graph, scores, a, b, query.weights))
}

pub(crate) fn trust_at(
    graph: &TrustGraph,
    scores: &ReputationScores,
    trustor: usize,
    trustee: usize,
    weights: TrustWeights,
) -> TrustScore {
    let rep = scores.score(trustee, graph.len());
    match graph.edge(trustor, trustee) {
        Some(state) => TrustScore {
            value: weights.w1 * rep + weights.w2 * state.current,
            basis: TrustBasis::ExperienceAndReputation,
        },
        None => TrustScore {
            value: rep,
            basis: TrustBasis::ReputationOnly,
        },
    }
}

/// Candidates ordered by descending trust from `trustor`'s perspective; ties
/// keep interning order.
pub fn rank_counterparts(
    graph: &TrustGraph,
    scores: &ReputationScores,
    trustor: &str,
    candidates: &[&str],
    weights: TrustWeights,
) -> Result<Vec<(usize, TrustScore)>, TrustError> {
    let a = lookup(graph, trustor)?;
    let mut ranked = candidates
        .iter()
        .map(|c| lookup(graph, c).map(|b| (b, trust_at(graph, scores, a, b, weights))))
        .collect::<Result<Vec<_>, _>>()?;
    ranked.sort_by(|x, y| y.1.value.total_cmp(&x.1.value).then(x.0.cmp(&y.0)));
    Ok(ranked)
}

fn lookup(graph: &TrustGraph, id: &str) -> Result<usize, TrustError> {
    graph
        .lookup(id)
        .ok_or_else(|| TrustError::UnknownUser(id.to_owned()))
}
