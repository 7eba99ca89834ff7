//! Directed experience graph and its positive/negative split.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::ExperienceState;
use crate::sparse::CsrMatrix;

/// Default threshold separating positive from negative experience.
pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-edge on user {0:?}")]
    SelfEdge(String),
    #[error("experience value {value} on edge {from:?} -> {to:?} outside [0, 1]")]
    ValueOutOfRange {
        from: String,
        to: String,
        value: f64,
    },
    #[error("split threshold {0} outside (0, 1)")]
    InvalidTheta(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opaque user identity, typically an address-like string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for UserId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

/// Directed graph of experience relationships.
///
/// Users are interned to dense indices in order of first appearance; that
/// order is the tie-break used by every ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustGraph {
    names: Vec<UserId>,
    index: HashMap<UserId, usize>,
    edges: BTreeMap<(usize, usize), ExperienceState>,
    theta: f64,
}

impl Default for TrustGraph {
    fn default() -> Self {
        Self {
            names: Vec::new(),
            index: HashMap::new(),
            edges: BTreeMap::new(),
            theta: DEFAULT_THETA,
        }
    }
}

impl TrustGraph {
    pub fn new(theta: f64) -> Result<Self, GraphError> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(GraphError::InvalidTheta(theta));
        }
        Ok(Self {
            theta,
            ..Default::default()
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Number of known users.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Returns the index of `id`, registering it if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.names.len();
        self.names.push(UserId(id.to_owned()));
        self.index.insert(UserId(id.to_owned()), i);
        i
    }

    pub fn lookup(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn name(&self, index: usize) -> &UserId {
        &self.names[index]
    }

    pub fn users(&self) -> &[UserId] {
        &self.names
    }

    pub fn upsert_edge(
        &mut self,
        from: &str,
        to: &str,
        state: ExperienceState,
    ) -> Result<(), GraphError> {
        if from == to {
            return Err(GraphError::SelfEdge(from.to_owned()));
        }
        check_range(from, to, &state)?;
        let f = self.intern(from);
        let t = self.intern(to);
        self.edges.insert((f, t), state);
        Ok(())
    }

    /// Index-based variant of [`TrustGraph::upsert_edge`].
    pub fn upsert_edge_at(
        &mut self,
        from: usize,
        to: usize,
        state: ExperienceState,
    ) -> Result<(), GraphError> {
        assert!(from < self.len() && to < self.len(), "unknown user index");
        if from == to {
            return Err(GraphError::SelfEdge(self.names[from].0.clone()));
        }
        check_range(self.names[from].as_str(), self.names[to].as_str(), &state)?;
        self.edges.insert((from, to), state);
        Ok(())
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&ExperienceState> {
        self.edges.get(&(from, to))
    }

    /// Experience value of `from` toward `to`; zero when no edge exists.
    pub fn exp(&self, from: usize, to: usize) -> f64 {
        self.edge(from, to).map_or(0.0, |s| s.current)
    }

    /// Edges ordered by `(from, to)` index.
    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), &ExperienceState)> {
        self.edges.iter().map(|(&k, v)| (k, v))
    }

    pub(crate) fn edges_mut(
        &mut self,
    ) -> impl Iterator<Item = ((usize, usize), &mut ExperienceState)> {
        self.edges.iter_mut().map(|(&k, v)| (k, v))
    }

    /// Separates edges into positive weights and complemented negative weights.
    pub fn split(&self) -> SplitMatrices {
        let n = self.len();
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&(i, j), state) in &self.edges {
            let e = state.current;
            if e >= self.theta {
                pos.push((i, j, e));
            } else if e > 0.0 {
                neg.push((i, j, 1.0 - e));
            }
        }
        let pe = CsrMatrix::from_triplets(n, pos);
        let ne = CsrMatrix::from_triplets(n, neg);
        let c_pos = (0..n).map(|i| pe.row_sum(i)).collect();
        let c_neg = (0..n).map(|i| ne.row_sum(i)).collect();
        SplitMatrices {
            pe,
            ne,
            c_pos,
            c_neg,
        }
    }

    /// Writes one JSON record per edge.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), GraphError> {
        for (&(i, j), s) in &self.edges {
            let record = SnapshotRecord {
                from: self.names[i].0.clone(),
                to: self.names[j].0.clone(),
                exp: s.current,
                prev: s.previous,
                block: s.last_update_block,
            };
            serde_json::to_writer(&mut out, &record).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn snapshot_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("snapshot is utf-8")
    }

    pub fn read_snapshot<R: BufRead>(reader: R, theta: f64) -> Result<Self, GraphError> {
        let mut graph = Self::new(theta)?;
        for (k, line) in reader.lines().enumerate() {
            let line_no = k + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SnapshotRecord =
                serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let state = ExperienceState {
                current: record.exp,
                previous: record.prev,
                last_update_block: record.block,
            };
            graph
                .upsert_edge(&record.from, &record.to, state)
                .map_err(|e| GraphError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
        }
        Ok(graph)
    }
}

fn check_range(from: &str, to: &str, state: &ExperienceState) -> Result<(), GraphError> {
    for value in [state.current, state.previous] {
        if !(0.0..=1.0).contains(&value) {
            return Err(GraphError::ValueOutOfRange {
                from: from.to_owned(),
                to: to.to_owned(),
                value,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotRecord {
    from: String,
    to: String,
    exp: f64,
    prev: f64,
    block: u64,
}

/// Positive weights `pe` and complemented negative weights `ne = 1 - E`, with
/// their row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrices {
    pub pe: CsrMatrix,
    pub ne: CsrMatrix,
    pub c_pos: Vec<f64>,
    pub c_neg: Vec<f64>,
}

impl SplitMatrices {
    pub fn dim(&self) -> usize {
        self.pe.dim()
    }
}

/// Transposed, out-sum normalized weight matrices consumed by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrices {
    pub a_pos: CsrMatrix,
    pub a_neg: CsrMatrix,
}

impl TransitionMatrices {
    pub fn dim(&self) -> usize {
        self.a_pos.dim()
    }
}

/// `a_pos(i, j) = pe(j, i) / c_pos(j)`, and likewise for the negative side.
///
/// Users without out-edges on a side leave an all-zero column there.
pub fn build_transition_matrices(split: &SplitMatrices) -> TransitionMatrices {
    let n = split.dim();
    let normalize = |m: &CsrMatrix, sums: &[f64]| {
        let triplets = m
            .iter()
            .filter(|&(_, _, v)| v > 0.0)
            .map(|(j, i, v)| (i, j, v / sums[j]))
            .collect();
        CsrMatrix::from_triplets(n, triplets)
    };
    TransitionMatrices {
        a_pos: normalize(&split.pe, &split.c_pos),
        a_neg: normalize(&split.ne, &split.c_neg),
    }
}
