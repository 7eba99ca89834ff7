//! Seeded ecosystem simulation.
//!
//! All randomness comes from a `ChaCha8Rng` seeded with
//! `seed_from_u64(scenario.seed)`, so a scenario and its seed fully determine
//! the emitted ledger and metrics on every platform.

mod bench;
mod run;
mod scenario;

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::{self, ExperienceParams, ExperienceState, FeedbackScore};
use crate::format::sig12;
use crate::ledger::LedgerError;
use crate::solver::SolverError;

pub use bench::{convergence_bench, random_graph, write_convergence_csv, BenchRow, GeneratorSpec};
pub use run::run;
pub use scenario::{
    user_name, AttackKind, AttackSpec, AttackTarget, AttackerIdentities, BehaviorClass, ClassMix,
    Scenario, ScenarioParams, ScoreDist, Selection, TrackedEdge, Workload,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Experience(#[from] experience::ExperienceError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reputation of one user at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSnapshot {
    pub epoch: u64,
    pub block: u64,
    pub user: String,
    pub rep_pos: f64,
    pub rep_neg: f64,
    pub rep: f64,
    /// 1-based position in the global ranking.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    pub block: u64,
    pub n_users: usize,
    pub n_edges: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTracePoint {
    pub epoch: u64,
    pub from: String,
    pub to: String,
    pub exp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub identities: AttackerIdentities,
    pub target: String,
    pub attackers: Vec<String>,
    pub onset_block: u64,
    /// Target at the last epoch before onset.
    pub before: UserSnapshot,
    /// Target at the first epoch after the last attack rating.
    pub after: Option<UserSnapshot>,
}

impl AttackOutcome {
    pub fn rep_pos_gain(&self) -> Option<f64> {
        self.after.as_ref().map(|a| a.rep_pos - self.before.rep_pos)
    }

    pub fn rep_neg_gain(&self) -> Option<f64> {
        self.after.as_ref().map(|a| a.rep_neg - self.before.rep_neg)
    }

    /// Positions moved in the ranking; positive means the target dropped.
    pub fn rank_shift(&self) -> Option<i64> {
        self.after
            .as_ref()
            .map(|a| a.rank as i64 - self.before.rank as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitewashRecord {
    pub abandoned: String,
    pub fresh: String,
    pub epoch: u64,
    pub abandoned_rep: f64,
    /// Epochs until the fresh identity's reputation exceeded `abandoned_rep`.
    pub epochs_to_recover: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub epochs: Vec<EpochSummary>,
    pub snapshots: Vec<UserSnapshot>,
    pub edge_traces: Vec<EdgeTracePoint>,
    pub attack: Option<AttackOutcome>,
    pub whitewash: Vec<WhitewashRecord>,
}

impl MetricsReport {
    /// `epoch,user,rep_pos,rep_neg,rep,rank`.
    pub fn write_metrics_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,user,rep_pos,rep_neg,rep,rank")?;
        for s in &self.snapshots {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.epoch,
                s.user,
                sig12(s.rep_pos),
                sig12(s.rep_neg),
                sig12(s.rep),
                s.rank
            )?;
        }
        Ok(())
    }

    /// `epoch,block,n_users,n_edges,iterations,residual,converged`.
    pub fn write_epochs_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "epoch,block,n_users,n_edges,iterations,residual,converged"
        )?;
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.epoch,
                e.block,
                e.n_users,
                e.n_edges,
                e.iterations,
                sig12(e.residual),
                e.converged
            )?;
        }
        Ok(())
    }

    /// `epoch,from,to,exp`.
    pub fn write_edge_traces_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,from,to,exp")?;
        for p in &self.edge_traces {
            writeln!(out, "{},{},{},{}", p.epoch, p.from, p.to, sig12(p.exp))?;
        }
        Ok(())
    }
}

/// Experience values along `schedule`, starting from the bootstrap value.
/// Entry 0 is `exp0`; entry `k` follows the `k`-th score.
pub fn exp_curve(
    params: &ExperienceParams,
    schedule: &[FeedbackScore],
) -> Result<Vec<f64>, SimError> {
    params.validate()?;
    if schedule.is_empty() {
        return Err(SimError::InvalidScenario("empty feedback schedule".into()));
    }
    let mut state = ExperienceState::bootstrap(params, 0);
    let mut trace = Vec::with_capacity(schedule.len() + 1);
    trace.push(state.current);
    for &score in schedule {
        state = experience::step(state, score, params);
        trace.push(state.current);
    }
    Ok(trace)
}
