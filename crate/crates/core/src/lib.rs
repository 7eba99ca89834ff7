//! Decentralized experience/reputation trust engine.
//!
//! * [`experience`]: per-relationship experience dynamics (increase,
//!   decrease, decay).
//! * [`graph`]: the directed experience graph and its positive/negative split.
//! * [`solver`]: positive and negative reputation by damped power iteration.
//! * [`trust`]: trust aggregation and counterpart ranking.
//! * [`ledger`]: append-only feedback log with deterministic replay.
//! * [`simulator`]: seeded ecosystem workloads, attack scenarios and
//!   convergence benchmarks.
//! * [`config`]: the engine configuration file.

pub mod config;
pub mod experience;
pub mod format;
pub mod graph;
pub mod ledger;
pub mod simulator;
pub mod solver;
pub mod sparse;
pub mod trust;

pub use experience::{
    apply_decay_epochs, classify_feedback, update_experience, ExperienceParams, ExperienceState,
    FeedbackClass, FeedbackScore,
};
pub use graph::{build_transition_matrices, SplitMatrices, TransitionMatrices, TrustGraph, UserId};
pub use ledger::{replay, replay_until, FeedbackEvent, Ledger, Replayer};
pub use solver::{rank, residual, solve, ReputationParams, ReputationVector};
pub use trust::{
    rank_counterparts, trust, ReputationScores, TrustBasis, TrustQuery, TrustScore, TrustWeights,
};
