//! Scenario specification.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::experience::ExperienceParams;
use crate::graph::DEFAULT_THETA;
use crate::ledger::DEFAULT_DECAY_EPOCH;
use crate::solver::ReputationParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorClass {
    /// Provides good service; rates truthfully as a client.
    Honest,
    /// Provides poor service.
    LowQuality,
    /// Promotes a target with fabricated positive feedback.
    Sybil,
    /// Slanders a victim with fabricated negative feedback.
    BadMouther,
    /// Provides poor service and re-enters under a fresh identity once its
    /// reputation falls below the bootstrap value.
    Whitewasher,
}

/// Truncated normal on `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreDist {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Providers sampled with probability proportional to trust plus a floor.
    TrustWeighted,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    /// Expected honest transactions per block; the fractional part is a
    /// Bernoulli draw.
    pub tx_per_block: f64,
    /// Share of the population acting as providers; the rest are clients.
    pub provider_fraction: f64,
    /// Probability that a provider rates its client back.
    pub reciprocal_rate: f64,
    /// Counterpart selection used by honest clients.
    pub selection: Selection,
    /// Weight added to every provider's trust when sampling.
    pub selection_floor: f64,
    /// Feedback earned by honest providers (and by clients when rated back).
    pub honest_score: ScoreDist,
    /// Feedback earned by low-quality providers and whitewashers.
    pub low_quality_score: ScoreDist,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            tx_per_block: 2.0,
            provider_fraction: 0.1,
            reciprocal_rate: 0.0,
            selection: Selection::TrustWeighted,
            selection_floor: 0.05,
            honest_score: ScoreDist {
                mean: 0.85,
                sd: 0.1,
            },
            low_quality_score: ScoreDist { mean: 0.3, sd: 0.1 },
        }
    }
}

/// Class fractions among providers; must sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassMix {
    pub honest: f64,
    pub low_quality: f64,
    pub whitewasher: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        Self {
            honest: 0.8,
            low_quality: 0.2,
            whitewasher: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Positive feedback toward the target.
    SelfPromote,
    /// Negative feedback toward the target.
    BadMouth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerIdentities {
    /// Newly created identities with no history.
    Fresh,
    /// The highest-reputation users at onset, excluding the target.
    Established,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackTarget {
    User(String),
    /// 1-based position in the reputation ranking at onset.
    Rank(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub target: AttackTarget,
    pub attackers: usize,
    pub identities: AttackerIdentities,
    pub onset_block: u64,
    /// Feedback events per attacker, one per block from onset.
    #[serde(default = "one")]
    pub ratings_per_attacker: u32,
    pub score: f64,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackedEdge {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub experience: ExperienceParams,
    pub reputation: ReputationParams,
    pub theta: f64,
    pub decay_epoch: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            experience: ExperienceParams::default(),
            reputation: ReputationParams::default(),
            theta: DEFAULT_THETA,
            decay_epoch: DEFAULT_DECAY_EPOCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub n_users: usize,
    pub n_blocks: u64,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub classes: ClassMix,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub tracked_users: Vec<String>,
    #[serde(default)]
    pub tracked_edges: Vec<TrackedEdge>,
    #[serde(default)]
    pub params: ScenarioParams,
}

fn default_name() -> String {
    "scenario".into()
}

/// Name of population member `index`.
pub fn user_name(index: usize) -> String {
    format!("u{index:05}")
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.n_users < 2 {
            return bad(format!("n_users must be at least 2, got {}", self.n_users));
        }
        if self.n_blocks == 0 {
            return bad("n_blocks must be positive".into());
        }
        let w = &self.workload;
        if !(w.tx_per_block >= 0.0 && w.tx_per_block.is_finite()) {
            return bad(format!("tx_per_block must be >= 0, got {}", w.tx_per_block));
        }
        if !(w.provider_fraction > 0.0 && w.provider_fraction < 1.0) {
            return bad(format!(
                "provider_fraction must lie in (0, 1), got {}",
                w.provider_fraction
            ));
        }
        if !(0.0..=1.0).contains(&w.reciprocal_rate) {
            return bad(format!(
                "reciprocal_rate must lie in [0, 1], got {}",
                w.reciprocal_rate
            ));
        }
        if !(w.selection_floor > 0.0 && w.selection_floor.is_finite()) {
            return bad(format!(
                "selection_floor must be positive, got {}",
                w.selection_floor
            ));
        }
        for (name, d) in [
            ("honest_score", w.honest_score),
            ("low_quality_score", w.low_quality_score),
        ] {
            if !(0.0..=1.0).contains(&d.mean) || !(d.sd > 0.0 && d.sd.is_finite()) {
                return bad(format!("{name} needs mean in [0, 1] and sd > 0"));
            }
        }
        let c = &self.classes;
        let fractions = [c.honest, c.low_quality, c.whitewasher];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f))
            || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "class fractions must lie in [0, 1] and sum to 1, got {fractions:?}"
            ));
        }
        let p = &self.params;
        p.experience
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        p.reputation
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        if !(p.theta > 0.0 && p.theta < 1.0) {
            return bad(format!("theta must lie in (0, 1), got {}", p.theta));
        }
        if p.decay_epoch == 0 {
            return bad("decay_epoch must be positive".into());
        }
        if let Some(a) = &self.attack {
            if a.attackers == 0 || a.ratings_per_attacker == 0 {
                return bad("attack needs at least one attacker and one rating".into());
            }
            if !(a.score > 0.0 && a.score <= 1.0) {
                return bad(format!("attack score must lie in (0, 1], got {}", a.score));
            }
            if a.onset_block <= p.decay_epoch {
                return bad("attack onset must come after the first reputation epoch".into());
            }
            let last = a.onset_block + u64::from(a.ratings_per_attacker) - 1;
            let measured = last.div_ceil(p.decay_epoch) * p.decay_epoch;
            if measured > self.n_blocks {
                return bad(format!(
                    "horizon {} ends before the attack is measured at block {measured}",
                    self.n_blocks
                ));
            }
            if let AttackTarget::Rank(0) = a.target {
                return bad("attack target rank is 1-based".into());
            }
            if a.identities == AttackerIdentities::Established && a.attackers >= self.n_users {
                return bad("not enough established users for the attack".into());
            }
        }
        Ok(())
    }
}
