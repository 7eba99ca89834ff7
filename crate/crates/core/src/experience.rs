//! Pairwise experience dynamics.
//!
//! An experience value `Exp(A, B)` grows with cooperative transactions,
//! shrinks with uncooperative ones and decays while the relationship is idle
//! or only receives neutral feedback. Every update here is a pure function of
//! its inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperienceError {
    #[error("invalid experience parameters: {0}")]
    InvalidParams(String),
    #[error("feedback score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
}

/// Tunable constants of the experience model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceParams {
    /// Value assigned to a relationship without prior transactions.
    pub exp0: f64,
    pub min_exp: f64,
    pub max_exp: f64,
    /// Scores at or above this are cooperative.
    pub theta_co: f64,
    /// Positive scores at or below this are uncooperative.
    pub theta_unco: f64,
    /// Maximum increase step.
    pub alpha: f64,
    /// Decrease rate; larger than one so trust is lost faster than gained.
    pub beta: f64,
    /// Minimum decay value.
    pub delta: f64,
    /// Decay rate.
    pub gamma: f64,
}

impl Default for ExperienceParams {
    fn default() -> Self {
        Self {
            exp0: 0.5,
            min_exp: 0.0,
            max_exp: 1.0,
            theta_co: 0.7,
            theta_unco: 0.5,
            alpha: 0.05,
            beta: 1.6,
            delta: 0.005,
            gamma: 0.005,
        }
    }
}

impl ExperienceParams {
    pub fn validate(&self) -> Result<(), ExperienceError> {
        let fields = [
            self.exp0,
            self.min_exp,
            self.max_exp,
            self.theta_co,
            self.theta_unco,
            self.alpha,
            self.beta,
            self.delta,
            self.gamma,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(ExperienceError::InvalidParams(
                "all parameters must be finite".into(),
            ));
        }
        if !(0.0 <= self.min_exp && self.min_exp < self.exp0 && self.exp0 < self.max_exp) {
            return Err(ExperienceError::InvalidParams(format!(
                "need 0 <= min_exp < exp0 < max_exp, got min_exp={} exp0={} max_exp={}",
                self.min_exp, self.exp0, self.max_exp
            )));
        }
        if !(0.0 < self.theta_unco && self.theta_unco < self.theta_co && self.theta_co < 1.0) {
            return Err(ExperienceError::InvalidParams(format!(
                "need 0 < theta_unco < theta_co < 1, got theta_unco={} theta_co={}",
                self.theta_unco, self.theta_co
            )));
        }
        if !(0.0 < self.alpha && self.alpha < self.max_exp) {
            return Err(ExperienceError::InvalidParams(format!(
                "need 0 < alpha < max_exp, got alpha={}",
                self.alpha
            )));
        }
        if self.beta <= 1.0 {
            return Err(ExperienceError::InvalidParams(format!(
                "need beta > 1, got {}",
                self.beta
            )));
        }
        if self.delta <= 0.0 || self.gamma <= 0.0 {
            return Err(ExperienceError::InvalidParams(format!(
                "need delta > 0 and gamma > 0, got delta={} gamma={}",
                self.delta, self.gamma
            )));
        }
        Ok(())
    }
}

/// Experience held on one directed relationship, with the two-step memory the
/// decay model reads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperienceState {
    /// Most recent value.
    pub current: f64,
    /// Value before `current`.
    pub previous: f64,
    /// Block height the decay schedule counts from.
    pub last_update_block: u64,
}

impl ExperienceState {
    /// State of a relationship that has never seen a transaction.
    pub fn bootstrap(params: &ExperienceParams, block: u64) -> Self {
        Self {
            current: params.exp0,
            previous: params.exp0,
            last_update_block: block,
        }
    }

    fn advance(self, next: f64) -> Self {
        Self {
            current: next,
            previous: self.current,
            last_update_block: self.last_update_block,
        }
    }
}

/// Feedback score in `[0, 1]`; zero means no transaction took place.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FeedbackScore(f64);

impl FeedbackScore {
    pub const ABSENT: FeedbackScore = FeedbackScore(0.0);

    pub fn new(value: f64) -> Result<Self, ExperienceError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(ExperienceError::ScoreOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FeedbackScore {
    type Error = ExperienceError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<FeedbackScore> for f64 {
    fn from(score: FeedbackScore) -> f64 {
        score.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeedbackClass {
    Cooperative,
    Uncooperative,
    NeutralOrAbsent,
}

pub fn classify_feedback(score: FeedbackScore, params: &ExperienceParams) -> FeedbackClass {
    let s = score.value();
    if s >= params.theta_co {
        FeedbackClass::Cooperative
    } else if s > 0.0 && s <= params.theta_unco {
        FeedbackClass::Uncooperative
    } else {
        FeedbackClass::NeutralOrAbsent
    }
}

/// Applies one feedback score to `state`.
///
/// The returned state carries the old `current` as its `previous`.
pub fn update_experience(
    state: ExperienceState,
    score: FeedbackScore,
    params: &ExperienceParams,
) -> Result<ExperienceState, ExperienceError> {
    params.validate()?;
    let score = FeedbackScore::new(score.value())?;
    Ok(step(state, score, params))
}

/// Applies `n_epochs` consecutive decay steps.
pub fn apply_decay_epochs(
    state: ExperienceState,
    n_epochs: u64,
    params: &ExperienceParams,
) -> Result<ExperienceState, ExperienceError> {
    params.validate()?;
    Ok(decay_epochs_unchecked(state, n_epochs, params))
}

pub(crate) fn decay_epochs_unchecked(
    mut state: ExperienceState,
    n_epochs: u64,
    params: &ExperienceParams,
) -> ExperienceState {
    for _ in 0..n_epochs {
        // Fixed point: both memory slots sit on the floor.
        if state.current == params.min_exp && state.previous == params.min_exp {
            break;
        }
        state = state.advance(decayed(&state, params));
    }
    state
}

/// Update without re-validating `params`; callers validated them once.
pub(crate) fn step(
    state: ExperienceState,
    score: FeedbackScore,
    params: &ExperienceParams,
) -> ExperienceState {
    let s = score.value();
    let current = state.current;
    let next = match classify_feedback(score, params) {
        FeedbackClass::Cooperative => increased(current, s, params),
        FeedbackClass::Uncooperative => {
            let step = params.alpha * (1.0 - current / params.max_exp);
            (current - params.beta * (1.0 - s) * step).max(params.min_exp)
        }
        FeedbackClass::NeutralOrAbsent => decayed(&state, params),
    };
    state.advance(next)
}

fn increased(current: f64, score: f64, params: &ExperienceParams) -> f64 {
    // current + s*alpha*(1 - current/max) written on the distance to max_exp,
    // rounded so the result never ends up farther from max_exp than that
    // distance. Near max_exp the plain form can get stuck one ulp below it.
    let max = params.max_exp;
    let gap = (max - current) * (1.0 - score * params.alpha / max);
    let mut next = max - gap;
    if max - next > gap {
        next = next.next_up();
    }
    next.clamp(current, max)
}

fn decayed(state: &ExperienceState, params: &ExperienceParams) -> f64 {
    let amount = params.delta * (1.0 + params.gamma - state.previous / params.max_exp);
    (state.current - amount).max(params.min_exp)
}
