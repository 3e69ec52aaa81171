//! AAG and OPG.
//!
//! For one trial with announced accuracy `p`, decision `D` and suggestion
//! `V`, the expected gain is
//!
//! ```text
//! p * PG[D][V] + (1 - p) * PG[D][!V]
//! ```
//!
//! where the second term is the counterfactual payoff: the payoff of the
//! same decision read in the opposite suggestion column, i.e. the world in
//! which the ADS was wrong. AAG sums this over the decisions actually made;
//! OPG sums the per-trial maximum over both decisions for the given
//! suggestion.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::payoff::{Choice, DecisionOption, PayoffMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("accuracy {0} is outside [0, 1]")]
    Range(f64),
    #[error("option belongs to {found} but the matrix is for {expected}")]
    TaskMismatch {
        expected: crate::payoff::Task,
        found: crate::payoff::Task,
    },
    #[error("session has no trials")]
    EmptySession,
}

/// Announced ADS accuracy, a probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Accuracy(f64);

impl Accuracy {
    pub const CERTAIN: Accuracy = Accuracy(1.0);

    pub fn new(p: f64) -> Result<Self, GainError> {
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(GainError::Range(p))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Accuracy {
    type Error = GainError;
    fn try_from(p: f64) -> Result<Self, Self::Error> {
        Accuracy::new(p)
    }
}

impl From<Accuracy> for f64 {
    fn from(a: Accuracy) -> f64 {
        a.0
    }
}

// Construction rejects NaN, so bitwise identity is a valid equivalence.
impl PartialEq for Accuracy {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for Accuracy {}
impl Hash for Accuracy {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}
impl PartialOrd for Accuracy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Accuracy {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-trial scoring of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBreakdown {
    pub trial_id: u32,
    pub decision: DecisionOption,
    pub suggestion: DecisionOption,
    pub accuracy_p: f64,
    pub expected_gain: f64,
    pub optimal_decision: DecisionOption,
    pub optimal_gain: f64,
}

impl GainBreakdown {
    pub fn new(
        trial_id: u32,
        matrix: &PayoffMatrix,
        decision: Choice,
        suggestion: Choice,
        p: Accuracy,
    ) -> Self {
        let (best, optimal_gain) = best_response(matrix, suggestion, p);
        Self {
            trial_id,
            decision: matrix.option(decision),
            suggestion: matrix.option(suggestion),
            accuracy_p: p.value(),
            expected_gain: gain(matrix, decision, suggestion, p),
            optimal_decision: matrix.option(best),
            optimal_gain,
        }
    }
}

fn check_task(matrix: &PayoffMatrix, option: &DecisionOption) -> Result<(), GainError> {
    if option.task == matrix.task() {
        Ok(())
    } else {
        Err(GainError::TaskMismatch {
            expected: matrix.task(),
            found: option.task,
        })
    }
}

/// Payoff of `decision` when the ADS suggestion was wrong.
pub fn counterfactual(
    matrix: &PayoffMatrix,
    decision: DecisionOption,
    suggestion: DecisionOption,
) -> Result<f64, GainError> {
    check_task(matrix, &decision)?;
    check_task(matrix, &suggestion)?;
    Ok(matrix.entry(decision.choice, suggestion.choice.other()))
}

/// Unchecked expected gain over bare choices.
#[inline]
pub fn gain(matrix: &PayoffMatrix, decision: Choice, suggestion: Choice, p: Accuracy) -> f64 {
    let p = p.value();
    p * matrix.entry(decision, suggestion) + (1.0 - p) * matrix.entry(decision, suggestion.other())
}

/// Best decision for a fixed suggestion. Ties follow the suggestion.
#[inline]
pub fn best_response(matrix: &PayoffMatrix, suggestion: Choice, p: Accuracy) -> (Choice, f64) {
    let follow = gain(matrix, suggestion, suggestion, p);
    let deviate = gain(matrix, suggestion.other(), suggestion, p);
    if deviate > follow {
        (suggestion.other(), deviate)
    } else {
        (suggestion, follow)
    }
}

pub fn expected_gain(
    matrix: &PayoffMatrix,
    decision: DecisionOption,
    suggestion: DecisionOption,
    p: Accuracy,
) -> Result<f64, GainError> {
    check_task(matrix, &decision)?;
    check_task(matrix, &suggestion)?;
    Ok(gain(matrix, decision.choice, suggestion.choice, p))
}

/// OPG term of one trial: the maximising decision and its expected gain.
pub fn opg_trial(
    matrix: &PayoffMatrix,
    suggestion: DecisionOption,
    p: Accuracy,
) -> Result<(DecisionOption, f64), GainError> {
    check_task(matrix, &suggestion)?;
    let (best, value) = best_response(matrix, suggestion.choice, p);
    Ok((matrix.option(best), value))
}

/// One scored trial as fed to [`session_aag`].
#[derive(Debug, Clone, Copy)]
pub struct TrialDecision<'a> {
    pub matrix: &'a PayoffMatrix,
    pub decision: DecisionOption,
    pub suggestion: DecisionOption,
    pub p: Accuracy,
}

/// One trial as fed to [`session_opg`].
#[derive(Debug, Clone, Copy)]
pub struct TrialSuggestion<'a> {
    pub matrix: &'a PayoffMatrix,
    pub suggestion: DecisionOption,
    pub p: Accuracy,
}

impl<'a> From<TrialDecision<'a>> for TrialSuggestion<'a> {
    fn from(t: TrialDecision<'a>) -> Self {
        Self {
            matrix: t.matrix,
            suggestion: t.suggestion,
            p: t.p,
        }
    }
}

pub fn session_aag(trials: &[TrialDecision<'_>]) -> Result<f64, GainError> {
    if trials.is_empty() {
        return Err(GainError::EmptySession);
    }
    trials.iter().try_fold(0.0, |acc, t| {
        Ok(acc + expected_gain(t.matrix, t.decision, t.suggestion, t.p)?)
    })
}

pub fn session_opg(trials: &[TrialSuggestion<'_>]) -> Result<f64, GainError> {
    if trials.is_empty() {
        return Err(GainError::EmptySession);
    }
    trials
        .iter()
        .try_fold(0.0, |acc, t| Ok(acc + opg_trial(t.matrix, t.suggestion, t.p)?.1))
}

/// Perceived advantage of following over not following the ADS,
/// `PG11 + PG00 - PG10 - PG01`.
pub fn following_gain(matrix: &PayoffMatrix) -> f64 {
    let pg = matrix.pg();
    pg[1][1] + pg[0][0] - pg[1][0] - pg[0][1]
}

/// Row-1 gain minus row-2 gain, `(PG00 + PG01) - (PG10 + PG11)`.
pub fn choice_gain(matrix: &PayoffMatrix) -> f64 {
    let pg = matrix.pg();
    (pg[0][0] + pg[0][1]) - (pg[1][0] + pg[1][1])
}

/// Accuracy at which the best decision flips for a fixed suggestion.
///
/// Returns `None` when both decisions are equally good at every accuracy or
/// when the crossing lies outside the open interval `(0, 1)`.
pub fn switch_point(matrix: &PayoffMatrix, suggestion: Choice) -> Option<f64> {
    let v = suggestion;
    let a = matrix.entry(Choice::First, v);
    let b = matrix.entry(Choice::First, v.other());
    let c = matrix.entry(Choice::Second, v);
    let d = matrix.entry(Choice::Second, v.other());
    // EG1 - EG2 = (b - d) + p * ((a - c) - (b - d))
    let slope = (a - c) - (b - d);
    if slope == 0.0 {
        return None;
    }
    let p = (d - b) / slope;
    (p > 0.0 && p < 1.0).then_some(p)
}
