//! Simulated driver decision rules.
//!
//! Every rule consumes exactly one uniform draw per decision, whether it
//! needs it or not. Streams therefore stay aligned across policy kinds and
//! parameter values, which is what makes a `TimePressured` sweep over the
//! rational weight monotone draw by draw.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gain_model::{best_response, gain};
use crate::payoff::{Choice, PayoffMatrix, Task};
use crate::scenario::{TimeBudget, TrialSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("trial is a {trial} task but the matrix is for {matrix}")]
    TaskMismatch { trial: Task, matrix: Task },
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("rational weight must lie in [0, 1], got {0}")]
    RationalWeight(f64),
}

/// Heuristic used when a time-pressured driver does not deliberate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    Follow,
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackMap {
    pub avoid_collision: Fallback,
    pub overtake: Fallback,
    pub route_selection: Fallback,
}

impl Default for FallbackMap {
    /// Under time pressure collisions are handled by following the ADS and
    /// the two lower-risk tasks by playing safe.
    fn default() -> Self {
        Self {
            avoid_collision: Fallback::Follow,
            overtake: Fallback::Conservative,
            route_selection: Fallback::Conservative,
        }
    }
}

impl FallbackMap {
    pub fn get(&self, task: Task) -> Fallback {
        match task {
            Task::AvoidCollision => self.avoid_collision,
            Task::Overtake => self.overtake,
            Task::RouteSelection => self.route_selection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Optimal,
    Follow,
    Conservative,
    AntiFollow,
    BoundedRational {
        temperature: f64,
    },
    TimePressured {
        rational_weight: f64,
        #[serde(default)]
        fallback: FallbackMap,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default)]
    pub seed: u64,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, seed: u64) -> Result<Self, PolicyError> {
        let spec = Self { kind, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn optimal(seed: u64) -> Self {
        Self { kind: PolicyKind::Optimal, seed }
    }

    pub fn time_pressured(rational_weight: f64, fallback: FallbackMap, seed: u64) -> Result<Self, PolicyError> {
        Self::new(PolicyKind::TimePressured { rational_weight, fallback }, seed)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        match self.kind {
            PolicyKind::BoundedRational { temperature } if !(temperature > 0.0) => {
                Err(PolicyError::Temperature(temperature))
            }
            PolicyKind::TimePressured { rational_weight, .. } if !(0.0..=1.0).contains(&rational_weight) => {
                Err(PolicyError::RationalWeight(rational_weight))
            }
            _ => Ok(()),
        }
    }

    pub fn rational_weight(&self) -> Option<f64> {
        match self.kind {
            PolicyKind::TimePressured { rational_weight, .. } => Some(rational_weight),
            _ => None,
        }
    }
}

/// Probability of picking the first option under a logit rule.
pub fn logit_first(g_first: f64, g_second: f64, temperature: f64) -> f64 {
    let z = (g_second - g_first) / temperature;
    if z > 700.0 {
        0.0
    } else {
        1.0 / (1.0 + z.exp())
    }
}

fn fallback_choice(fallback: Fallback, trial: &TrialSpec, matrix: &PayoffMatrix) -> Choice {
    match fallback {
        Fallback::Follow => trial.suggestion,
        Fallback::Conservative => matrix.conservative(),
    }
}

/// Picks a decision for `trial`.
pub fn choose(
    policy: &PolicySpec,
    trial: &TrialSpec,
    matrix: &PayoffMatrix,
    rng: &mut impl Rng,
) -> Result<Choice, PolicyError> {
    if matrix.task() != trial.task {
        return Err(PolicyError::TaskMismatch {
            trial: trial.task,
            matrix: matrix.task(),
        });
    }
    policy.validate()?;
    let u: f64 = rng.random();
    let v = trial.suggestion;
    let p = trial.accuracy_p;
    Ok(match policy.kind {
        PolicyKind::Optimal => best_response(matrix, v, p).0,
        PolicyKind::Follow => v,
        PolicyKind::Conservative => matrix.conservative(),
        PolicyKind::AntiFollow => v.other(),
        PolicyKind::BoundedRational { temperature } => {
            let g1 = gain(matrix, Choice::First, v, p);
            let g2 = gain(matrix, Choice::Second, v, p);
            if u < logit_first(g1, g2, temperature) {
                Choice::First
            } else {
                Choice::Second
            }
        }
        PolicyKind::TimePressured { rational_weight, fallback } => {
            if u < rational_weight {
                best_response(matrix, v, p).0
            } else {
                fallback_choice(fallback.get(trial.task), trial, matrix)
            }
        }
    })
}

/// Scored outcome of one trial. `decision` is absent for a timed-out live
/// trial; such records drop out of every rate and gain sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub trial_id: u32,
    pub task: Task,
    pub accuracy_p: f64,
    pub time_budget: TimeBudget,
    pub suggestion: Choice,
    pub decision: Option<Choice>,
    pub decision_time_s: Option<f64>,
    pub expected_gain: Option<f64>,
    pub optimal_decision: Choice,
    pub optimal_gain: f64,
    /// Payoff read in the column of the option that was actually better.
    pub realized_gain: Option<f64>,
    pub followed: Option<bool>,
    pub conservative: Option<bool>,
}

impl DecisionRecord {
    pub fn score(
        trial: &TrialSpec,
        matrix: &PayoffMatrix,
        decision: Option<Choice>,
        decision_time_s: Option<f64>,
    ) -> Self {
        let p = trial.accuracy_p;
        let (optimal_decision, optimal_gain) = best_response(matrix, trial.suggestion, p);
        Self {
            trial_id: trial.trial_id,
            task: trial.task,
            accuracy_p: p.value(),
            time_budget: trial.time_budget,
            suggestion: trial.suggestion,
            decision,
            decision_time_s,
            expected_gain: decision.map(|d| gain(matrix, d, trial.suggestion, p)),
            optimal_decision,
            optimal_gain,
            realized_gain: decision.map(|d| matrix.entry(d, trial.ground_truth.better_option)),
            followed: decision.map(|d| d == trial.suggestion),
            conservative: decision.map(|d| d == matrix.conservative()),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.decision.is_some()
    }
}

/// Chooses and scores; the decision time is drawn from the same stream
/// after the choice.
pub fn decide(
    policy: &PolicySpec,
    trial: &TrialSpec,
    matrix: &PayoffMatrix,
    rng: &mut impl Rng,
) -> Result<DecisionRecord, PolicyError> {
    let d = choose(policy, trial, matrix, rng)?;
    let t = DecisionTimeModel::default().sample(trial.time_budget, rng);
    Ok(DecisionRecord::score(trial, matrix, Some(d), Some(t)))
}

/// Truncated-normal model of decision times.
///
/// With a limit the mean follows the linear fit of actual against demanded
/// time and the normal is truncated to `(0, budget]`; without one it is
/// centred on the free-time average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionTimeModel {
    pub intercept_s: f64,
    pub slope: f64,
    /// Standard deviation as a fraction of the budget.
    pub sd_fraction: f64,
    pub unlimited_mean_s: f64,
    pub unlimited_sd_s: f64,
}

impl Default for DecisionTimeModel {
    fn default() -> Self {
        Self {
            intercept_s: -0.05,
            slope: 1.04,
            sd_fraction: 0.1,
            unlimited_mean_s: 3.50,
            unlimited_sd_s: 0.89,
        }
    }
}

impl DecisionTimeModel {
    /// Location and scale of the untruncated normal, plus the upper bound.
    pub fn parameters(&self, budget: TimeBudget) -> (f64, f64, f64) {
        match budget.as_seconds() {
            Some(b) => (self.intercept_s + self.slope * b, self.sd_fraction * b, b),
            None => (self.unlimited_mean_s, self.unlimited_sd_s, f64::INFINITY),
        }
    }

    pub fn sample(&self, budget: TimeBudget, rng: &mut impl Rng) -> f64 {
        let (mean, sd, upper) = self.parameters(budget);
        let normal = Normal::new(mean, sd).expect("scale is positive");
        for _ in 0..10_000 {
            let x = normal.sample(rng);
            if x > 0.0 && x <= upper {
                return x;
            }
        }
        mean.clamp(f64::MIN_POSITIVE, upper)
    }
}

pub fn simulated_decision_time(trial: &TrialSpec, rng: &mut impl Rng) -> f64 {
    DecisionTimeModel::default().sample(trial.time_budget, rng)
}
