//! Take-over tasks, their two decision options, and perceived gain matrices.
//!
//! Matrices are stored `pg[decision][suggestion]`: the row is what the
//! driver did, the column is what the ADS suggested. Entry `pg[0][1]` is
//! the `PG01` cell of the usual annotation. Every downstream formula reads
//! this orientation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bound of the rating scale perceived gains are measured on.
pub const SCALE_BOUND: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayoffError {
    #[error("payoff entry {name} = {value} lies outside [-10, 10]")]
    Range { name: &'static str, value: f64 },
    #[error("payoff entry {name} is not a finite number")]
    NotFinite { name: &'static str },
    #[error("malformed payoff document: {0}")]
    Schema(String),
}

/// The three built-in take-over tasks, highest risk first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(alias = "avoid_collision")]
    AvoidCollision,
    #[serde(alias = "overtake")]
    Overtake,
    #[serde(alias = "route_selection")]
    RouteSelection,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::AvoidCollision, Task::Overtake, Task::RouteSelection];

    /// 1 is the riskiest task.
    pub fn risk_rank(self) -> u8 {
        match self {
            Task::AvoidCollision => 1,
            Task::Overtake => 2,
            Task::RouteSelection => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::AvoidCollision => "AvoidCollision",
            Task::Overtake => "Overtake",
            Task::RouteSelection => "RouteSelection",
        }
    }

    /// Row-order labels for `[Option1, Option2]`.
    pub fn labels(self) -> [&'static str; 2] {
        match self {
            Task::AvoidCollision => ["avoid", "not avoid"],
            Task::Overtake => ["overtake", "not overtake"],
            Task::RouteSelection => ["short route", "long route"],
        }
    }

    /// Parses a choice name (`first`, `option1`, ...) or one of the task's
    /// labels, ignoring case and `_`/space differences.
    pub fn parse_choice(self, text: &str) -> Option<Choice> {
        let norm = |s: &str| s.trim().to_ascii_lowercase().replace(['_', '-'], " ");
        let t = norm(text);
        match t.as_str() {
            "first" | "option1" | "option 1" => return Some(Choice::First),
            "second" | "option2" | "option 2" => return Some(Choice::Second),
            _ => {}
        }
        let labels = self.labels();
        Choice::BOTH.into_iter().find(|c| norm(labels[c.index()]) == t)
    }

    /// Default safer option. Route selection has no stated safer option;
    /// the long route is used because the short one risks congestion.
    pub fn default_conservative(self) -> Choice {
        match self {
            Task::AvoidCollision => Choice::First,
            Task::Overtake | Task::RouteSelection => Choice::Second,
        }
    }

    /// Scenario text shown to a human driver.
    pub fn description(self) -> &'static str {
        match self {
            Task::AvoidCollision => {
                "A vehicle ahead may be on a collision course. Decide whether to avoid it."
            }
            Task::Overtake => "A slow vehicle is ahead. Decide whether to overtake it.",
            Task::RouteSelection => {
                "Two routes lead to the destination. The short one may be congested. Pick a route."
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary option index within a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    #[serde(alias = "option1")]
    First,
    #[serde(alias = "option2")]
    Second,
}

impl Choice {
    pub const BOTH: [Choice; 2] = [Choice::First, Choice::Second];

    pub fn index(self) -> usize {
        match self {
            Choice::First => 0,
            Choice::Second => 1,
        }
    }

    pub fn other(self) -> Choice {
        match self {
            Choice::First => Choice::Second,
            Choice::Second => Choice::First,
        }
    }
}

/// A concrete option of a concrete task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecisionOption {
    pub task: Task,
    pub choice: Choice,
}

impl DecisionOption {
    pub fn new(task: Task, choice: Choice) -> Self {
        Self { task, choice }
    }

    pub fn label(&self) -> &'static str {
        self.task.labels()[self.choice.index()]
    }

    pub fn is_conservative(&self) -> bool {
        self.choice == self.task.default_conservative()
    }
}

/// Perceived gain/loss table for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixDocument", into = "MatrixDocument")]
pub struct PayoffMatrix {
    task: Task,
    pg: [[f64; 2]; 2],
    sd: Option<[[f64; 2]; 2]>,
    conservative: Choice,
}

const ENTRY_NAMES: [[&str; 2]; 2] = [["pg00", "pg01"], ["pg10", "pg11"]];

impl PayoffMatrix {
    /// Validated constructor. Entries must lie on the rating scale.
    pub fn new(task: Task, pg: [[f64; 2]; 2]) -> Result<Self, PayoffError> {
        for (d, row) in pg.iter().enumerate() {
            for (v, &value) in row.iter().enumerate() {
                let name = ENTRY_NAMES[d][v];
                if !value.is_finite() {
                    return Err(PayoffError::NotFinite { name });
                }
                if value.abs() > SCALE_BOUND {
                    return Err(PayoffError::Range { name, value });
                }
            }
        }
        Ok(Self {
            task,
            pg,
            sd: None,
            conservative: task.default_conservative(),
        })
    }

    pub fn with_sd(mut self, sd: [[f64; 2]; 2]) -> Self {
        self.sd = Some(sd);
        self
    }

    pub fn with_conservative(mut self, choice: Choice) -> Self {
        self.conservative = choice;
        self
    }

    /// Mean matrices rated by the Study 1 participants.
    pub fn preset(task: Task) -> Self {
        let (pg, sd) = match task {
            Task::RouteSelection => ([[3.59, -0.22], [-1.92, 4.15]], [[1.85, 1.95], [2.00, 1.78]]),
            Task::Overtake => ([[3.92, 0.55], [-2.74, 3.72]], [[1.91, 1.89], [2.17, 1.87]]),
            Task::AvoidCollision => ([[5.57, 0.25], [-3.96, 2.77]], [[1.68, 2.06], [2.06, 2.14]]),
        };
        Self {
            task,
            pg,
            sd: Some(sd),
            conservative: task.default_conservative(),
        }
    }

    /// Parses a flat JSON matrix document.
    pub fn from_json(text: &str) -> Result<Self, PayoffError> {
        let doc: MatrixDocument =
            serde_json::from_str(text).map_err(|e| PayoffError::Schema(e.to_string()))?;
        Self::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("matrix serialization is infallible")
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn pg(&self) -> &[[f64; 2]; 2] {
        &self.pg
    }

    pub fn sd(&self) -> Option<&[[f64; 2]; 2]> {
        self.sd.as_ref()
    }

    #[inline]
    pub fn entry(&self, decision: Choice, suggestion: Choice) -> f64 {
        self.pg[decision.index()][suggestion.index()]
    }

    pub fn conservative(&self) -> Choice {
        self.conservative
    }

    pub fn option(&self, choice: Choice) -> DecisionOption {
        DecisionOption::new(self.task, choice)
    }

    /// Multiplies every entry by `factor`; no range check (analysis helper).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for row in out.pg.iter_mut() {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        out
    }
}

/// Wire form of a matrix file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDocument {
    task: Task,
    pg00: f64,
    pg01: f64,
    pg10: f64,
    pg11: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sd00: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sd01: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sd10: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sd11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conservative: Option<Choice>,
}

impl TryFrom<MatrixDocument> for PayoffMatrix {
    type Error = PayoffError;

    fn try_from(doc: MatrixDocument) -> Result<Self, Self::Error> {
        let mut m = PayoffMatrix::new(doc.task, [[doc.pg00, doc.pg01], [doc.pg10, doc.pg11]])?;
        match (doc.sd00, doc.sd01, doc.sd10, doc.sd11) {
            (Some(a), Some(b), Some(c), Some(d)) => m.sd = Some([[a, b], [c, d]]),
            (None, None, None, None) => {}
            _ => {
                return Err(PayoffError::Schema(
                    "standard deviations must be given for all four entries or none".into(),
                ))
            }
        }
        if let Some(c) = doc.conservative {
            m.conservative = c;
        }
        Ok(m)
    }
}

impl From<PayoffMatrix> for MatrixDocument {
    fn from(m: PayoffMatrix) -> Self {
        let sd = m.sd;
        MatrixDocument {
            task: m.task,
            pg00: m.pg[0][0],
            pg01: m.pg[0][1],
            pg10: m.pg[1][0],
            pg11: m.pg[1][1],
            sd00: sd.map(|s| s[0][0]),
            sd01: sd.map(|s| s[0][1]),
            sd10: sd.map(|s| s[1][0]),
            sd11: sd.map(|s| s[1][1]),
            conservative: (m.conservative != m.task.default_conservative()).then_some(m.conservative),
        }
    }
}

/// One matrix per task.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSet {
    matrices: [PayoffMatrix; 3],
}

impl Default for PayoffSet {
    fn default() -> Self {
        Self::presets()
    }
}

impl PayoffSet {
    pub fn presets() -> Self {
        Self {
            matrices: Task::ALL.map(PayoffMatrix::preset),
        }
    }

    /// Replaces the matrix of `m.task()`.
    pub fn with(mut self, m: PayoffMatrix) -> Self {
        let slot = Task::ALL.iter().position(|t| *t == m.task()).unwrap();
        self.matrices[slot] = m;
        self
    }

    pub fn get(&self, task: Task) -> &PayoffMatrix {
        match task {
            Task::AvoidCollision => &self.matrices[0],
            Task::Overtake => &self.matrices[1],
            Task::RouteSelection => &self.matrices[2],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &PayoffMatrix> {
        self.matrices.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choices_parse_from_labels() {
        assert_eq!(Task::Overtake.parse_choice("Not_Overtake"), Some(Choice::Second));
        assert_eq!(Task::RouteSelection.parse_choice("short route"), Some(Choice::First));
        assert_eq!(Task::AvoidCollision.parse_choice("option2"), Some(Choice::Second));
        assert_eq!(Task::AvoidCollision.parse_choice("overtake"), None);
    }

    #[test]
    fn presets_match_the_rated_means() {
        assert_eq!(
            PayoffMatrix::preset(Task::RouteSelection).pg(),
            &[[3.59, -0.22], [-1.92, 4.15]]
        );
        assert_eq!(
            PayoffMatrix::preset(Task::Overtake).pg(),
            &[[3.92, 0.55], [-2.74, 3.72]]
        );
        assert_eq!(
            PayoffMatrix::preset(Task::AvoidCollision).pg(),
            &[[5.57, 0.25], [-3.96, 2.77]]
        );
    }

    #[test]
    fn presets_are_stable_and_ordered() {
        for task in Task::ALL {
            let m = PayoffMatrix::preset(task);
            assert_eq!(m, PayoffMatrix::preset(task));
            let pg = m.pg();
            assert!(pg[0][0] > pg[1][0], "{task}: agreeing with suggestion 1 must pay");
            assert!(pg[1][1] > pg[0][1], "{task}: agreeing with suggestion 2 must pay");
            assert!(pg[0][0] + pg[1][1] - pg[0][1] - pg[1][0] > 0.0);
        }
    }

    #[test]
    fn risk_rank_is_a_bijection() {
        let mut ranks: Vec<u8> = Task::ALL.iter().map(|t| t.risk_rank()).collect();
        ranks.sort();
        assert_eq!(ranks, vec![1, 2, 3]);
        assert_eq!(Task::AvoidCollision.risk_rank(), 1);
    }

    #[test]
    fn exactly_one_conservative_option_per_task() {
        for task in Task::ALL {
            let n = Choice::BOTH
                .iter()
                .filter(|c| DecisionOption::new(task, **c).is_conservative())
                .count();
            assert_eq!(n, 1);
        }
        assert_eq!(DecisionOption::new(Task::AvoidCollision, Choice::First).label(), "avoid");
        assert_eq!(DecisionOption::new(Task::RouteSelection, Choice::Second).label(), "long route");
    }

    #[test]
    fn zero_matrix_is_accepted() {
        let m = PayoffMatrix::from_json(
            r#"{"task":"Overtake","pg00":0,"pg01":0,"pg10":0,"pg11":0}"#,
        )
        .unwrap();
        assert_eq!(m.pg(), &[[0.0; 2]; 2]);
        assert!(m.sd().is_none());
    }

    #[test]
    fn out_of_range_entry_is_rejected() {
        let err = PayoffMatrix::from_json(
            r#"{"task":"Overtake","pg00":11,"pg01":0,"pg10":0,"pg11":0}"#,
        )
        .unwrap_err();
        assert_eq!(err, PayoffError::Range { name: "pg00", value: 11.0 });
    }

    #[test]
    fn missing_field_is_a_schema_error() {
        let err = PayoffMatrix::from_json(r#"{"task":"Overtake","pg00":1,"pg01":0,"pg10":0}"#)
            .unwrap_err();
        assert!(matches!(err, PayoffError::Schema(_)));
        let err = PayoffMatrix::from_json(
            r#"{"task":"Overtake","pg00":1,"pg01":0,"pg10":0,"pg11":0,"sd00":1}"#,
        )
        .unwrap_err();
        assert!(matches!(err, PayoffError::Schema(_)));
    }

    #[test]
    fn preset_round_trips_through_json() {
        let m = PayoffMatrix::preset(Task::Overtake);
        assert_eq!(PayoffMatrix::from_json(&m.to_json()).unwrap(), m);
        let custom = m.clone().with_conservative(Choice::First);
        assert_eq!(PayoffMatrix::from_json(&custom.to_json()).unwrap(), custom);
    }
}
