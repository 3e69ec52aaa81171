//! Seeded trial streams.
//!
//! A session is the full factorial of task × accuracy × time budget ×
//! suggestion, repeated `repetitions_per_cell` times. Whether the ADS is
//! right on a given trial is decided per cell: `Representative` draws an
//! independent Bernoulli(p) per trial, `Balanced` fixes exactly half of the
//! repetitions of every cell (rounded up) to correct, regardless of the
//! announced accuracy.
//!
//! `LatinSquare` ordering splits the repetitions into two session halves and
//! orders the (accuracy, budget) condition blocks of each half along
//! consecutive rows of a cyclic Latin square; trials are shuffled within a
//! block. `UniformShuffle` shuffles the whole session.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::gain_model::Accuracy;
use crate::payoff::{Choice, DecisionOption, Task};
use crate::rng::{self, domain, StreamRng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error("failed to write trial table: {0}")]
    Io(String),
}

/// Time allowed for the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeBudget {
    Limited { millis: u32 },
    Unlimited,
}

impl TimeBudget {
    pub fn seconds(s: f64) -> Result<Self, ScenarioError> {
        if !(s.is_finite() && s > 0.0 && s < 3600.0) {
            return Err(ScenarioError::Config(format!("time budget {s} s is not a positive duration")));
        }
        Ok(TimeBudget::Limited {
            millis: (s * 1000.0).round() as u32,
        })
    }

    pub fn as_seconds(self) -> Option<f64> {
        match self {
            TimeBudget::Limited { millis } => Some(f64::from(millis) / 1000.0),
            TimeBudget::Unlimited => None,
        }
    }

    pub fn as_millis(self) -> Option<u32> {
        match self {
            TimeBudget::Limited { millis } => Some(millis),
            TimeBudget::Unlimited => None,
        }
    }

    fn code(self) -> u64 {
        match self {
            TimeBudget::Limited { millis } => u64::from(millis),
            TimeBudget::Unlimited => u64::MAX,
        }
    }
}

impl Ord for TimeBudget {
    fn cmp(&self, other: &Self) -> Ordering {
        self.code().cmp(&other.code())
    }
}

impl PartialOrd for TimeBudget {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TimeBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_seconds() {
            Some(s) => write!(f, "{s}"),
            None => f.write_str("unlimited"),
        }
    }
}

impl Serialize for TimeBudget {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.as_seconds() {
            Some(secs) => s.serialize_f64(secs),
            None => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for TimeBudget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Seconds(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Seconds(s) => TimeBudget::seconds(s).map_err(serde::de::Error::custom),
            Raw::Word(w) if w.eq_ignore_ascii_case("unlimited") => Ok(TimeBudget::Unlimited),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("unknown time budget {w:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMode {
    Representative,
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOrdering {
    LatinSquare,
    UniformShuffle,
}

fn default_drive_phase() -> [f64; 2] {
    [15.0, 60.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub seed: u64,
    pub tasks: Vec<Task>,
    /// Announced accuracies; these weight the gain model.
    pub accuracy_levels: Vec<Accuracy>,
    pub time_budgets: Vec<TimeBudget>,
    pub repetitions_per_cell: u32,
    pub truth_mode: TruthMode,
    pub ordering: TrialOrdering,
    /// Autonomous driving stretch before the take-over request, seconds.
    #[serde(default = "default_drive_phase")]
    pub drive_phase_s: [f64; 2],
}

fn accuracies(ps: &[f64]) -> Vec<Accuracy> {
    ps.iter().map(|p| Accuracy::new(*p).unwrap()).collect()
}

fn limited(secs: &[f64]) -> Vec<TimeBudget> {
    secs.iter().map(|s| TimeBudget::seconds(*s).unwrap()).collect()
}

impl SessionConfig {
    /// Three accuracy levels with enough decision time.
    pub fn study2(seed: u64) -> Self {
        Self {
            seed,
            tasks: Task::ALL.to_vec(),
            accuracy_levels: accuracies(&[0.6, 0.9, 0.99]),
            time_budgets: vec![TimeBudget::Unlimited],
            repetitions_per_cell: 2,
            truth_mode: TruthMode::Representative,
            ordering: TrialOrdering::LatinSquare,
            drive_phase_s: default_drive_phase(),
        }
    }

    /// Three decision-time limits at an announced 90 % accuracy.
    pub fn study3(seed: u64) -> Self {
        Self {
            seed,
            tasks: Task::ALL.to_vec(),
            accuracy_levels: accuracies(&[0.9]),
            time_budgets: limited(&[0.5, 1.5, 2.5]),
            repetitions_per_cell: 2,
            truth_mode: TruthMode::Balanced,
            ordering: TrialOrdering::LatinSquare,
            drive_phase_s: default_drive_phase(),
        }
    }

    /// Randomised intervention trials: one pass over task × time ×
    /// suggestion with outcomes drawn from the announced accuracy.
    pub fn study4(seed: u64) -> Self {
        Self {
            seed,
            tasks: Task::ALL.to_vec(),
            accuracy_levels: accuracies(&[0.9]),
            time_budgets: limited(&[0.5, 1.5, 2.5]),
            repetitions_per_cell: 1,
            truth_mode: TruthMode::Representative,
            ordering: TrialOrdering::UniformShuffle,
            drive_phase_s: default_drive_phase(),
        }
    }

    pub const PRESETS: [&'static str; 3] = ["study2", "study3", "study4"];

    /// Named preset: `study2`, `study3` or `study4`.
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "study2" => Some(Self::study2(seed)),
            "study3" => Some(Self::study3(seed)),
            "study4" => Some(Self::study4(seed)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Config(m.to_string()));
        if self.tasks.is_empty() {
            return bad("no tasks");
        }
        if self.accuracy_levels.is_empty() {
            return bad("no accuracy levels");
        }
        if self.time_budgets.is_empty() {
            return bad("no time budgets");
        }
        if self.repetitions_per_cell == 0 {
            return bad("repetitions_per_cell must be at least 1");
        }
        if let Some(p) = self.accuracy_levels.iter().find(|p| p.value() <= 0.0) {
            return Err(ScenarioError::Config(format!("accuracy {p} must lie in (0, 1]")));
        }
        if has_duplicates(&self.tasks)
            || has_duplicates(&self.accuracy_levels)
            || has_duplicates(&self.time_budgets)
        {
            return bad("factor levels must be distinct");
        }
        let [lo, hi] = self.drive_phase_s;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return bad("drive_phase_s must be an ordered non-negative range");
        }
        Ok(())
    }

    pub fn trial_count(&self) -> usize {
        self.tasks.len()
            * self.accuracy_levels.len()
            * self.time_budgets.len()
            * 2
            * self.repetitions_per_cell as usize
    }

    /// Same factors restricted to one time budget.
    pub fn with_budgets(&self, budgets: Vec<TimeBudget>) -> Self {
        Self {
            time_budgets: budgets,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trial_id: u32,
    /// What a perfectly accurate ADS would have suggested.
    pub better_option: Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_id: u32,
    pub task: Task,
    pub accuracy_p: Accuracy,
    pub suggestion: Choice,
    pub ground_truth: GroundTruth,
    pub time_budget: TimeBudget,
    pub drive_phase_s: f64,
    pub environment_tag: String,
    /// Condition block position (session half × condition) in the order.
    pub block: u32,
    /// Canonical key of this trial; indexes its random child streams.
    pub stream_key: u64,
}

impl TrialSpec {
    pub fn ads_correct(&self) -> bool {
        self.suggestion == self.ground_truth.better_option
    }

    pub fn suggestion_option(&self) -> DecisionOption {
        DecisionOption::new(self.task, self.suggestion)
    }
}

/// Correctness flags for one cell of `len` repetitions.
pub fn truth_block(mode: TruthMode, p: Accuracy, len: usize, rng: &mut StreamRng) -> Vec<bool> {
    match mode {
        TruthMode::Representative => (0..len).map(|_| truth_sample(p, rng)).collect(),
        TruthMode::Balanced => {
            let correct = len.div_ceil(2);
            let mut flags: Vec<bool> = (0..len).map(|i| i < correct).collect();
            flags.shuffle(rng);
            flags
        }
    }
}

/// One independent draw: is the ADS right?
#[inline]
pub fn truth_sample(p: Accuracy, rng: &mut impl Rng) -> bool {
    rng.random::<f64>() < p.value()
}

const ENV_MAPS: [&str; 5] = ["town01", "town02", "town03", "town04", "town05"];
const ENV_LIGHT: [&str; 3] = ["day", "dusk", "night"];

struct Pending {
    key: u64,
    task: Task,
    accuracy: Accuracy,
    budget: TimeBudget,
    suggestion: Choice,
    correct: bool,
    half: u32,
}

pub fn generate_session(config: &SessionConfig) -> Result<Vec<TrialSpec>, ScenarioError> {
    config.validate()?;
    let reps = config.repetitions_per_cell as usize;
    let halves: u32 = match config.ordering {
        TrialOrdering::LatinSquare if reps >= 2 => 2,
        _ => 1,
    };

    let conditions: Vec<(Accuracy, TimeBudget)> = config
        .accuracy_levels
        .iter()
        .flat_map(|a| config.time_budgets.iter().map(move |b| (*a, *b)))
        .collect();

    // blocks[half][condition]
    let mut blocks: Vec<Vec<Vec<Pending>>> = (0..halves)
        .map(|_| (0..conditions.len()).map(|_| Vec::new()).collect())
        .collect();

    for (ci, (accuracy, budget)) in conditions.iter().enumerate() {
        for task in &config.tasks {
            for suggestion in Choice::BOTH {
                let cell = rng::mix(&[
                    task.risk_rank() as u64,
                    accuracy.value().to_bits(),
                    budget.code(),
                    suggestion.index() as u64,
                ]);
                let mut cell_rng = rng::child(config.seed, domain::CELL, cell);
                let flags = truth_block(config.truth_mode, *accuracy, reps, &mut cell_rng);
                for (r, correct) in flags.into_iter().enumerate() {
                    let half = r as u32 % halves;
                    blocks[half as usize][ci].push(Pending {
                        key: rng::mix(&[cell, r as u64]),
                        task: *task,
                        accuracy: *accuracy,
                        budget: *budget,
                        suggestion,
                        correct,
                        half,
                    });
                }
            }
        }
    }

    let mut order_rng = rng::child(config.seed, domain::ORDER, 0);
    let mut ordered: Vec<(u32, Pending)> = Vec::with_capacity(config.trial_count());
    match config.ordering {
        TrialOrdering::LatinSquare => {
            let k = conditions.len();
            let row = order_rng.random_range(0..k);
            for (h, mut half) in blocks.into_iter().enumerate() {
                for j in 0..k {
                    let ci = (row + h + j) % k;
                    let mut block = std::mem::take(&mut half[ci]);
                    block.shuffle(&mut order_rng);
                    let block_id = (h * k + j) as u32;
                    ordered.extend(block.into_iter().map(|p| (block_id, p)));
                }
            }
        }
        TrialOrdering::UniformShuffle => {
            let mut all: Vec<Pending> = blocks.into_iter().flatten().flatten().collect();
            all.shuffle(&mut order_rng);
            ordered.extend(all.into_iter().map(|p| (0, p)));
        }
    }

    let [lo, hi] = config.drive_phase_s;
    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(i, (block, p))| {
            let mut trial_rng = rng::child(config.seed, domain::TRIAL, p.key);
            let drive_phase_s = if hi > lo { trial_rng.random_range(lo..=hi) } else { lo };
            let environment_tag = format!(
                "{}-{}-h{}",
                ENV_MAPS[trial_rng.random_range(0..ENV_MAPS.len())],
                ENV_LIGHT[trial_rng.random_range(0..ENV_LIGHT.len())],
                p.half
            );
            let trial_id = i as u32;
            let better_option = if p.correct { p.suggestion } else { p.suggestion.other() };
            TrialSpec {
                trial_id,
                task: p.task,
                accuracy_p: p.accuracy,
                suggestion: p.suggestion,
                ground_truth: GroundTruth {
                    trial_id,
                    better_option,
                },
                time_budget: p.budget,
                drive_phase_s,
                environment_tag,
                block,
                stream_key: p.key,
            }
        })
        .collect())
}

/// Writes the trial table as CSV.
pub fn write_trials_csv<W: std::io::Write>(trials: &[TrialSpec], out: W) -> Result<(), ScenarioError> {
    let io = |e: csv::Error| ScenarioError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial_id",
        "task",
        "p_announced",
        "suggestion",
        "truth",
        "time_budget_s",
        "drive_phase_s",
    ])
    .map_err(io)?;
    for t in trials {
        w.write_record([
            t.trial_id.to_string(),
            t.task.to_string(),
            t.accuracy_p.to_string(),
            t.suggestion_option().label().to_string(),
            DecisionOption::new(t.task, t.ground_truth.better_option).label().to_string(),
            t.time_budget.to_string(),
            format!("{:.3}", t.drive_phase_s),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| ScenarioError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn study2_has_36_trials() {
        let trials = generate_session(&SessionConfig::study2(1)).unwrap();
        assert_eq!(trials.len(), 36);
        assert!(trials.iter().all(|t| t.time_budget == TimeBudget::Unlimited));
    }

    #[test]
    fn study3_balanced_has_half_correct() {
        let trials = generate_session(&SessionConfig::study3(9)).unwrap();
        assert_eq!(trials.len(), 36);
        assert_eq!(trials.iter().filter(|t| t.ads_correct()).count(), 18);
        let mut per_cell: HashMap<(Task, TimeBudget, Choice), (u32, u32)> = HashMap::new();
        for t in &trials {
            let e = per_cell.entry((t.task, t.time_budget, t.suggestion)).or_default();
            e.0 += 1;
            e.1 += t.ads_correct() as u32;
        }
        assert_eq!(per_cell.len(), 18);
        assert!(per_cell.values().all(|&(n, c)| n == 2 && c == 1));
    }

    #[test]
    fn same_seed_same_session() {
        for cfg in [SessionConfig::study2(5), SessionConfig::study3(5), SessionConfig::study4(5)] {
            assert_eq!(generate_session(&cfg).unwrap(), generate_session(&cfg).unwrap());
        }
        assert_ne!(
            generate_session(&SessionConfig::study2(5)).unwrap(),
            generate_session(&SessionConfig::study2(6)).unwrap()
        );
    }

    #[test]
    fn every_cell_appears_repetitions_times() {
        let mut cfg = SessionConfig::study2(3);
        cfg.repetitions_per_cell = 3;
        cfg.time_budgets = vec![TimeBudget::seconds(1.5).unwrap(), TimeBudget::Unlimited];
        let trials = generate_session(&cfg).unwrap();
        assert_eq!(trials.len(), cfg.trial_count());
        let mut counts: HashMap<(Task, Accuracy, TimeBudget, Choice), u32> = HashMap::new();
        for t in &trials {
            *counts.entry((t.task, t.accuracy_p, t.time_budget, t.suggestion)).or_default() += 1;
        }
        assert_eq!(counts.len(), 3 * 3 * 2 * 2);
        assert!(counts.values().all(|&n| n == 3));
        let ids: Vec<u32> = trials.iter().map(|t| t.trial_id).collect();
        assert_eq!(ids, (0..trials.len() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn latin_square_keeps_condition_blocks_contiguous() {
        let trials = generate_session(&SessionConfig::study2(11)).unwrap();
        // 2 halves × 3 accuracy conditions, 6 trials each.
        for (i, chunk) in trials.chunks(6).enumerate() {
            assert!(chunk.iter().all(|t| t.block == i as u32));
            assert!(chunk.iter().all(|t| t.accuracy_p == chunk[0].accuracy_p));
        }
        let first: Vec<Accuracy> = trials.chunks(6).take(3).map(|c| c[0].accuracy_p).collect();
        let second: Vec<Accuracy> = trials.chunks(6).skip(3).map(|c| c[0].accuracy_p).collect();
        assert_ne!(first, second, "halves use consecutive square rows");
        assert_eq!(first[1..], second[..2]);
    }

    #[test]
    fn adding_a_level_leaves_existing_trials_alone() {
        let base = SessionConfig::study3(21);
        let mut wider = base.clone();
        wider.time_budgets.push(TimeBudget::seconds(4.0).unwrap());
        let by_key = |cfg: &SessionConfig| -> HashMap<u64, (bool, String)> {
            generate_session(cfg)
                .unwrap()
                .into_iter()
                .map(|t| (t.stream_key, (t.ads_correct(), format!("{:.9}", t.drive_phase_s))))
                .collect()
        };
        let a = by_key(&base);
        let b = by_key(&wider);
        for (k, v) in &a {
            assert_eq!(b.get(k), Some(v));
        }
    }

    #[test]
    fn drive_phase_within_range() {
        let trials = generate_session(&SessionConfig::study2(2)).unwrap();
        assert!(trials.iter().all(|t| (15.0..=60.0).contains(&t.drive_phase_s)));
    }

    #[test]
    fn representative_truth_frequency() {
        let p = Accuracy::new(0.9).unwrap();
        let mut rng = rng::child(42, 0, 0);
        let n = 100_000;
        let correct = (0..n).filter(|_| truth_sample(p, &mut rng)).count();
        assert!((correct as f64 / n as f64 - 0.9).abs() < 0.005);
        let mut rng = rng::child(42, 0, 1);
        assert!((0..1000).all(|_| truth_sample(Accuracy::CERTAIN, &mut rng)));
    }

    #[test]
    fn balanced_block_is_exact() {
        let p = Accuracy::new(0.9).unwrap();
        let mut rng = rng::child(1, 0, 0);
        for len in [2usize, 4, 6] {
            let flags = truth_block(TruthMode::Balanced, p, len, &mut rng);
            assert_eq!(flags.iter().filter(|f| **f).count(), len / 2);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SessionConfig::study2(0);
        cfg.tasks.clear();
        assert!(matches!(generate_session(&cfg), Err(ScenarioError::Config(_))));
        let mut cfg = SessionConfig::study2(0);
        cfg.repetitions_per_cell = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SessionConfig::study2(0);
        cfg.accuracy_levels = vec![Accuracy::new(0.0).unwrap()];
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&SessionConfig::study2(0))
            .unwrap()
            .replace("0.99", "1.5");
        assert!(serde_json::from_str::<SessionConfig>(&json).is_err());
    }

    #[test]
    fn time_budget_serde() {
        let b: Vec<TimeBudget> = serde_json::from_str(r#"[0.5, "unlimited", 2.5]"#).unwrap();
        assert_eq!(b[0], TimeBudget::Limited { millis: 500 });
        assert_eq!(b[1], TimeBudget::Unlimited);
        assert_eq!(serde_json::to_string(&b).unwrap(), r#"[0.5,"unlimited",2.5]"#);
        assert!(serde_json::from_str::<TimeBudget>("-1").is_err());
        assert!(TimeBudget::seconds(0.5).unwrap() < TimeBudget::Unlimited);
    }

    #[test]
    fn csv_export_columns() {
        let trials = generate_session(&SessionConfig::study3(4)).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&trials, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial_id,task,p_announced,suggestion,truth,time_budget_s,drive_phase_s"
        );
        assert_eq!(lines.count(), 36);
    }
}
