//! Simulated sessions, calibration and study replication.
//!
//! A run draws one session per simulated driver from the config seed and
//! lets a [`DriverModel`] decide every trial. Each driver's sessions and
//! each trial's decision use independent child streams, so drivers are
//! simulated in parallel while results stay bit-identical; aggregation
//! happens sequentially in driver order.
//!
//! AAG in reports is expectation based. `realized_mean` is the payoff read
//! in the column of the ground-truth better option.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gain_model::Accuracy;
use crate::intervention::{apply_alert_effect, AlertConfig, AlertEngine, InterventionError, RemindMethod};
use crate::metrics::{self, MetricsError};
use crate::payoff::{PayoffMatrix, PayoffSet, Task};
use crate::policy::{self, DecisionRecord, FallbackMap, PolicyError, PolicyKind, PolicySpec};
use crate::rng::{self, domain};
use crate::scenario::{generate_session, ScenarioError, SessionConfig, TimeBudget, TrialSpec};
use crate::summary::gap_ratio;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("at least one driver is required")]
    NoDrivers,
    #[error("target gap {target} exceeds the gap {max} of the pure fallback policy at {budget}")]
    Unachievable { budget: TimeBudget, target: f64, max: f64 },
    #[error("calibration at {budget} reached gap {achieved}, target {target}")]
    NotConverged { budget: TimeBudget, target: f64, achieved: f64 },
    #[error("config produced no scoreable trials")]
    Empty,
}

/// Per-budget policy assignment; budgets without an entry use `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPlan {
    pub default: PolicySpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_budget: Vec<BudgetPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPolicy {
    pub time_budget: TimeBudget,
    pub policy: PolicySpec,
}

impl From<PolicySpec> for PolicyPlan {
    fn from(p: PolicySpec) -> Self {
        Self {
            default: p,
            per_budget: Vec::new(),
        }
    }
}

impl PolicyPlan {
    pub fn policy_for(&self, budget: TimeBudget) -> &PolicySpec {
        self.per_budget
            .iter()
            .find(|b| b.time_budget == budget)
            .map_or(&self.default, |b| &b.policy)
    }

    pub fn seed(&self) -> u64 {
        self.default.seed
    }

    /// Same plan with every policy drawing from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.default.seed = seed;
        for b in &mut self.per_budget {
            b.policy.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        self.default.validate()?;
        self.per_budget.iter().try_for_each(|b| b.policy.validate())
    }
}

/// How a simulated driver decides within one session.
pub trait DriverModel: Sync {
    type State: Send;

    fn start(&self, driver: u32) -> Result<Self::State, SimError>;

    fn decide(
        &self,
        state: &mut Self::State,
        trial: &TrialSpec,
        matrix: &PayoffMatrix,
        rng: &mut rng::StreamRng,
    ) -> Result<DecisionRecord, SimError>;

    fn seed(&self) -> u64;

    fn alerts_issued(&self, _state: &Self::State) -> u32 {
        0
    }
}

impl DriverModel for PolicyPlan {
    type State = ();

    fn start(&self, _driver: u32) -> Result<(), SimError> {
        Ok(())
    }

    fn decide(
        &self,
        _: &mut (),
        trial: &TrialSpec,
        matrix: &PayoffMatrix,
        rng: &mut rng::StreamRng,
    ) -> Result<DecisionRecord, SimError> {
        Ok(policy::decide(self.policy_for(trial.time_budget), trial, matrix, rng)?)
    }

    fn seed(&self) -> u64 {
        PolicyPlan::seed(self)
    }
}

/// A time-pressured plan whose rational weight is boosted by alerts.
#[derive(Debug, Clone)]
pub struct AlertedDriver {
    pub plan: PolicyPlan,
    pub method: RemindMethod,
    pub alerts: AlertConfig,
}

pub struct AlertedState {
    engine: AlertEngine,
    pub alerts_issued: u32,
}

impl DriverModel for AlertedDriver {
    type State = AlertedState;

    fn start(&self, _driver: u32) -> Result<AlertedState, SimError> {
        Ok(AlertedState {
            engine: AlertEngine::new(self.method, self.alerts)?,
            alerts_issued: 0,
        })
    }

    fn decide(
        &self,
        state: &mut AlertedState,
        trial: &TrialSpec,
        matrix: &PayoffMatrix,
        rng: &mut rng::StreamRng,
    ) -> Result<DecisionRecord, SimError> {
        let issued = state.engine.issue(trial, None);
        state.alerts_issued += issued.directive.trigger as u32;
        let base = self.plan.policy_for(trial.time_budget);
        let effective = apply_alert_effect(base, &issued.directive, issued.effective_boost.min(1.0))?;
        Ok(policy::decide(&effective, trial, matrix, rng)?)
    }

    fn seed(&self) -> u64 {
        self.plan.seed()
    }

    fn alerts_issued(&self, state: &AlertedState) -> u32 {
        state.alerts_issued
    }
}

/// Group of trials a report row summarises. `None` means all levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub task: Option<Task>,
    pub accuracy: Option<Accuracy>,
    pub time_budget: Option<TimeBudget>,
}

impl CellKey {
    pub const ALL: CellKey = CellKey {
        task: None,
        accuracy: None,
        time_budget: None,
    };

    fn of(t: &TrialSpec) -> [CellKey; 3] {
        let full = CellKey {
            task: Some(t.task),
            accuracy: Some(t.accuracy_p),
            time_budget: Some(t.time_budget),
        };
        let condition = CellKey { task: None, ..full };
        [full, condition, CellKey::ALL]
    }
}

#[derive(Debug, Clone, Default)]
struct Acc {
    n: u64,
    aag: f64,
    opg: f64,
    realized: f64,
    followed: u64,
    conservative: u64,
    correct: u64,
    // per-driver mean AAG moments
    drivers: u64,
    d_sum: f64,
    d_sumsq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub key: CellKey,
    pub n_trials: u64,
    pub aag_mean: f64,
    pub opg_mean: f64,
    pub gap_ratio: Option<f64>,
    pub aag_sd: f64,
    pub realized_mean: f64,
    pub follow_rate: f64,
    pub conservative_rate: f64,
    pub correct_ratio: f64,
}

impl CellStats {
    fn from_acc(key: CellKey, a: &Acc) -> Self {
        let n = a.n as f64;
        let dn = a.drivers as f64;
        let dmean = a.d_sum / dn;
        let var = if a.drivers > 1 {
            ((a.d_sumsq - dn * dmean * dmean) / (dn - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            key,
            n_trials: a.n,
            aag_mean: a.aag / n,
            opg_mean: a.opg / n,
            gap_ratio: gap_ratio(a.aag, a.opg),
            aag_sd: var.sqrt(),
            realized_mean: a.realized / n,
            follow_rate: a.followed as f64 / n,
            conservative_rate: a.conservative as f64 / n,
            correct_ratio: a.correct as f64 / n,
        }
    }

    pub fn aag_opg_ratio(&self) -> Option<f64> {
        (self.opg_mean > 0.0).then(|| self.aag_mean / self.opg_mean)
    }
}

/// Per-driver session outcome without the trial records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub driver: u32,
    pub aag: f64,
    pub opg: f64,
    pub gap_ratio: Option<f64>,
    pub follow_rate: f64,
    pub conservative_rate: f64,
    pub correct_ratio: f64,
    pub alerts_issued: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub drivers: u32,
    pub cells: Vec<CellStats>,
    pub sessions: Vec<SessionResult>,
    pub mean_gap_ratio: Option<f64>,
    pub sd_gap_ratio: Option<f64>,
}

impl RunReport {
    pub fn cell(&self, key: &CellKey) -> Option<&CellStats> {
        self.cells.iter().find(|c| &c.key == key)
    }

    pub fn overall(&self) -> &CellStats {
        self.cell(&CellKey::ALL).expect("overall cell is always present")
    }

    /// Cells keyed by task and condition.
    pub fn task_cells(&self) -> impl Iterator<Item = &CellStats> {
        self.cells.iter().filter(|c| c.key.task.is_some())
    }

    /// Cells pooled over tasks, one per (accuracy, budget) condition.
    pub fn condition_cells(&self) -> impl Iterator<Item = &CellStats> {
        self.cells
            .iter()
            .filter(|c| c.key.task.is_none() && c.key.accuracy.is_some())
    }
}

/// Pre-generated sessions of a driver population.
#[derive(Debug, Clone)]
pub struct Population {
    sessions: Vec<Vec<TrialSpec>>,
}

pub fn driver_session_seed(seed: u64, driver: u32) -> u64 {
    rng::mix(&[seed, domain::DRIVER_SESSION, u64::from(driver)])
}

impl Population {
    pub fn generate(config: &SessionConfig, drivers: u32) -> Result<Self, SimError> {
        if drivers == 0 {
            return Err(SimError::NoDrivers);
        }
        config.validate()?;
        let sessions = (0..drivers)
            .into_par_iter()
            .map(|d| generate_session(&config.with_seed(driver_session_seed(config.seed, d))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { sessions })
    }

    pub fn drivers(&self) -> u32 {
        self.sessions.len() as u32
    }

    pub fn session(&self, driver: u32) -> &[TrialSpec] {
        &self.sessions[driver as usize]
    }

    /// Runs every driver's session.
    pub fn run<M: DriverModel>(&self, model: &M, payoffs: &PayoffSet) -> Result<RunReport, SimError> {
        let outcomes: Vec<(Vec<DecisionRecord>, u32)> = self
            .sessions
            .par_iter()
            .enumerate()
            .map(|(d, trials)| simulate_driver(model, d as u32, trials, payoffs))
            .collect::<Result<_, _>>()?;
        aggregate(&self.sessions, &outcomes)
    }
}

fn simulate_driver<M: DriverModel>(
    model: &M,
    driver: u32,
    trials: &[TrialSpec],
    payoffs: &PayoffSet,
) -> Result<(Vec<DecisionRecord>, u32), SimError> {
    let mut state = model.start(driver)?;
    let stream_seed = rng::mix(&[model.seed(), u64::from(driver)]);
    let records = trials
        .iter()
        .map(|t| {
            let mut r = rng::child(stream_seed, domain::DECISION, t.stream_key);
            model.decide(&mut state, t, payoffs.get(t.task), &mut r)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((records, model.alerts_issued(&state)))
}

fn aggregate(sessions: &[Vec<TrialSpec>], outcomes: &[(Vec<DecisionRecord>, u32)]) -> Result<RunReport, SimError> {
    let mut cells: BTreeMap<CellKey, Acc> = BTreeMap::new();
    let mut results = Vec::with_capacity(outcomes.len());
    for (d, (trials, (records, alerts))) in sessions.iter().zip(outcomes).enumerate() {
        let mut per_driver: BTreeMap<CellKey, (f64, u64)> = BTreeMap::new();
        let (mut aag, mut opg) = (0.0, 0.0);
        for (t, r) in trials.iter().zip(records) {
            let (Some(d), Some(g), Some(real)) = (r.decision, r.expected_gain, r.realized_gain) else {
                continue;
            };
            aag += g;
            opg += r.optimal_gain;
            for key in CellKey::of(t) {
                let a = cells.entry(key).or_default();
                a.n += 1;
                a.aag += g;
                a.opg += r.optimal_gain;
                a.realized += real;
                a.followed += r.followed.unwrap_or(false) as u64;
                a.conservative += r.conservative.unwrap_or(false) as u64;
                a.correct += (d == t.ground_truth.better_option) as u64;
                let e = per_driver.entry(key).or_default();
                e.0 += g;
                e.1 += 1;
            }
        }
        for (key, (sum, n)) in per_driver {
            let a = cells.get_mut(&key).expect("cell exists");
            let m = sum / n as f64;
            a.drivers += 1;
            a.d_sum += m;
            a.d_sumsq += m * m;
        }
        let truths: Vec<_> = trials.iter().map(|t| t.ground_truth).collect();
        results.push(SessionResult {
            driver: d as u32,
            aag,
            opg,
            gap_ratio: gap_ratio(aag, opg),
            follow_rate: metrics::follow_rate(records)?,
            conservative_rate: metrics::conservative_rate(records)?,
            correct_ratio: metrics::correct_ratio(records, &truths)?,
            alerts_issued: *alerts,
        });
    }
    if cells.is_empty() {
        return Err(SimError::Empty);
    }
    let gaps: Vec<f64> = results.iter().filter_map(|s| s.gap_ratio).collect();
    let (mean_gap_ratio, sd_gap_ratio) = mean_sd(&gaps);
    Ok(RunReport {
        drivers: results.len() as u32,
        cells: cells.iter().map(|(k, a)| CellStats::from_acc(*k, a)).collect(),
        sessions: results,
        mean_gap_ratio,
        sd_gap_ratio,
    })
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        Some((xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

/// Simulates `drivers` sessions of `config` under `plan`.
pub fn run(config: &SessionConfig, plan: &PolicyPlan, payoffs: &PayoffSet, drivers: u32) -> Result<RunReport, SimError> {
    plan.validate()?;
    Population::generate(config, drivers)?.run(plan, payoffs)
}

// ---------------------------------------------------------------- calibration

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    #[serde(rename = "time_budget_s")]
    pub time_budget: TimeBudget,
    pub target_gap_ratio: f64,
}

impl CalibrationTarget {
    /// Observed deviation of AAG from OPG per decision-time limit.
    pub fn defaults() -> Vec<CalibrationTarget> {
        [(Some(0.5), 0.488), (Some(1.5), 0.384), (Some(2.5), 0.244), (None, 0.154)]
            .into_iter()
            .map(|(s, g)| CalibrationTarget {
                time_budget: s.map_or(TimeBudget::Unlimited, |s| TimeBudget::seconds(s).unwrap()),
                target_gap_ratio: g,
            })
            .collect()
    }
}

/// Parameter that calibration adjusts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationParameter {
    /// Rational weight of a time-pressured policy.
    RationalWeight,
    /// Temperature of a bounded-rational policy.
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub parameter: CalibrationParameter,
    pub trials_per_eval: u32,
    pub tolerance: f64,
    pub iterations: u32,
    pub policy_seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            parameter: CalibrationParameter::RationalWeight,
            trials_per_eval: 50_000,
            tolerance: 0.02,
            iterations: 30,
            policy_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedValue {
    #[serde(rename = "time_budget_s")]
    pub time_budget: TimeBudget,
    pub target_gap_ratio: f64,
    pub achieved_gap_ratio: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub parameter: CalibrationParameter,
    pub fallback: FallbackMap,
    pub policy_seed: u64,
    pub values: Vec<CalibratedValue>,
}

impl Calibration {
    pub fn value(&self, budget: TimeBudget) -> Option<f64> {
        self.values.iter().find(|v| v.time_budget == budget).map(|v| v.value)
    }

    fn policy(&self, value: f64) -> PolicySpec {
        let kind = match self.parameter {
            CalibrationParameter::RationalWeight => PolicyKind::TimePressured {
                rational_weight: value,
                fallback: self.fallback,
            },
            CalibrationParameter::Temperature => PolicyKind::BoundedRational { temperature: value },
        };
        PolicySpec { kind, seed: self.policy_seed }
    }

    /// Plan using each calibrated value at its budget. Budgets that were
    /// not calibrated fall back to the pure heuristic.
    pub fn plan(&self) -> PolicyPlan {
        let default = match self.parameter {
            CalibrationParameter::RationalWeight => self.policy(0.0),
            CalibrationParameter::Temperature => self.policy(1.0),
        };
        PolicyPlan {
            default,
            per_budget: self
                .values
                .iter()
                .map(|v| BudgetPolicy {
                    time_budget: v.time_budget,
                    policy: self.policy(v.value),
                })
                .collect(),
        }
    }

    pub fn merge(mut self, other: Calibration) -> Calibration {
        for v in other.values {
            self.values.retain(|x| x.time_budget != v.time_budget);
            self.values.push(v);
        }
        self.values.sort_by_key(|v| v.time_budget);
        self
    }
}

fn drivers_for(trials_per_driver: usize, wanted: u32) -> u32 {
    (wanted as usize).div_ceil(trials_per_driver.max(1)) as u32
}

/// Fits the calibration parameter per target budget by bisection. Every
/// evaluation replays the same population and decision streams, so the
/// simulated gap is monotone in the parameter draw by draw.
pub fn calibrate(
    targets: &[CalibrationTarget],
    config: &SessionConfig,
    fallback: FallbackMap,
    payoffs: &PayoffSet,
    opts: &CalibrationOptions,
) -> Result<Calibration, SimError> {
    let mut cal = Calibration {
        parameter: opts.parameter,
        fallback,
        policy_seed: opts.policy_seed,
        values: Vec::new(),
    };
    for target in targets {
        let cfg = config.with_budgets(vec![target.time_budget]);
        let pop = Population::generate(&cfg, drivers_for(cfg.trial_count(), opts.trials_per_eval))?;
        let gap_at = |value: f64| -> Result<f64, SimError> {
            let plan = PolicyPlan::from(cal.policy(value));
            pop.run(&plan, payoffs)?.overall().gap_ratio.ok_or(SimError::Empty)
        };
        let value = match opts.parameter {
            CalibrationParameter::RationalWeight => bisect_weight(target, &gap_at, opts)?,
            CalibrationParameter::Temperature => bisect_temperature(target, &gap_at, opts)?,
        };
        let achieved = gap_at(value)?;
        if (achieved - target.target_gap_ratio).abs() > opts.tolerance {
            return Err(SimError::NotConverged {
                budget: target.time_budget,
                target: target.target_gap_ratio,
                achieved,
            });
        }
        cal.values.push(CalibratedValue {
            time_budget: target.time_budget,
            target_gap_ratio: target.target_gap_ratio,
            achieved_gap_ratio: achieved,
            value,
        });
    }
    Ok(cal)
}

// gap is non-increasing in the rational weight
fn bisect_weight(
    target: &CalibrationTarget,
    gap_at: &dyn Fn(f64) -> Result<f64, SimError>,
    opts: &CalibrationOptions,
) -> Result<f64, SimError> {
    let goal = target.target_gap_ratio;
    let max = gap_at(0.0)?;
    if goal > max {
        return Err(SimError::Unachievable {
            budget: target.time_budget,
            target: goal,
            max,
        });
    }
    if max <= goal {
        return Ok(0.0);
    }
    if gap_at(1.0)? >= goal {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..opts.iterations {
        let mid = 0.5 * (lo + hi);
        if gap_at(mid)? > goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

// gap is non-decreasing in the temperature; searched on a log scale
fn bisect_temperature(
    target: &CalibrationTarget,
    gap_at: &dyn Fn(f64) -> Result<f64, SimError>,
    opts: &CalibrationOptions,
) -> Result<f64, SimError> {
    let goal = target.target_gap_ratio;
    let (mut lo, mut hi) = (1e-4f64.ln(), 1e3f64.ln());
    let max = gap_at(hi.exp())?;
    if goal > max {
        return Err(SimError::Unachievable {
            budget: target.time_budget,
            target: goal,
            max,
        });
    }
    if gap_at(lo.exp())? >= goal {
        return Ok(lo.exp());
    }
    for _ in 0..opts.iterations {
        let mid = 0.5 * (lo + hi);
        if gap_at(mid.exp())? < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi.exp())
}

/// Calibrates the default targets: time-limited budgets on the
/// time-pressure preset, unlimited time on the accuracy preset.
pub fn calibrate_defaults(seed: u64, payoffs: &PayoffSet, opts: &CalibrationOptions) -> Result<Calibration, SimError> {
    calibrate_targets(&CalibrationTarget::defaults(), seed, payoffs, opts)
}

/// Like [`calibrate_defaults`] for arbitrary targets.
pub fn calibrate_targets(
    targets: &[CalibrationTarget],
    seed: u64,
    payoffs: &PayoffSet,
    opts: &CalibrationOptions,
) -> Result<Calibration, SimError> {
    let (limited, unlimited): (Vec<_>, Vec<_>) =
        targets.iter().partition(|t| t.time_budget != TimeBudget::Unlimited);
    let fallback = FallbackMap::default();
    let mut cal = calibrate(&limited, &SessionConfig::study3(seed), fallback, payoffs, opts)?;
    cal = cal.merge(calibrate(&unlimited, &SessionConfig::study2(seed), fallback, payoffs, opts)?);
    Ok(cal)
}

// ---------------------------------------------------------------- replication

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Study2,
    Study3,
    Study4,
}

impl Study {
    pub fn as_str(self) -> &'static str {
        match self {
            Study::Study2 => "study2",
            Study::Study3 => "study3",
            Study::Study4 => "study4",
        }
    }

    pub fn config(self, seed: u64) -> SessionConfig {
        match self {
            Study::Study2 => SessionConfig::study2(seed),
            Study::Study3 => SessionConfig::study3(seed),
            Study::Study4 => SessionConfig::study4(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOptions {
    pub seed: u64,
    /// Minimum number of trials behind each primary report cell.
    pub trials_per_cell: u32,
    /// Explicit plan; otherwise built from `calibration`. Policies are
    /// reseeded from `seed` either way.
    pub plan: Option<PolicyPlan>,
    /// Calibration to use; computed from the seed when absent.
    pub calibration: Option<Calibration>,
    pub alerts: AlertConfig,
    pub payoffs: PayoffSet,
}

impl ReplicateOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            trials_per_cell: 50_000,
            plan: None,
            calibration: None,
            alerts: AlertConfig::default(),
            payoffs: PayoffSet::presets(),
        }
    }
}

/// One long-format report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub study: String,
    pub group: String,
    pub task: Option<Task>,
    pub accuracy: Option<Accuracy>,
    pub time_budget: Option<TimeBudget>,
    pub n_trials: u64,
    pub aag_mean: f64,
    pub opg_mean: f64,
    pub aag_sd: f64,
    pub gap_ratio: Option<f64>,
    pub aag_opg_ratio: Option<f64>,
    pub follow_rate: f64,
    pub conservative_rate: f64,
    pub correct_ratio: f64,
    pub realized_mean: f64,
}

impl ReportRow {
    fn new(study: Study, group: &str, c: &CellStats) -> Self {
        Self::from_cell(study.as_str(), group, c)
    }

    pub fn from_cell(study: &str, group: &str, c: &CellStats) -> Self {
        Self {
            study: study.into(),
            group: group.into(),
            task: c.key.task,
            accuracy: c.key.accuracy,
            time_budget: c.key.time_budget,
            n_trials: c.n_trials,
            aag_mean: c.aag_mean,
            opg_mean: c.opg_mean,
            aag_sd: c.aag_sd,
            gap_ratio: c.gap_ratio,
            aag_opg_ratio: c.aag_opg_ratio(),
            follow_rate: c.follow_rate,
            conservative_rate: c.conservative_rate,
            correct_ratio: c.correct_ratio,
            realized_mean: c.realized_mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub pearson: f64,
    pub spearman: f64,
    pub n_cells: usize,
}

/// AAG against correct ratio over the per-task condition cells.
pub fn aag_truth_correlation(report: &RunReport) -> Result<Correlation, MetricsError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = report.task_cells().map(|c| (c.aag_mean, c.correct_ratio)).unzip();
    Ok(Correlation {
        pearson: metrics::pearson(&xs, &ys)?,
        spearman: metrics::spearman(&xs, &ys)?,
        n_cells: xs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub drivers: u32,
    pub mean_gap_ratio: Option<f64>,
    pub sd_gap_ratio: Option<f64>,
    pub aag_opg_ratio: Option<f64>,
    pub correct_ratio: f64,
    pub alerts_per_session: f64,
    pub correlation: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: Study,
    pub seed: u64,
    pub drivers: u32,
    pub plan: PolicyPlan,
    pub calibration: Option<Calibration>,
    pub groups: Vec<GroupSummary>,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_CSV_HEADER: [&str; 15] = [
    "study",
    "group",
    "task",
    "accuracy",
    "time_budget_s",
    "n_trials",
    "aag_mean",
    "opg_mean",
    "aag_sd",
    "gap_ratio",
    "aag_opg_ratio",
    "follow_rate",
    "conservative_rate",
    "correct_ratio",
    "realized_mean",
];

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map(fmt4).unwrap_or_default()
}

/// Writes rows in long format, metrics rounded to four decimals.
pub fn write_rows_csv<W: std::io::Write>(rows: &[ReportRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.study.clone(),
            r.group.clone(),
            r.task.map_or("all".into(), |t| t.to_string()),
            r.accuracy.map_or("all".into(), |a| a.to_string()),
            r.time_budget.map_or("all".into(), |b| b.to_string()),
            r.n_trials.to_string(),
            fmt4(r.aag_mean),
            fmt4(r.opg_mean),
            fmt4(r.aag_sd),
            opt4(r.gap_ratio),
            opt4(r.aag_opg_ratio),
            fmt4(r.follow_rate),
            fmt4(r.conservative_rate),
            fmt4(r.correct_ratio),
            fmt4(r.realized_mean),
        ])?;
    }
    w.flush()
}

impl StudyReport {
    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn row(&self, group: &str, task: Option<Task>, accuracy: Option<f64>, budget: Option<TimeBudget>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.group == group
                && r.task == task
                && r.accuracy.map(|a| a.value()) == accuracy
                && r.time_budget == budget
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        write_rows_csv(&self.rows, out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn needed_targets(study: Study) -> Vec<CalibrationTarget> {
    CalibrationTarget::defaults()
        .into_iter()
        .filter(|t| match study {
            Study::Study2 => t.time_budget == TimeBudget::Unlimited,
            Study::Study3 | Study::Study4 => t.time_budget != TimeBudget::Unlimited,
        })
        .collect()
}

/// Trials per driver behind the primary cell of each study: task ×
/// accuracy for the accuracy study, the budget for the time study, the whole
/// session for the intervention study.
fn primary_cell_trials(study: Study, config: &SessionConfig) -> usize {
    let per_cell = 2 * config.repetitions_per_cell as usize;
    match study {
        Study::Study2 => per_cell * config.time_budgets.len(),
        Study::Study3 => per_cell * config.tasks.len() * config.accuracy_levels.len(),
        Study::Study4 => config.trial_count(),
    }
}

pub fn replicate(study: Study, opts: &ReplicateOptions) -> Result<StudyReport, SimError> {
    let config = study.config(opts.seed);
    let (plan, calibration) = match (&opts.plan, &opts.calibration) {
        (Some(p), _) => (p.clone(), None),
        (None, Some(c)) => (c.plan(), Some(c.clone())),
        (None, None) => {
            let cal_opts = CalibrationOptions {
                trials_per_eval: opts.trials_per_cell,
                policy_seed: opts.seed,
                ..CalibrationOptions::default()
            };
            let c = calibrate_targets(&needed_targets(study), opts.seed, &opts.payoffs, &cal_opts)?;
            (c.plan(), Some(c))
        }
    };
    let plan = plan.with_seed(opts.seed);
    plan.validate()?;
    let drivers = drivers_for(primary_cell_trials(study, &config), opts.trials_per_cell);
    let pop = Population::generate(&config, drivers)?;

    let mut groups = Vec::new();
    let mut rows = Vec::new();
    let mut push = |name: &str, report: &RunReport, correlation: Option<Correlation>| {
        let overall = report.overall();
        let alerts = report.sessions.iter().map(|s| s.alerts_issued as f64).sum::<f64>();
        groups.push(GroupSummary {
            group: name.into(),
            drivers: report.drivers,
            mean_gap_ratio: report.mean_gap_ratio,
            sd_gap_ratio: report.sd_gap_ratio,
            aag_opg_ratio: overall.aag_opg_ratio(),
            correct_ratio: overall.correct_ratio,
            alerts_per_session: alerts / report.drivers as f64,
            correlation,
        });
        rows.extend(report.cells.iter().map(|c| ReportRow::new(study, name, c)));
    };

    match study {
        Study::Study2 | Study::Study3 => {
            let report = pop.run(&plan, &opts.payoffs)?;
            push("all", &report, aag_truth_correlation(&report).ok());
        }
        Study::Study4 => {
            for method in RemindMethod::ALL {
                let model = AlertedDriver {
                    plan: plan.clone(),
                    method,
                    alerts: opts.alerts,
                };
                let report = pop.run(&model, &opts.payoffs)?;
                push(method.as_str(), &report, None);
            }
        }
    }

    Ok(StudyReport {
        study,
        seed: opts.seed,
        drivers,
        plan,
        calibration,
        groups,
        rows,
    })
}
