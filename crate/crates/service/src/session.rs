//! One live session: a pre-generated trial stream played by a human.
//!
//! Every state change is an [`Event`] passed through [`LiveSession::apply`],
//! both when serving requests and when replaying a log, so a replayed log
//! reproduces the session and its summary exactly.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use takeover_core::intervention::{AlertConfig, AlertDirective, AlertEngine, BeepPattern, RemindMethod, ALARM};
use takeover_core::scenario::generate_session;
use takeover_core::summary::{gain_totals, gap_ratio, summarize, SessionSummary};
use takeover_core::{Choice, DecisionRecord, PayoffMatrix, PayoffSet, SessionConfig, Task, TimeBudget, TrialSpec};

use crate::error::ServiceError;
use crate::events::{AlertEmitted, Created, DecisionMade, Event, TimedOut, TimeoutMode, TrialServed};

/// Drive-phase range of live sessions, in seconds.
pub const LIVE_DRIVE_PHASE_S: [f64; 2] = [2.0, 5.0];

/// Largest tolerated gap between client and server decision times.
pub const DIVERGENCE_LIMIT_MS: i64 = 150;

fn no_alert() -> RemindMethod {
    RemindMethod::NoAlert
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    /// Preset name or a full session config object.
    pub config: serde_json::Value,
    #[serde(default = "no_alert")]
    pub remind_method: RemindMethod,
    /// Overrides the config seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub timeout_mode: TimeoutMode,
    /// Overrides the live drive-phase range.
    #[serde(default)]
    pub drive_phase_s: Option<[f64; 2]>,
    /// Return per-trial gains in decision acks.
    #[serde(default)]
    pub feedback: bool,
    #[serde(default)]
    pub alerts: Option<AlertConfig>,
    /// Replacement matrices; tasks not listed keep their presets.
    #[serde(default)]
    pub payoffs: Vec<PayoffMatrix>,
}

impl SessionRequest {
    pub fn preset(name: &str, remind_method: RemindMethod) -> Self {
        Self {
            config: serde_json::Value::String(name.to_string()),
            remind_method,
            seed: None,
            timeout_mode: TimeoutMode::Strict,
            drive_phase_s: None,
            feedback: false,
            alerts: None,
            payoffs: Vec::new(),
        }
    }

    fn resolve_config(&self) -> Result<SessionConfig, ServiceError> {
        let mut config = match &self.config {
            serde_json::Value::String(name) => SessionConfig::preset(name, self.seed.unwrap_or(0)).ok_or_else(|| {
                ServiceError::Config(format!(
                    "unknown preset {name:?}, expected one of {}",
                    SessionConfig::PRESETS.join(", ")
                ))
            })?,
            v => serde_json::from_value(v.clone()).map_err(|e| ServiceError::Config(e.to_string()))?,
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.drive_phase_s = self.drive_phase_s.unwrap_or(LIVE_DRIVE_PHASE_S);
        config.validate().map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub trial_id: u32,
    /// Choice name or option label; `null` reports a client-side timeout.
    pub decision: Option<String>,
    /// Decision time measured by the client.
    #[serde(default)]
    pub decision_time_ms: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LiveState {
    Created,
    InTrial,
    AwaitingDecision,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionView {
    pub choice: Choice,
    pub label: String,
    pub conservative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPayload {
    pub session_id: String,
    pub trial_id: u32,
    pub index: u32,
    pub total: u32,
    pub task: Task,
    pub task_text: String,
    pub options: [OptionView; 2],
    pub announced_accuracy: f64,
    pub suggestion: Choice,
    pub suggestion_label: String,
    #[serde(rename = "time_budget_s")]
    pub time_budget: TimeBudget,
    pub time_budget_ms: Option<u32>,
    pub drive_phase_ms: u64,
    pub served_at_ms: u64,
    /// Server time after which a strict session records a timeout.
    pub deadline_ms: Option<u64>,
    pub alert: AlertDirective,
    pub environment_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub expected_gain: f64,
    pub optimal_gain: f64,
    pub optimal_decision: Choice,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub trial_id: u32,
    pub timeout: bool,
    pub decision: Option<Choice>,
    pub server_decision_time_ms: i64,
    pub client_decision_time_ms: Option<i64>,
    pub divergent: bool,
    pub alarm: Option<BeepPattern>,
    pub feedback: Option<Feedback>,
    pub remaining: u32,
    pub state: LiveState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSummary {
    pub session_id: String,
    pub state: LiveState,
    pub remind_method: RemindMethod,
    pub timeout_mode: TimeoutMode,
    /// Trials whose client and server decision times differ by more than
    /// the divergence limit.
    pub divergent_trials: Vec<u32>,
    #[serde(flatten)]
    pub summary: SessionSummary,
}

#[derive(Debug, Clone)]
struct Pending {
    index: usize,
    served_ms: u64,
    drive_phase_ms: u64,
    directive: AlertDirective,
}

impl Pending {
    fn presented_ms(&self) -> u64 {
        self.served_ms + self.drive_phase_ms
    }
}

#[derive(Debug, Clone)]
pub struct LiveSession {
    created: Created,
    trials: Vec<TrialSpec>,
    payoffs: PayoffSet,
    engine: AlertEngine,
    records: Vec<DecisionRecord>,
    resolved: HashSet<u32>,
    cursor: usize,
    pending: Option<Pending>,
    divergent: Vec<u32>,
    events: Vec<Event>,
}

fn drive_phase_ms(trial: &TrialSpec) -> u64 {
    (trial.drive_phase_s * 1000.0).round() as u64
}

impl LiveSession {
    pub fn open(session_id: String, request: &SessionRequest, t_ms: u64) -> Result<Self, ServiceError> {
        let config = request.resolve_config()?;
        let payoffs = request.payoffs.iter().cloned().fold(PayoffSet::presets(), PayoffSet::with);
        Self::from_created(Created {
            t_ms,
            session_id,
            config,
            remind_method: request.remind_method,
            timeout_mode: request.timeout_mode,
            feedback: request.feedback,
            alerts: request.alerts.unwrap_or_default(),
            payoffs: payoffs.iter().cloned().collect(),
        })
    }

    fn from_created(created: Created) -> Result<Self, ServiceError> {
        let trials = generate_session(&created.config).map_err(|e| ServiceError::Config(e.to_string()))?;
        let payoffs = created.payoffs.iter().cloned().fold(PayoffSet::presets(), PayoffSet::with);
        let engine =
            AlertEngine::new(created.remind_method, created.alerts).map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Self {
            events: vec![Event::Created(created.clone())],
            created,
            trials,
            payoffs,
            engine,
            records: Vec::new(),
            resolved: HashSet::new(),
            cursor: 0,
            pending: None,
            divergent: Vec::new(),
        })
    }

    /// Rebuilds a session from its event log.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self, ServiceError> {
        let mut it = events.into_iter();
        let Some(Event::Created(created)) = it.next() else {
            return Err(ServiceError::Replay("log must start with a created event".into()));
        };
        let mut session = Self::from_created(created)?;
        for e in it {
            session.apply(e)?;
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.created.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.created.config
    }

    pub fn trials(&self) -> &[TrialSpec] {
        &self.trials
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn state(&self) -> LiveState {
        if self.pending.is_some() {
            LiveState::AwaitingDecision
        } else if self.cursor >= self.trials.len() {
            LiveState::Finished
        } else if self.cursor == 0 {
            LiveState::Created
        } else {
            LiveState::InTrial
        }
    }

    fn deadline(&self, p: &Pending) -> Option<u64> {
        match self.created.timeout_mode {
            TimeoutMode::Strict => self.trials[p.index]
                .time_budget
                .as_millis()
                .map(|b| p.presented_ms() + u64::from(b)),
            TimeoutMode::WaitForever => None,
        }
    }

    /// Serves the next trial. In strict mode a pending trial whose deadline
    /// has passed is closed as a timeout first.
    pub fn advance(&mut self, now_ms: u64) -> Result<TrialPayload, ServiceError> {
        if let Some(p) = &self.pending {
            let trial_id = self.trials[p.index].trial_id;
            match self.deadline(p) {
                Some(deadline) if now_ms > deadline => self.apply(Event::Timeout(TimedOut {
                    t_ms: now_ms,
                    trial_id,
                    submitted: None,
                    server_decision_time_ms: None,
                    client_decision_time_ms: None,
                    alarm: ALARM,
                }))?,
                _ => return Err(ServiceError::OutOfOrder(format!("trial {trial_id} is awaiting a decision"))),
            }
        }
        let Some(trial) = self.trials.get(self.cursor) else {
            return Err(ServiceError::SessionFinished);
        };
        let served = TrialServed {
            t_ms: now_ms,
            trial_id: trial.trial_id,
            index: self.cursor as u32,
            drive_phase_ms: drive_phase_ms(trial),
            time_budget: trial.time_budget,
        };
        self.apply(Event::TrialServed(served))?;
        let p = self.pending.as_ref().expect("just served");
        if p.directive.trigger {
            let alert = AlertEmitted {
                t_ms: now_ms,
                trial_id: self.trials[p.index].trial_id,
                directive: p.directive.clone(),
            };
            self.apply(Event::AlertEmitted(alert))?;
        }
        Ok(self.payload())
    }

    fn payload(&self) -> TrialPayload {
        let p = self.pending.as_ref().expect("a trial is pending");
        let t = &self.trials[p.index];
        let m = self.payoffs.get(t.task);
        let labels = t.task.labels();
        let view = |c: Choice| OptionView {
            choice: c,
            label: labels[c.index()].to_string(),
            conservative: c == m.conservative(),
        };
        TrialPayload {
            session_id: self.id().to_string(),
            trial_id: t.trial_id,
            index: p.index as u32,
            total: self.trials.len() as u32,
            task: t.task,
            task_text: t.task.description().to_string(),
            options: [view(Choice::First), view(Choice::Second)],
            announced_accuracy: t.accuracy_p.value(),
            suggestion: t.suggestion,
            suggestion_label: labels[t.suggestion.index()].to_string(),
            time_budget: t.time_budget,
            time_budget_ms: t.time_budget.as_millis(),
            drive_phase_ms: p.drive_phase_ms,
            served_at_ms: p.served_ms,
            deadline_ms: self.deadline(p),
            alert: p.directive.clone(),
            environment_tag: t.environment_tag.clone(),
        }
    }

    pub fn submit(&mut self, now_ms: u64, req: &DecisionRequest) -> Result<Ack, ServiceError> {
        let id = req.trial_id;
        let Some(index) = self.trials.iter().position(|t| t.trial_id == id) else {
            return Err(ServiceError::UnknownTrial(id));
        };
        if self.resolved.contains(&id) {
            return Err(ServiceError::DuplicateSubmission(id));
        }
        let Some(p) = self.pending.as_ref().filter(|p| p.index == index) else {
            return Err(ServiceError::OutOfOrder(format!("trial {id} has not been served")));
        };
        let trial = &self.trials[index];
        let decision = req
            .decision
            .as_deref()
            .map(|text| {
                trial.task.parse_choice(text).ok_or_else(|| {
                    ServiceError::InvalidDecision(format!("{text:?} is not an option of {}", trial.task))
                })
            })
            .transpose()?;
        let server_ms = now_ms as i64 - p.presented_ms() as i64;
        let late = self.deadline(p).is_some_and(|d| now_ms > d);
        let divergent = req
            .decision_time_ms
            .is_some_and(|c| (c - server_ms).abs() > DIVERGENCE_LIMIT_MS);
        let event = match decision {
            Some(d) if !late => Event::Decision(DecisionMade {
                t_ms: now_ms,
                trial_id: id,
                decision: d,
                server_decision_time_ms: server_ms,
                client_decision_time_ms: req.decision_time_ms,
                divergent,
            }),
            _ => Event::Timeout(TimedOut {
                t_ms: now_ms,
                trial_id: id,
                submitted: decision,
                server_decision_time_ms: Some(server_ms),
                client_decision_time_ms: req.decision_time_ms,
                alarm: ALARM,
            }),
        };
        let timeout = matches!(event, Event::Timeout(_));
        let better = trial.ground_truth.better_option;
        self.apply(event)?;
        let record = self.records.last().expect("just recorded");
        let feedback = (self.created.feedback && !timeout).then(|| Feedback {
            expected_gain: record.expected_gain.expect("complete"),
            optimal_gain: record.optimal_gain,
            optimal_decision: record.optimal_decision,
            correct: record.decision == Some(better),
        });
        Ok(Ack {
            trial_id: id,
            timeout,
            decision: record.decision,
            server_decision_time_ms: server_ms,
            client_decision_time_ms: req.decision_time_ms,
            divergent,
            alarm: timeout.then_some(ALARM),
            feedback,
            remaining: (self.trials.len() - self.records.len()) as u32,
            state: self.state(),
        })
    }

    fn pending_for(&self, trial_id: u32) -> Result<Pending, ServiceError> {
        self.pending
            .clone()
            .filter(|p| self.trials[p.index].trial_id == trial_id)
            .ok_or_else(|| ServiceError::Replay(format!("trial {trial_id} is not pending")))
    }

    fn record(&mut self, p: &Pending, decision: Option<Choice>, time_ms: Option<i64>) {
        let trial = &self.trials[p.index];
        let seconds = time_ms.map(|ms| ms.max(0) as f64 / 1000.0);
        let record = DecisionRecord::score(trial, self.payoffs.get(trial.task), decision, seconds);
        self.resolved.insert(trial.trial_id);
        self.records.push(record);
        self.pending = None;
    }

    /// Applies one event and appends it to the log.
    pub fn apply(&mut self, event: Event) -> Result<(), ServiceError> {
        match &event {
            Event::Created(_) => return Err(ServiceError::Replay("duplicate created event".into())),
            Event::TrialServed(e) => {
                if self.pending.is_some() {
                    return Err(ServiceError::Replay(format!("trial {} served while another is pending", e.trial_id)));
                }
                let trial = self
                    .trials
                    .get(self.cursor)
                    .filter(|t| t.trial_id == e.trial_id && e.index as usize == self.cursor)
                    .ok_or_else(|| ServiceError::Replay(format!("trial {} served out of order", e.trial_id)))?;
                let running_gap = gain_totals(&self.records).and_then(|(a, o)| gap_ratio(a, o));
                let issued = self.engine.issue(trial, running_gap);
                self.pending = Some(Pending {
                    index: self.cursor,
                    served_ms: e.t_ms,
                    drive_phase_ms: e.drive_phase_ms,
                    directive: issued.directive,
                });
                self.cursor += 1;
            }
            Event::AlertEmitted(e) => {
                let p = self.pending_for(e.trial_id)?;
                if p.directive != e.directive {
                    return Err(ServiceError::Replay(format!("alert for trial {} does not match", e.trial_id)));
                }
            }
            Event::Decision(e) => {
                let p = self.pending_for(e.trial_id)?;
                if e.divergent {
                    self.divergent.push(e.trial_id);
                }
                self.record(&p, Some(e.decision), Some(e.server_decision_time_ms));
            }
            Event::Timeout(e) => {
                let p = self.pending_for(e.trial_id)?;
                self.record(&p, None, e.server_decision_time_ms);
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn summary(&self) -> LiveSummary {
        LiveSummary {
            session_id: self.id().to_string(),
            state: self.state(),
            remind_method: self.created.remind_method,
            timeout_mode: self.created.timeout_mode,
            divergent_trials: self.divergent.clone(),
            summary: summarize(&self.trials, &self.records),
        }
    }
}
