//! Session event log. Each line of a session's JSONL file is one [`Event`];
//! replaying the lines in order rebuilds the session exactly.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use takeover_core::intervention::{AlertConfig, AlertDirective, BeepPattern, RemindMethod};
use takeover_core::{Choice, PayoffMatrix, SessionConfig, TimeBudget};

use crate::error::ServiceError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutMode {
    /// Late decisions are recorded as timeouts and sound the alarm.
    #[default]
    Strict,
    /// Every decision counts, however late.
    WaitForever,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub t_ms: u64,
    pub session_id: String,
    /// Effective config after preset resolution and live overrides.
    pub config: SessionConfig,
    pub remind_method: RemindMethod,
    pub timeout_mode: TimeoutMode,
    pub feedback: bool,
    pub alerts: AlertConfig,
    pub payoffs: Vec<PayoffMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialServed {
    pub t_ms: u64,
    pub trial_id: u32,
    pub index: u32,
    pub drive_phase_ms: u64,
    #[serde(rename = "time_budget_s")]
    pub time_budget: TimeBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertEmitted {
    pub t_ms: u64,
    pub trial_id: u32,
    pub directive: AlertDirective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMade {
    pub t_ms: u64,
    pub trial_id: u32,
    pub decision: Choice,
    /// Receipt time minus suggestion time, by the server clock.
    pub server_decision_time_ms: i64,
    pub client_decision_time_ms: Option<i64>,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedOut {
    pub t_ms: u64,
    pub trial_id: u32,
    /// Late decision, if one arrived at all.
    pub submitted: Option<Choice>,
    pub server_decision_time_ms: Option<i64>,
    pub client_decision_time_ms: Option<i64>,
    pub alarm: BeepPattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created(Created),
    TrialServed(TrialServed),
    AlertEmitted(AlertEmitted),
    Decision(DecisionMade),
    Timeout(TimedOut),
}

impl Event {
    pub fn t_ms(&self) -> u64 {
        match self {
            Event::Created(e) => e.t_ms,
            Event::TrialServed(e) => e.t_ms,
            Event::AlertEmitted(e) => e.t_ms,
            Event::Decision(e) => e.t_ms,
            Event::Timeout(e) => e.t_ms,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("events serialize");
        s.push('\n');
        s
    }
}

pub fn to_jsonl(events: &[Event]) -> String {
    events.iter().map(Event::to_line).collect()
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<Event>, ServiceError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| ServiceError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| ServiceError::Replay(format!("line {}: {e}", n + 1)))?;
        out.push(event);
    }
    Ok(out)
}
