//! Deviation-triggered alerts.
//!
//! A remind method decides, per trial, whether the alarm sounds before the
//! suggestion. The AAG-based method targets the cells where drivers are
//! known to drift from OPG: short decision times (0.5 s and 1.5 s) on the
//! overtake and route selection tasks. The modelled effect of an alert on a
//! simulated driver is a boost of the time-pressured rational weight,
//! discounted for every alert in an unbroken run of alerted trials.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::payoff::Task;
use crate::policy::{PolicyKind, PolicySpec};
use crate::scenario::{TimeBudget, TrialSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error("urgency thresholds must be strictly ascending inside (0, 1): {0:?}")]
    ThresholdOrder([f64; 3]),
    #[error("alert effects apply to time-pressured policies only")]
    PolicyKind,
    #[error("boost must lie in [0, 1], got {0}")]
    Boost(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Urgency {
    None,
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Visual,
    Multimodal,
    None,
}

/// The alarm: three 0.2 s beeps at 2500 Hz separated by 0.2 s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeepPattern {
    pub beep_count: u32,
    pub beep_length_s: f64,
    pub gap_s: f64,
    pub frequency_hz: f64,
}

pub const ALARM: BeepPattern = BeepPattern {
    beep_count: 3,
    beep_length_s: 0.2,
    gap_s: 0.2,
    frequency_hz: 2500.0,
};

impl BeepPattern {
    pub fn total_duration_s(&self) -> f64 {
        self.beep_count as f64 * self.beep_length_s + (self.beep_count.saturating_sub(1)) as f64 * self.gap_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualPopup {
    pub refresh_hz: f64,
    pub content: String,
}

pub fn popup() -> VisualPopup {
    VisualPopup {
        refresh_hz: 3.0,
        content: "suggestion_with_icon".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertDirective {
    pub trigger: bool,
    pub urgency: Urgency,
    pub modality: Modality,
    pub waveform: BeepPattern,
    pub visual: VisualPopup,
}

impl AlertDirective {
    pub fn silent() -> Self {
        Self {
            trigger: false,
            urgency: Urgency::None,
            modality: Modality::None,
            waveform: ALARM,
            visual: popup(),
        }
    }

    fn alert(urgency: Urgency, modality: Modality) -> Self {
        Self {
            trigger: true,
            urgency,
            modality,
            waveform: ALARM,
            visual: popup(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemindMethod {
    /// Alerts only where deviation from OPG is expected.
    #[serde(rename = "aag", alias = "aag_based")]
    AagBased,
    #[serde(rename = "base", alias = "always_alert")]
    AlwaysAlert,
    #[serde(rename = "null", alias = "no_alert")]
    NoAlert,
}

impl RemindMethod {
    pub const ALL: [RemindMethod; 3] = [RemindMethod::AagBased, RemindMethod::AlwaysAlert, RemindMethod::NoAlert];

    pub fn as_str(self) -> &'static str {
        match self {
            RemindMethod::AagBased => "aag",
            RemindMethod::AlwaysAlert => "base",
            RemindMethod::NoAlert => "null",
        }
    }
}

/// Lower bounds of the Low, Medium and High bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UrgencyThresholds(pub [f64; 3]);

impl Default for UrgencyThresholds {
    fn default() -> Self {
        Self([0.10, 0.30, 0.50])
    }
}

impl UrgencyThresholds {
    pub fn validate(&self) -> Result<(), InterventionError> {
        let [a, b, c] = self.0;
        if a > 0.0 && a < b && b < c && c < 1.0 {
            Ok(())
        } else {
            Err(InterventionError::ThresholdOrder(self.0))
        }
    }
}

pub fn urgency_from_deviation(gap_ratio: f64, thresholds: &UrgencyThresholds) -> Result<Urgency, InterventionError> {
    thresholds.validate()?;
    let [low, medium, high] = thresholds.0;
    Ok(if gap_ratio >= high {
        Urgency::High
    } else if gap_ratio >= medium {
        Urgency::Medium
    } else if gap_ratio >= low {
        Urgency::Low
    } else {
        Urgency::None
    })
}

/// Deviation typically observed at a time budget; drives the urgency of
/// statically triggered alerts.
pub fn nominal_gap(budget: TimeBudget) -> f64 {
    match budget.as_millis() {
        Some(ms) if ms <= 500 => 0.488,
        Some(ms) if ms <= 1500 => 0.384,
        Some(ms) if ms <= 2500 => 0.244,
        _ => 0.154,
    }
}

/// Trial falls inside the 2×2 intervention matrix.
pub fn in_intervention_matrix(trial: &TrialSpec) -> bool {
    let short = matches!(trial.time_budget.as_millis(), Some(500) | Some(1500));
    let blind_follow_task = matches!(trial.task, Task::Overtake | Task::RouteSelection);
    short && blind_follow_task
}

fn static_urgency(trial: &TrialSpec) -> Urgency {
    urgency_from_deviation(nominal_gap(trial.time_budget), &UrgencyThresholds::default())
        .expect("default thresholds are ordered")
        .max(Urgency::Low)
}

/// Audio directive of a remind method for one trial.
pub fn should_alert(method: RemindMethod, trial: &TrialSpec) -> AlertDirective {
    let trigger = match method {
        RemindMethod::AagBased => in_intervention_matrix(trial),
        RemindMethod::AlwaysAlert => true,
        RemindMethod::NoAlert => false,
    };
    if trigger {
        AlertDirective::alert(static_urgency(trial), Modality::Audio)
    } else {
        AlertDirective::silent()
    }
}

/// Raises the rational weight of a time-pressured policy when the
/// directive fires.
pub fn apply_alert_effect(policy: &PolicySpec, directive: &AlertDirective, boost: f64) -> Result<PolicySpec, InterventionError> {
    if !(0.0..=1.0).contains(&boost) {
        return Err(InterventionError::Boost(boost));
    }
    match policy.kind {
        PolicyKind::TimePressured { rational_weight, fallback } => {
            let rational_weight = if directive.trigger {
                (rational_weight + boost).min(1.0)
            } else {
                rational_weight
            };
            Ok(PolicySpec {
                kind: PolicyKind::TimePressured { rational_weight, fallback },
                seed: policy.seed,
            })
        }
        _ => Err(InterventionError::PolicyKind),
    }
}

/// Display conditions of the multimodal pilot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayCondition {
    /// Visual and audio for urgent cases, audio only otherwise.
    AdaptiveMultimodal,
    /// Visual and audio for every alerted case.
    ConstantMultimodal,
    VisualOnly,
    NoDisplay,
}

impl DisplayCondition {
    pub fn modality(self, urgency: Urgency) -> Modality {
        match self {
            DisplayCondition::AdaptiveMultimodal if urgency >= Urgency::Medium => Modality::Multimodal,
            DisplayCondition::AdaptiveMultimodal => Modality::Audio,
            DisplayCondition::ConstantMultimodal => Modality::Multimodal,
            DisplayCondition::VisualOnly => Modality::Visual,
            DisplayCondition::NoDisplay => Modality::None,
        }
    }
}

/// Rational-weight boost per modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityBoosts {
    pub multimodal: f64,
    pub audio: f64,
    pub visual: f64,
}

impl Default for ModalityBoosts {
    fn default() -> Self {
        Self {
            multimodal: 0.6,
            audio: 0.5,
            visual: 0.3,
        }
    }
}

impl ModalityBoosts {
    pub fn uniform(b: f64) -> Self {
        Self {
            multimodal: b,
            audio: b,
            visual: b,
        }
    }

    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::Multimodal => self.multimodal,
            Modality::Audio => self.audio,
            Modality::Visual => self.visual,
            Modality::None => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlertConfig {
    pub boosts: ModalityBoosts,
    /// Multiplier applied to the boost for each preceding alert in a run.
    pub habituation: f64,
    pub thresholds: UrgencyThresholds,
    /// AAG-based alerts follow the running deviation instead of the static
    /// matrix once a deviation is known.
    pub dynamic: bool,
    /// `None` plays the audio alarm alone.
    pub display: Option<DisplayCondition>,
}

impl Default for AlertConfig {
    fn default() -> Self {
        Self {
            boosts: ModalityBoosts::default(),
            habituation: 0.85,
            thresholds: UrgencyThresholds::default(),
            dynamic: false,
            display: None,
        }
    }
}

/// Session-scoped alert state: the run length of consecutive alerts.
#[derive(Debug, Clone)]
pub struct AlertEngine {
    method: RemindMethod,
    config: AlertConfig,
    streak: u32,
}

/// A directive together with the boost it is modelled to deliver.
#[derive(Debug, Clone, PartialEq)]
pub struct Issued {
    pub directive: AlertDirective,
    pub effective_boost: f64,
}

impl AlertEngine {
    pub fn new(method: RemindMethod, config: AlertConfig) -> Result<Self, InterventionError> {
        config.thresholds.validate()?;
        Ok(Self {
            method,
            config,
            streak: 0,
        })
    }

    pub fn method(&self) -> RemindMethod {
        self.method
    }

    /// Directive for the next trial. `running_gap` is the deviation of the
    /// session so far, when one exists.
    pub fn issue(&mut self, trial: &TrialSpec, running_gap: Option<f64>) -> Issued {
        let mut directive = match (self.method, self.config.dynamic, running_gap) {
            (RemindMethod::AagBased, true, Some(gap)) => {
                let urgency = urgency_from_deviation(gap, &self.config.thresholds).expect("validated");
                if urgency > Urgency::None {
                    AlertDirective::alert(urgency, Modality::Audio)
                } else {
                    AlertDirective::silent()
                }
            }
            _ => should_alert(self.method, trial),
        };
        if directive.trigger {
            if let Some(display) = self.config.display {
                directive.modality = display.modality(directive.urgency);
            }
        }
        let effective_boost = if directive.trigger {
            let b = self.config.boosts.get(directive.modality) * self.config.habituation.powi(self.streak as i32);
            self.streak += 1;
            b
        } else {
            self.streak = 0;
            0.0
        };
        Issued {
            directive,
            effective_boost,
        }
    }
}
