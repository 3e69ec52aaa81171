//! Session scoring shared by the offline simulator and live sessions. Both
//! paths go through [`summarize`], so equal inputs give bit-identical
//! summaries.

use serde::{Deserialize, Serialize};

use crate::metrics;
use crate::policy::DecisionRecord;
use crate::scenario::{GroundTruth, TrialSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub aag: Option<f64>,
    pub opg: Option<f64>,
    pub gap_ratio: Option<f64>,
    pub follow_rate: Option<f64>,
    pub conservative_rate: Option<f64>,
    pub correct_ratio: Option<f64>,
    pub n_trials: usize,
    pub n_completed: usize,
    pub n_timeouts: usize,
    pub records: Vec<DecisionRecord>,
}

/// `1 - aag / opg`, defined for positive OPG.
pub fn gap_ratio(aag: f64, opg: f64) -> Option<f64> {
    (opg > 0.0).then(|| 1.0 - aag / opg)
}

/// AAG and OPG over the completed records. Records without a decision are
/// excluded from both sums.
pub fn gain_totals(records: &[DecisionRecord]) -> Option<(f64, f64)> {
    let mut any = false;
    let (mut aag, mut opg) = (0.0, 0.0);
    for r in records {
        if let Some(g) = r.expected_gain {
            any = true;
            aag += g;
            opg += r.optimal_gain;
        }
    }
    any.then_some((aag, opg))
}

/// Scores `records` against the session's trials. `n_trials` is the
/// session length; records may cover a prefix of it.
pub fn summarize(trials: &[TrialSpec], records: &[DecisionRecord]) -> SessionSummary {
    let truths: Vec<GroundTruth> = records
        .iter()
        .map(|r| {
            trials
                .iter()
                .find(|t| t.trial_id == r.trial_id)
                .map(|t| t.ground_truth)
                .expect("record refers to a trial of this session")
        })
        .collect();
    let totals = gain_totals(records);
    SessionSummary {
        aag: totals.map(|t| t.0),
        opg: totals.map(|t| t.1),
        gap_ratio: totals.and_then(|(a, o)| gap_ratio(a, o)),
        follow_rate: metrics::follow_rate(records).ok(),
        conservative_rate: metrics::conservative_rate(records).ok(),
        correct_ratio: metrics::correct_ratio(records, &truths).ok(),
        n_trials: trials.len(),
        n_completed: records.iter().filter(|r| r.is_complete()).count(),
        n_timeouts: records.iter().filter(|r| !r.is_complete()).count(),
        records: records.to_vec(),
    }
}
