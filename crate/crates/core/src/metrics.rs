//! Behaviour rates and correlation coefficients.
//!
//! Rates count only completed records (those carrying a decision). A set
//! with no completed record has no rate; callers get `EmptyInput` rather
//! than a zero that would bias later averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::DecisionRecord;
use crate::scenario::GroundTruth;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no completed decisions")]
    EmptyInput,
    #[error("{records} records but {truths} ground truths")]
    LengthMismatch { records: usize, truths: usize },
    #[error("ground truth for trial {truth} paired with record for trial {record}")]
    TrialMismatch { record: u32, truth: u32 },
    #[error("correlation needs at least 3 paired values, got {0}")]
    TooFew(usize),
    #[error("input has zero variance")]
    DegenerateInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub follow_rate: f64,
    pub conservative_rate: f64,
    pub correct_ratio: f64,
    pub n_trials: usize,
}

fn rate<F: Fn(&DecisionRecord) -> Option<bool>>(records: &[DecisionRecord], f: F) -> Result<f64, MetricsError> {
    let (hits, n) = records
        .iter()
        .filter_map(f)
        .fold((0usize, 0usize), |(h, n), b| (h + b as usize, n + 1));
    if n == 0 {
        Err(MetricsError::EmptyInput)
    } else {
        Ok(hits as f64 / n as f64)
    }
}

pub fn follow_rate(records: &[DecisionRecord]) -> Result<f64, MetricsError> {
    rate(records, |r| r.followed)
}

pub fn anti_follow_rate(records: &[DecisionRecord]) -> Result<f64, MetricsError> {
    rate(records, |r| r.followed.map(|f| !f))
}

pub fn conservative_rate(records: &[DecisionRecord]) -> Result<f64, MetricsError> {
    rate(records, |r| r.conservative)
}

/// Fraction of decisions that picked the ground-truth better option.
pub fn correct_ratio(records: &[DecisionRecord], truths: &[GroundTruth]) -> Result<f64, MetricsError> {
    if records.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            records: records.len(),
            truths: truths.len(),
        });
    }
    if let Some((r, t)) = records.iter().zip(truths).find(|(r, t)| r.trial_id != t.trial_id) {
        return Err(MetricsError::TrialMismatch {
            record: r.trial_id,
            truth: t.trial_id,
        });
    }
    let (hits, n) = records
        .iter()
        .zip(truths)
        .filter_map(|(r, t)| r.decision.map(|d| d == t.better_option))
        .fold((0usize, 0usize), |(h, n), b| (h + b as usize, n + 1));
    if n == 0 {
        Err(MetricsError::EmptyInput)
    } else {
        Ok(hits as f64 / n as f64)
    }
}

pub fn rate_summary(records: &[DecisionRecord], truths: &[GroundTruth]) -> Result<RateSummary, MetricsError> {
    Ok(RateSummary {
        follow_rate: follow_rate(records)?,
        conservative_rate: conservative_rate(records)?,
        correct_ratio: correct_ratio(records, truths)?,
        n_trials: records.iter().filter(|r| r.is_complete()).count(),
    })
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch {
            records: xs.len(),
            truths: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(MetricsError::TooFew(xs.len()));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation: Pearson over average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}
