//! Expected-gain modelling of take-over decisions.
//!
//! A driver facing a take-over request picks one of two options while the
//! automated driving system (ADS) suggests one of them with an announced
//! accuracy `p`. Every (decision, suggestion) pair carries a perceived gain
//! or loss. The *actual achieved gain* (AAG) weights the payoff of the
//! driver's decision by `p` when the suggestion is right and by `1 - p` when
//! it is wrong. The *optimal perceived gain* (OPG) is the best AAG any
//! decision could have reached on the same trials.
//!
//! Layout:
//! - [`payoff`]: tasks, options and the measured perceived gain matrices.
//! - [`gain_model`]: AAG / OPG, derived task metrics, switch points.
//! - [`scenario`]: seeded trial stream generation mirroring the studies.
//! - [`policy`]: simulated driver decision rules and decision times.
//! - [`simulate`]: session runs, aggregation, calibration, replication.
//! - [`metrics`]: behaviour rates and correlation coefficients.
//! - [`intervention`]: deviation-triggered alerts and their modelled effect.
//! - [`summary`]: the scoring path shared by offline and live sessions.

pub mod gain_model;
pub mod intervention;
pub mod metrics;
pub mod payoff;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod simulate;
pub mod summary;

pub use gain_model::{Accuracy, GainBreakdown, GainError};
pub use payoff::{Choice, DecisionOption, PayoffError, PayoffMatrix, PayoffSet, Task};
pub use policy::{DecisionRecord, Fallback, FallbackMap, PolicyKind, PolicySpec};
pub use scenario::{SessionConfig, TimeBudget, TrialSpec};
