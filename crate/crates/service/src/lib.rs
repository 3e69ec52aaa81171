//! HTTP service hosting live take-over sessions.
//!
//! A session serves a pre-generated trial stream one trial at a time,
//! times decisions with the server clock, emits alert directives, and
//! appends every state change to a JSONL log that replays to the same
//! summary.
//!
//! | Method | Path | Body |
//! |---|---|---|
//! | POST | `/sessions` | [`SessionRequest`] |
//! | POST | `/sessions/{id}/advance` | none |
//! | POST | `/sessions/{id}/decision` | [`DecisionRequest`] |
//! | GET | `/sessions/{id}/summary` | none |
//! | GET | `/sessions/{id}/log` | none |

pub mod clock;
pub mod error;
pub mod events;
pub mod http;
pub mod session;
pub mod store;

pub use clock::{Clock, ManualClock, MonotonicClock};
pub use error::ServiceError;
pub use events::{Event, TimeoutMode};
pub use http::{router, serve};
pub use session::{Ack, DecisionRequest, LiveSession, LiveState, LiveSummary, SessionRequest, TrialPayload};
pub use store::{replay_file, SessionStore, DATA_DIR_ENV};
