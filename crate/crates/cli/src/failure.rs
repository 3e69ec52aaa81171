use takeover_core::scenario::ScenarioError;
use takeover_core::simulate::SimError;
use takeover_service::ServiceError;

/// A failed command. User errors exit with 1, internal ones with 2.
#[derive(Debug)]
pub struct Failure {
    internal: bool,
    kind: &'static str,
    message: String,
}

impl Failure {
    pub fn user(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            internal: false,
            kind,
            message: message.into(),
        }
    }

    pub fn internal(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            internal: true,
            kind,
            message: message.into(),
        }
    }

    pub fn from_scenario(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(m) => Self::user("ConfigError", m),
            ScenarioError::Io(m) => Self::user("IoError", m),
        }
    }

    pub fn from_sim(e: SimError) -> Self {
        let m = e.to_string();
        match e {
            SimError::Scenario(s) => Self::from_scenario(s),
            SimError::Policy(_) => Self::user("PolicyError", m),
            SimError::Intervention(_) => Self::user("InterventionError", m),
            SimError::NoDrivers => Self::user("ConfigError", m),
            SimError::Unachievable { .. } => Self::user("Unachievable", m),
            SimError::NotConverged { .. } => Self::internal("NotConverged", m),
            SimError::Metrics(_) | SimError::Empty => Self::internal("SimulationError", m),
        }
    }

    pub fn from_service(e: ServiceError) -> Self {
        let m = e.to_string();
        match e {
            ServiceError::Io(_) => Self::user("IoError", m),
            other => Self::user(other.kind(), m),
        }
    }

    pub fn code(&self) -> u8 {
        if self.internal {
            2
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind, "message": self.message }).to_string()
    }
}
