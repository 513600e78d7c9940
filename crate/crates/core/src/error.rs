//! Crate-wide error with stable machine-readable kinds.

use thiserror::Error;

use crate::encoder::EncodeError;
use crate::harness::HarnessError;
use crate::llm::LlmError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::prompting::PromptError;
use crate::rollout::RolloutError;
use crate::sectors::SectorGenError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Sectors(#[from] SectorGenError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("invalid scenario: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("{path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Kebab-case kind and the most specific detail, as used in
    /// `error:<kind>:<detail>` lines.
    pub fn kind(&self) -> (&'static str, String) {
        match self {
            Error::Model(e) => ("invalid-graph", e.to_string()),
            Error::Encode(e) => match e {
                EncodeError::UnknownFix { fix, .. } => ("unknown-fix", fix.clone()),
                EncodeError::ShortRoute(r) => ("short-route", r.to_string()),
                EncodeError::DegenerateRoute { route, .. } => ("degenerate-route", route.to_string()),
                EncodeError::NonPlanarizable { first, second } => ("non-planarizable", format!("{first},{second}")),
                EncodeError::BadConfig(m) => ("bad-config", m.clone()),
            },
            Error::Rollout(e) => match e {
                RolloutError::UnknownRoute { route, .. } => ("unknown-route", route.to_string()),
                RolloutError::MissingGeometry(n) => ("missing-geometry", n.to_string()),
                RolloutError::UnknownAircraft(a) => ("unknown-aircraft", a.clone()),
            },
            Error::Sectors(e) => match e {
                SectorGenError::TargetUnreachable { seed, .. } => ("target-unreachable", seed.to_string()),
                SectorGenError::BadParams(m) => ("bad-params", m.clone()),
            },
            Error::Metrics(e) => match e {
                MetricsError::EmptyInput => ("empty-input", String::new()),
                MetricsError::ZeroBaseline(v) => ("zero-baseline", v.to_string()),
            },
            Error::Prompt(e) => ("prompt", e.to_string()),
            Error::Llm(e) => match e {
                LlmError::Auth { status } => ("auth", status.to_string()),
                LlmError::Transport { attempts, .. } => ("transport", attempts.to_string()),
                LlmError::MissingCredential(var) => ("missing-credential", var.clone()),
                LlmError::NoValidScenario(_) => ("no-valid-scenario", String::new()),
                LlmError::BudgetExhausted { cap, .. } => ("budget-exhausted", cap.to_string()),
                LlmError::Config(m) => ("bad-config", m.clone()),
            },
            Error::Harness(e) => match e {
                HarnessError::EmptyStore => ("empty-store", String::new()),
                HarnessError::Io { path, .. } => ("store-io", path.clone()),
                HarnessError::Sectors(SectorGenError::TargetUnreachable { seed, .. }) => {
                    ("target-unreachable", seed.to_string())
                }
                other => ("harness", other.to_string()),
            },
            Error::Schema(issues) => ("schema", issues.first().cloned().unwrap_or_default()),
            Error::Input { path, .. } => ("input", path.clone()),
            Error::Io(e) => ("io", e.to_string()),
        }
    }

    /// Single line `error:<kind>:<detail>`, newlines flattened.
    pub fn line(&self) -> String {
        let (kind, detail) = self.kind();
        format!("error:{kind}:{}", detail.replace(['\n', '\r'], " "))
    }
}
