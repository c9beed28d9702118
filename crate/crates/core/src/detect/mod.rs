//! Bug classification, bucketing, reports and replay.

mod fingerprint;
mod replay;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fingerprint::{body_fingerprint, normalize_body};
pub use replay::{rebase_replay, run_replay, ReplayOutcome};
pub use report::{
    bucket_dir_name, detect, load_reports, write_report, BucketKey, BugReport, DetectOptions, ReplayFile, ReplayStep,
    REPLAY_VERSION,
};

use crate::checkers::{status_mapping_checker, DeclaredStatuses, StatusFindingKind, CROSS_SERVICE_TOKEN};
use crate::engine::ExecutedExchange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BugClass {
    UnhandledError500,
    StatusMappingViolation,
    AuthzScopeBypass,
    UndeclaredStatus,
}

impl BugClass {
    pub const ALL: [BugClass; 4] = [
        BugClass::UnhandledError500,
        BugClass::StatusMappingViolation,
        BugClass::AuthzScopeBypass,
        BugClass::UndeclaredStatus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BugClass::UnhandledError500 => "UnhandledError500",
            BugClass::StatusMappingViolation => "StatusMappingViolation",
            BugClass::AuthzScopeBypass => "AuthzScopeBypass",
            BugClass::UndeclaredStatus => "UndeclaredStatus",
        }
    }
}

impl fmt::Display for BugClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BugClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BugClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown bug class {s:?}"))
    }
}

/// What the classifier needs to know about the operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifyContext {
    pub declared: DeclaredStatuses,
    /// Scope protecting the operation.
    pub auth_scope: Option<String>,
    pub status_mapping: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub class: BugClass,
    /// The contract the exchange violated.
    pub expectation: String,
}

/// First matching rule wins: cross-service acceptance, status mapping
/// (when enabled), then undeclared 500.
pub fn classify(ctx: &ClassifyContext, exchange: &ExecutedExchange) -> Option<Classification> {
    if exchange.status == 0 {
        return None;
    }
    if exchange.checker.as_deref() == Some(CROSS_SERVICE_TOKEN) && exchange.is_success() {
        let covered = match (&exchange.token_claims, &ctx.auth_scope) {
            (Some(claims), Some(scope)) => claims.covers(scope),
            _ => true,
        };
        if !covered {
            return Some(Classification {
                class: BugClass::AuthzScopeBypass,
                expectation: format!(
                    "token scoped to {:?} must not be accepted by {}",
                    exchange.token_claims.as_ref().map(|c| c.scope.as_str()).unwrap_or_default(),
                    ctx.auth_scope.as_deref().unwrap_or_default()
                ),
            });
        }
    }
    let unhandled = || Classification {
        class: BugClass::UnhandledError500,
        expectation: "no undeclared 500 Internal Server Error".into(),
    };
    if ctx.status_mapping {
        if let Some(f) = status_mapping_checker(exchange.status, &exchange.request.provenance.path_sources, &ctx.declared) {
            return Some(match f.kind {
                StatusFindingKind::ErrorInsteadOfNotFound => Classification {
                    class: BugClass::StatusMappingViolation,
                    expectation: f.expectation,
                },
                StatusFindingKind::Undeclared if exchange.status == 500 => unhandled(),
                StatusFindingKind::Undeclared => Classification {
                    class: BugClass::UndeclaredStatus,
                    expectation: f.expectation,
                },
            });
        }
    }
    (exchange.status == 500 && !ctx.declared.declares(500)).then(unhandled)
}
