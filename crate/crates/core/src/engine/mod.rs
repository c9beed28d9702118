//! Campaign execution: sequence planning, instantiation, sending, intake.

mod campaign;
mod config;
mod execute;
mod instantiate;
mod request;
mod sequence;

pub use campaign::{
    read_exchange_log, replay_allowlist, replay_executor, run_campaign, run_campaign_with, CampaignOutput, CampaignSummary,
    EXCHANGE_LOG, SUMMARY_FILE,
};
pub use config::{CampaignConfig, CheckerFlags, ConfigError, TokenConfig, TokenMode, KEY_ENV};
pub use execute::{
    extract_handle, extract_handles, origin_of, Allowlist, ExecutedExchange, Executor, Outcome, RateLimiter,
    TokenSpec,
};
pub use instantiate::{draft, instantiate, stable_draft, Choice, DEFAULT_OPTIONAL_PROBABILITY};
pub use request::{
    encode_component, plain_text, render, render_path, wire_values, ConcreteRequest, Draft, DraftBody, DraftParam,
    Provenance, ValueSource,
};
pub use sequence::{Binding, Planner, Step, TestSequence};

use crate::grammar::GrammarError;
use crate::oauth::TokenError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{template}: no binding for consumed slot {slot:?}")]
    MissingBinding { template: String, slot: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("exchange log: {0}")]
    Log(#[from] serde_json::Error),
}
