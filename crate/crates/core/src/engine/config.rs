use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::execute::{origin_of, Allowlist};
use super::instantiate::DEFAULT_OPTIONAL_PROBABILITY;
use crate::grammar::Overlay;
use crate::oauth::TokenSource;

/// Environment variable holding the shared secret for `mint` tokens.
pub const KEY_ENV: &str = "SBIFUZZ_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid campaign config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckerFlags {
    pub payload_body: bool,
    pub optional_param_omission: bool,
    pub malformed_value: bool,
    pub cross_service_token: bool,
    pub status_mapping: bool,
    /// Upper bound on variants per checker per base request.
    pub variant_cap: usize,
}

impl Default for CheckerFlags {
    fn default() -> Self {
        CheckerFlags {
            payload_body: true,
            optional_param_omission: true,
            malformed_value: true,
            cross_service_token: true,
            status_mapping: true,
            variant_cap: 64,
        }
    }
}

impl CheckerFlags {
    pub fn none() -> Self {
        CheckerFlags {
            payload_body: false,
            optional_param_omission: false,
            malformed_value: false,
            cross_service_token: false,
            status_mapping: false,
            variant_cap: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    #[default]
    None,
    File,
    Fetch,
    Mint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenConfig {
    pub mode: TokenMode,
    /// Token endpoint URL for `fetch`.
    pub endpoint: Option<String>,
    /// Token file for `file`.
    pub path: Option<PathBuf>,
    pub nf_instance_id: String,
    pub nf_type: String,
    /// Shared secret for `mint`; falls back to `SBIFUZZ_KEY`.
    pub key: Option<String>,
    pub issuer_id: String,
    pub ttl: u64,
}

impl Default for TokenConfig {
    fn default() -> Self {
        TokenConfig {
            mode: TokenMode::None,
            endpoint: None,
            path: None,
            nf_instance_id: "6d7a9a4c-4f1e-4b4e-9c55-0f3c6a9e7b11".into(),
            nf_type: "AMF".into(),
            key: None,
            issuer_id: "nrf-local".into(),
            ttl: 3600,
        }
    }
}

impl TokenConfig {
    pub fn source(&self) -> Result<TokenSource, ConfigError> {
        let missing = |what: &str| ConfigError::Invalid(format!("token mode {:?} needs {what}", self.mode));
        Ok(match self.mode {
            TokenMode::None => TokenSource::None,
            TokenMode::File => TokenSource::File {
                path: self.path.clone().ok_or_else(|| missing("path"))?,
            },
            TokenMode::Fetch => TokenSource::Fetch {
                endpoint: self.endpoint.clone().ok_or_else(|| missing("endpoint"))?,
                nf_instance_id: self.nf_instance_id.clone(),
                nf_type: self.nf_type.clone(),
            },
            TokenMode::Mint => {
                let key = self
                    .key
                    .clone()
                    .or_else(|| std::env::var(KEY_ENV).ok())
                    .ok_or_else(|| missing(&format!("key or {KEY_ENV}")))?;
                TokenSource::Mint {
                    key: key.into_bytes(),
                    issuer_id: self.issuer_id.clone(),
                    nf_instance_id: self.nf_instance_id.clone(),
                    nf_type: self.nf_type.clone(),
                    ttl: self.ttl,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub grammar: PathBuf,
    /// Base URLs that may be contacted; compared by origin.
    pub targets: Vec<String>,
    /// Maximum number of exchanges.
    pub budget: u64,
    pub max_sequence_length: usize,
    pub seed: u64,
    pub workers: usize,
    pub optional_probability: f64,
    /// Requests per second per origin.
    pub rate_limit: Option<f64>,
    /// Retained prefixes extended per level.
    pub max_prefixes_per_level: usize,
    pub checkers: CheckerFlags,
    pub token: TokenConfig,
    /// Scopes the cross-service checker mints tokens for besides the
    /// grammar's own.
    pub extra_scopes: Vec<String>,
    /// Merged over the grammar's overlay, name by name.
    pub overlay: Overlay,
    /// Record per-exchange latency (makes logs run-dependent).
    pub log_latency: bool,
    pub timeout_ms: u64,
    /// Extra attempts after a transport failure.
    pub retries: u32,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            grammar: PathBuf::from("grammar.json"),
            targets: Vec::new(),
            budget: 20_000,
            max_sequence_length: 4,
            seed: 0,
            workers: 1,
            optional_probability: DEFAULT_OPTIONAL_PROBABILITY,
            rate_limit: None,
            max_prefixes_per_level: 256,
            checkers: CheckerFlags::default(),
            token: TokenConfig::default(),
            extra_scopes: Vec::new(),
            overlay: Overlay::new(),
            log_latency: false,
            timeout_ms: 5_000,
            retries: 1,
        }
    }
}

impl CampaignConfig {
    /// Reads YAML or JSON; relative paths are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<CampaignConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config: CampaignConfig = serde_yaml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.grammar = base.join(&config.grammar);
        if let Some(p) = &config.token.path {
            config.token.path = Some(base.join(p));
        }
        Ok(config)
    }

    pub fn allowlist(&self) -> Allowlist {
        Allowlist::new(&self.targets)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.budget == 0 {
            return invalid("budget must be > 0".into());
        }
        if self.max_sequence_length == 0 {
            return invalid("max_sequence_length must be ≥ 1".into());
        }
        if self.workers == 0 {
            return invalid("workers must be ≥ 1".into());
        }
        if !(0.0..=1.0).contains(&self.optional_probability) {
            return invalid(format!("optional_probability {} outside [0, 1]", self.optional_probability));
        }
        if self.targets.is_empty() {
            return invalid("targets must list at least one base URL".into());
        }
        if let Some(bad) = self.targets.iter().find(|t| origin_of(t).is_none()) {
            return invalid(format!("target {bad:?} is not an absolute URL"));
        }
        if self.token.mode == TokenMode::Fetch {
            if let Some(endpoint) = &self.token.endpoint {
                if !self.allowlist().allows(endpoint) {
                    return invalid(format!("token endpoint {endpoint} is not in targets"));
                }
            }
        }
        self.token.source().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaml_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("campaign.yaml");
        std::fs::write(
            &path,
            "grammar: g/grammar.json\ntargets: [\"http://127.0.0.1:8001\"]\nbudget: 10\nseed: 5\n\
             checkers: {payload_body: false}\noverlay: {supi: [\"imsi-208930000000003\"]}\n",
        )
        .unwrap();
        let c = CampaignConfig::load(&path).unwrap();
        assert_eq!(c.grammar, dir.path().join("g/grammar.json"));
        assert_eq!(c.max_sequence_length, 4);
        assert_eq!(c.optional_probability, 0.75);
        assert!(!c.checkers.payload_body && c.checkers.malformed_value);
        assert_eq!(c.overlay["supi"][0], "imsi-208930000000003");
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let base = CampaignConfig {
            targets: vec!["http://127.0.0.1:8001".into()],
            ..Default::default()
        };
        base.validate().unwrap();
        for broken in [
            CampaignConfig { budget: 0, ..base.clone() },
            CampaignConfig { targets: vec![], ..base.clone() },
            CampaignConfig { targets: vec!["udm:8001".into()], ..base.clone() },
            CampaignConfig { optional_probability: 1.5, ..base.clone() },
            CampaignConfig {
                token: TokenConfig {
                    mode: TokenMode::Fetch,
                    endpoint: Some("http://127.0.0.1:9999/oauth2/token".into()),
                    ..Default::default()
                },
                ..base.clone()
            },
        ] {
            assert!(broken.validate().is_err(), "{broken:?}");
        }
    }
}
