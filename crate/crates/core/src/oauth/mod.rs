//! OAuth 2.0 client-credentials access tokens: claims, HS256 JWS,
//! verification policies and client-side acquisition.

mod client;
mod jws;
mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use client::{acquire_token, attach_token, TokenProvider, TokenSource};
pub use jws::{decode_unverified, mint_token, sign_claims, MIN_KEY_LEN};
pub use verify::{verify_token, SelfIdentity};

pub const KNOWN_NF_TYPES: [&str; 10] = ["AMF", "SMF", "UDM", "UDR", "NSSF", "PCF", "NRF", "AUSF", "NEF", "CHF"];

pub fn is_known_nf_type(nf_type: &str) -> bool {
    KNOWN_NF_TYPES.contains(&nf_type)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snssai {
    pub sst: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<String>,
}

impl Snssai {
    pub fn is_valid(&self) -> bool {
        self.sd
            .as_ref()
            .is_none_or(|sd| sd.len() == 6 && sd.chars().all(|c| c.is_ascii_hexdigit()))
    }
}

/// Wire names follow JWT registered claims plus the 3GPP extensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTokenClaims {
    #[serde(rename = "iss", default, skip_serializing_if = "Option::is_none")]
    pub issuer: Option<String>,
    #[serde(rename = "sub")]
    pub subject: String,
    #[serde(rename = "aud", default, skip_serializing_if = "Option::is_none")]
    pub audience: Option<String>,
    pub scope: String,
    #[serde(rename = "exp")]
    pub expiry: u64,
    #[serde(rename = "iat")]
    pub issued_at: u64,
    #[serde(rename = "producerSnssaiList", default, skip_serializing_if = "Option::is_none")]
    pub producer_snssai_list: Option<Vec<Snssai>>,
    #[serde(rename = "producerNsiList", default, skip_serializing_if = "Option::is_none")]
    pub producer_nsi_list: Option<Vec<String>>,
}

impl AccessTokenClaims {
    pub fn scopes(&self) -> impl Iterator<Item = &str> {
        self.scope.split_whitespace()
    }

    pub fn covers(&self, service: &str) -> bool {
        self.scopes().any(|s| s == service)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedToken {
    pub compact: String,
    pub claims: AccessTokenClaims,
    pub alg: String,
}

impl SignedToken {
    pub fn bearer(&self) -> String {
        format!("Bearer {}", self.compact)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    pub consumer_instance_id: String,
    pub consumer_nf_type: String,
    pub target_nf_type: String,
    pub requested_scope: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_snssai_list: Option<Vec<Snssai>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_nsi_list: Option<Vec<String>>,
}

impl TokenRequest {
    pub fn new(consumer_instance_id: &str, consumer_nf_type: &str, target_nf_type: &str, scope: &str) -> Self {
        TokenRequest {
            consumer_instance_id: consumer_instance_id.to_string(),
            consumer_nf_type: consumer_nf_type.to_string(),
            target_nf_type: target_nf_type.to_string(),
            requested_scope: scope.to_string(),
            target_snssai_list: None,
            target_nsi_list: None,
        }
    }
}

macro_rules! screaming_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_uppercase().replace('-', "_").as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!("unknown {}: {s}", stringify!($name))),
                }
            }
        }
    };
}

screaming_enum!(ClaimCompleteness {
    Full => "FULL",
    Free5gcPartial => "FREE5GC_PARTIAL",
});

screaming_enum!(VerifierMode {
    Correct => "CORRECT",
    SeededScopeShadow => "SEEDED_SCOPE_SHADOW",
    Free5gcMinimal => "FREE5GC_MINIMAL",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureCause {
    Malformed,
    BadSignature,
    Expired,
    ScopeMismatch,
    AudienceMismatch,
    SliceMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub accepted: bool,
    pub failure_cause: Option<FailureCause>,
}

impl VerificationResult {
    pub const ACCEPTED: VerificationResult = VerificationResult {
        accepted: true,
        failure_cause: None,
    };

    pub fn rejected(cause: FailureCause) -> Self {
        VerificationResult {
            accepted: false,
            failure_cause: Some(cause),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("signing key must be at least {MIN_KEY_LEN} bytes, got {0}")]
    WeakKey(usize),
    #[error("requested scope is empty")]
    EmptyScope,
    #[error("token endpoint unreachable: {0}")]
    Transport(#[from] crate::http::TransportError),
    #[error("token endpoint answered {status}: {body}")]
    TokenDenied { status: u16, body: String },
    #[error("malformed token response: {0}")]
    MalformedTokenResponse(String),
    #[error("cannot read token file {path}: {message}")]
    FileUnreadable { path: String, message: String },
    #[error("token source misconfigured: {0}")]
    Config(String),
}
