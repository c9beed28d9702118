use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::request::ConcreteRequest;
use super::sequence::Binding;
use crate::grammar::{HandleSource, RequestTemplate, ResourceHandle};
use crate::http::{header_value, Transport, TransportError};
use crate::oauth::{attach_token, AccessTokenClaims, TokenError, TokenProvider};

/// Response headers whose values vary between identical runs.
const VOLATILE_HEADERS: [&str; 1] = ["date"];

/// Which token a request was sent with.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSpec {
    pub scope: String,
    pub target_nf_type: String,
}

impl TokenSpec {
    pub fn for_template(template: &RequestTemplate) -> Option<TokenSpec> {
        template.auth_scope.as_ref().map(|scope| TokenSpec {
            scope: scope.clone(),
            target_nf_type: crate::grammar::nf_type_for_service(&template.service),
        })
    }
}

/// One line of the exchange log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutedExchange {
    pub id: u64,
    pub sequence: u64,
    pub step: usize,
    /// Checker that produced the request; `None` for exploration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<String>,
    /// Sent request, Authorization included.
    pub request: ConcreteRequest,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bindings: Vec<Binding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<TokenSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_claims: Option<AccessTokenClaims>,
    /// 0 when no response arrived.
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<TransportError>,
    pub response_headers: Vec<(String, String)>,
    pub response_body: String,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
}

impl ExecutedExchange {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        header_value(&self.response_headers, name)
    }
}

/// Handle value from a 2xx response: a top-level body member, or the last
/// path segment of `Location`.
pub fn extract_handle(handle: &ResourceHandle, headers: &[(String, String)], body: &str) -> Option<String> {
    match handle.source {
        HandleSource::LocationHeader => {
            let location = header_value(headers, "location")?;
            let path = location.split(['?', '#']).next()?.trim_end_matches('/');
            let last = path.rsplit('/').next()?;
            let decoded = percent_encoding::percent_decode_str(last).decode_utf8().ok()?;
            (!decoded.is_empty()).then(|| decoded.into_owned())
        }
        HandleSource::BodyField => {
            let json: Value = serde_json::from_str(body).ok()?;
            match json.get(&handle.name)? {
                Value::String(s) if !s.is_empty() => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            }
        }
    }
}

pub fn extract_handles(produces: &[ResourceHandle], headers: &[(String, String)], body: &str) -> BTreeMap<String, String> {
    produces
        .iter()
        .filter_map(|h| extract_handle(h, headers, body).map(|v| (h.name.clone(), v)))
        .collect()
}

/// `scheme://host:port` with the default port made explicit.
pub fn origin_of(url: &str) -> Option<String> {
    let parsed = url::Url::parse(url).ok()?;
    let host = parsed.host_str()?;
    let port = parsed.port_or_known_default()?;
    Some(format!("{}://{host}:{port}", parsed.scheme()))
}

/// Origins the engine may contact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allowlist(BTreeSet<String>);

impl Allowlist {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(targets: I) -> Self {
        Allowlist(targets.into_iter().filter_map(|t| origin_of(t.as_ref())).collect())
    }

    pub fn allows(&self, url: &str) -> bool {
        origin_of(url).is_some_and(|o| self.0.contains(&o))
    }
}

/// Minimum spacing between requests to the same origin, shared by workers.
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    /// `per_second` of `None` or ≤ 0 disables limiting.
    pub fn new(per_second: Option<f64>) -> Self {
        RateLimiter {
            interval: per_second.filter(|r| *r > 0.0).map(|r| Duration::from_secs_f64(1.0 / r)),
            next: Mutex::new(HashMap::new()),
        }
    }

    pub fn acquire(&self, origin: &str) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.get(origin).copied().unwrap_or(now).max(now);
            next.insert(origin.to_string(), slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Response half of an exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub request: ConcreteRequest,
    pub token_claims: Option<AccessTokenClaims>,
    pub status: u16,
    pub transport_error: Option<TransportError>,
    pub response_headers: Vec<(String, String)>,
    pub response_body: String,
    pub attempts: u32,
    pub latency_ms: u64,
}

/// Sends requests with tokens attached; shared across workers.
pub struct Executor {
    pub transport: Arc<dyn Transport>,
    pub tokens: Arc<TokenProvider>,
    pub allowlist: Allowlist,
    pub limiter: RateLimiter,
    /// Extra attempts after a transport failure.
    pub retries: u32,
}

impl Executor {
    /// Attaches the token for `token` (if any) and sends. Token failures
    /// are returned as errors; nothing is sent in that case.
    pub fn send(&self, request: &ConcreteRequest, token: Option<&TokenSpec>) -> Result<Outcome, TokenError> {
        let (request, token_claims) = match token {
            Some(spec) => match self.tokens.token(&spec.scope, &spec.target_nf_type)? {
                Some(t) => {
                    let (req, diag) = attach_token(request, &t);
                    if let Some(d) = diag {
                        log::warn!("{}: {}", d.location, d.message);
                    }
                    (req, Some(t.claims))
                }
                None => (request.clone(), None),
            },
            None => (request.clone(), None),
        };
        let http = request.to_http();
        let started = Instant::now();
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            if !self.allowlist.allows(&http.url) {
                break Err(TransportError::NotAllowed(origin_of(&http.url).unwrap_or_else(|| http.url.clone())));
            }
            if let Some(origin) = origin_of(&http.url) {
                self.limiter.acquire(&origin);
            }
            match self.transport.send(&http) {
                Err(TransportError::NotAllowed(h)) => break Err(TransportError::NotAllowed(h)),
                Err(e) if attempts <= self.retries => log::debug!("retrying {}: {e}", http.url),
                other => break other,
            }
        };
        let latency_ms = started.elapsed().as_millis() as u64;
        Ok(match result {
            Ok(resp) => Outcome {
                request,
                token_claims,
                status: resp.status,
                transport_error: None,
                response_headers: resp
                    .headers
                    .into_iter()
                    .filter(|(k, _)| !VOLATILE_HEADERS.iter().any(|v| k.eq_ignore_ascii_case(v)))
                    .collect(),
                response_body: resp.body,
                attempts,
                latency_ms,
            },
            Err(e) => Outcome {
                request,
                token_claims,
                status: 0,
                transport_error: Some(e),
                response_headers: Vec::new(),
                response_body: String::new(),
                attempts,
                latency_ms,
            },
        })
    }
}
