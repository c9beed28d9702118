use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use sbifuzz::clock::{Clock, FixedClock, SystemClock};
use sbifuzz::oauth::{verify_token, FailureCause, SelfIdentity};
use serde_json::{json, Value};

use crate::{BugFlag, Nf, TestbedConfig};

/// Clock value in deterministic mode (2026-01-01T00:00:00Z).
pub const DETERMINISTIC_EPOCH: u64 = 1_767_225_600;

pub const TOKEN_PATH: &str = "/oauth2/token";

/// Runtime state shared by every NF.
pub(crate) struct Shared {
    pub config: TestbedConfig,
    pub clock: Box<dyn Clock>,
    next_id: Mutex<BTreeMap<&'static str, u64>>,
    /// Routes taken down by a seeded fault in crash-hard mode.
    disabled: Mutex<BTreeSet<&'static str>>,
    pub udm_subscriptions: Mutex<BTreeMap<String, Value>>,
    pub nssf_subscriptions: Mutex<BTreeMap<String, Value>>,
    pub pcf_policies: Mutex<BTreeMap<String, Value>>,
    pub faults: AtomicU64,
}

pub(crate) type State = Arc<Shared>;

impl Shared {
    pub fn new(config: TestbedConfig) -> State {
        let clock: Box<dyn Clock> = if config.deterministic {
            Box::new(FixedClock::new(DETERMINISTIC_EPOCH))
        } else {
            Box::new(SystemClock)
        };
        Arc::new(Shared {
            config,
            clock,
            next_id: Mutex::new(BTreeMap::new()),
            disabled: Mutex::new(BTreeSet::new()),
            udm_subscriptions: Mutex::new(BTreeMap::new()),
            nssf_subscriptions: Mutex::new(BTreeMap::new()),
            pcf_policies: Mutex::new(BTreeMap::new()),
            faults: AtomicU64::new(0),
        })
    }

    pub fn bug(&self, flag: BugFlag) -> bool {
        self.config.bugs.contains(&flag)
    }

    /// `<prefix>-<n>` in deterministic mode, a v4 uuid otherwise.
    pub fn new_id(&self, prefix: &'static str) -> String {
        if !self.config.deterministic {
            return uuid::Uuid::new_v4().to_string();
        }
        let mut ids = self.next_id.lock().unwrap();
        let n = ids.entry(prefix).or_insert(0);
        *n += 1;
        format!("{prefix}-{n}")
    }

    pub fn identity(&self, nf: Nf) -> SelfIdentity {
        SelfIdentity {
            nf_type: nf.nf_type().into(),
            instance_id: nf.instance_id().into(),
            snssai_list: self.config.served_snssais.clone(),
            nsi_list: Vec::new(),
        }
    }

    /// Bearer check for `service`; `Err` carries the 401/403 response.
    pub fn authorize(&self, nf: Nf, service: &str, headers: &HeaderMap) -> Result<(), Response> {
        let bearer = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        let Some(token) = bearer else {
            return Err(problem(StatusCode::UNAUTHORIZED, "Unauthorized", "MISSING_TOKEN"));
        };
        let mode = self.config.verifier_mode[&nf];
        let result = verify_token(token, service, &self.identity(nf), &self.config.key, self.clock.now(), mode);
        match result.failure_cause {
            None => Ok(()),
            Some(FailureCause::Malformed | FailureCause::BadSignature | FailureCause::Expired) => {
                Err(problem(StatusCode::UNAUTHORIZED, "Unauthorized", "INVALID_TOKEN"))
            }
            Some(FailureCause::ScopeMismatch | FailureCause::AudienceMismatch | FailureCause::SliceMismatch) => {
                Err(problem(StatusCode::FORBIDDEN, "Forbidden", "INSUFFICIENT_SCOPE"))
            }
        }
    }

    /// 503 while `route` is down.
    pub fn check_route(&self, route: &'static str) -> Result<(), Response> {
        if self.disabled.lock().unwrap().contains(route) {
            return Err(problem(StatusCode::SERVICE_UNAVAILABLE, "Service Unavailable", "NF_CONGESTION"));
        }
        Ok(())
    }

    /// The response of a seeded fault at `route`.
    pub fn fault(&self, route: &'static str, flag: BugFlag) -> Response {
        self.faults.fetch_add(1, Ordering::Relaxed);
        if self.config.crash_hard {
            self.disabled.lock().unwrap().insert(route);
        }
        let cause = flag.cause().expect("flag has a fault response");
        problem(StatusCode::INTERNAL_SERVER_ERROR, "Internal Server Error", cause)
    }
}

pub(crate) fn problem(status: StatusCode, title: &str, cause: &str) -> Response {
    let body = json!({"title": title, "status": status.as_u16(), "cause": cause});
    with_json(status, &body, "application/problem+json")
}

/// A 400 naming the offending parameter.
pub(crate) fn bad_request(param: &str) -> Response {
    let body = json!({
        "title": "Bad Request",
        "status": 400,
        "cause": "MANDATORY_IE_INCORRECT",
        "invalidParams": [{"param": param}],
    });
    with_json(StatusCode::BAD_REQUEST, &body, "application/problem+json")
}

pub(crate) fn not_found(cause: &str) -> Response {
    problem(StatusCode::NOT_FOUND, "Not Found", cause)
}

pub(crate) fn json_response(status: StatusCode, body: &Value) -> Response {
    with_json(status, body, "application/json")
}

/// 201 with `Location` (origin-relative).
pub(crate) fn created(location: String, body: &Value) -> Response {
    let mut response = json_response(StatusCode::CREATED, body);
    if let Ok(v) = HeaderValue::from_str(&location) {
        response.headers_mut().insert(header::LOCATION, v);
    }
    response
}

fn with_json(status: StatusCode, body: &Value, content_type: &'static str) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, content_type)],
        serde_json::to_string(body).unwrap_or_default(),
    )
        .into_response()
}

/// Decoded query pairs; later duplicates are kept.
pub(crate) fn query_pairs(raw: Option<&str>) -> Vec<(String, String)> {
    url::form_urlencoded::parse(raw.unwrap_or_default().as_bytes())
        .into_owned()
        .collect()
}

pub(crate) fn query_get<'a>(pairs: &'a [(String, String)], name: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
}

pub(crate) fn is_absolute_uri(text: &str) -> bool {
    url::Url::parse(text).is_ok()
}
