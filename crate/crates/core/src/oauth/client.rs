use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde_json::Value;

use super::jws::decode_unverified;
use super::{mint_token, ClaimCompleteness, SignedToken, TokenError, TokenRequest};
use crate::clock::Clock;
use crate::engine::ConcreteRequest;
use crate::http::{HttpRequest, Transport};
use crate::spec::{Diagnostic, DiagnosticKind};

/// Seconds before expiry at which a cached token is replaced.
pub const REFRESH_MARGIN: u64 = 30;

/// `POST <endpoint>` with the client-credentials form; the returned token
/// is decoded but its signature is not checked.
pub fn acquire_token(endpoint: &str, req: &TokenRequest, transport: &dyn Transport) -> Result<SignedToken, TokenError> {
    let mut form = url::form_urlencoded::Serializer::new(String::new());
    form.append_pair("grant_type", "client_credentials")
        .append_pair("nfInstanceId", &req.consumer_instance_id)
        .append_pair("nfType", &req.consumer_nf_type)
        .append_pair("targetNfType", &req.target_nf_type)
        .append_pair("scope", &req.requested_scope);
    if let Some(list) = &req.target_snssai_list {
        form.append_pair("targetSnssaiList", &serde_json::to_string(list).unwrap_or_default());
    }
    if let Some(list) = &req.target_nsi_list {
        form.append_pair("targetNsiList", &serde_json::to_string(list).unwrap_or_default());
    }
    let response = transport.send(&HttpRequest {
        method: "POST".into(),
        url: endpoint.to_string(),
        headers: vec![
            ("Content-Type".into(), "application/x-www-form-urlencoded".into()),
            ("Accept".into(), "application/json".into()),
        ],
        body: Some(form.finish()),
    })?;
    if !(200..300).contains(&response.status) {
        return Err(TokenError::TokenDenied {
            status: response.status,
            body: response.body,
        });
    }
    let json: Value = serde_json::from_str(&response.body)
        .map_err(|e| TokenError::MalformedTokenResponse(e.to_string()))?;
    let compact = json
        .get("access_token")
        .and_then(Value::as_str)
        .ok_or_else(|| TokenError::MalformedTokenResponse("missing access_token".into()))?;
    decode_unverified(compact).ok_or_else(|| TokenError::MalformedTokenResponse("access_token is not a JWS".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenSource {
    /// No Authorization header is attached.
    None,
    /// One pre-generated compact token, used for every scope.
    File { path: PathBuf },
    /// Fetched from the NRF token endpoint per (scope, target NF type).
    Fetch {
        endpoint: String,
        nf_instance_id: String,
        nf_type: String,
    },
    /// Minted locally with the shared secret.
    Mint {
        key: Vec<u8>,
        issuer_id: String,
        nf_instance_id: String,
        nf_type: String,
        ttl: u64,
    },
}

struct Cached {
    token: SignedToken,
    /// Local clock reading when the token was obtained.
    obtained_at: u64,
}

impl Cached {
    fn fresh(&self, now: u64) -> bool {
        let lifetime = self.token.claims.expiry.saturating_sub(self.token.claims.issued_at);
        now.saturating_sub(self.obtained_at) + REFRESH_MARGIN < lifetime
    }
}

/// Yields current tokens; safe to share across workers.
///
/// Freshness is judged by the token's own lifetime (`exp - iat`) counted
/// from when it was obtained, so client and NRF clocks need not agree.
pub struct TokenProvider {
    source: TokenSource,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    cache: Mutex<BTreeMap<(String, String), Cached>>,
}

impl TokenProvider {
    pub fn new(source: TokenSource, transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        TokenProvider {
            source,
            transport,
            clock,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn source(&self) -> &TokenSource {
        &self.source
    }

    pub fn request_for(&self, scope: &str, target_nf_type: &str) -> TokenRequest {
        let (id, ty) = match &self.source {
            TokenSource::Fetch { nf_instance_id, nf_type, .. } | TokenSource::Mint { nf_instance_id, nf_type, .. } => {
                (nf_instance_id.as_str(), nf_type.as_str())
            }
            _ => ("", ""),
        };
        TokenRequest::new(id, ty, target_nf_type, scope)
    }

    /// `Ok(None)` when the source attaches nothing.
    pub fn token(&self, scope: &str, target_nf_type: &str) -> Result<Option<SignedToken>, TokenError> {
        let key = match &self.source {
            TokenSource::None => return Ok(None),
            TokenSource::File { .. } => (String::new(), String::new()),
            _ => (scope.to_string(), target_nf_type.to_string()),
        };
        let now = self.clock.now();
        let mut cache = self.cache.lock().expect("token cache poisoned");
        if let Some(entry) = cache.get(&key) {
            if matches!(self.source, TokenSource::File { .. }) || entry.fresh(now) {
                return Ok(Some(entry.token.clone()));
            }
        }
        let token = self.obtain(scope, target_nf_type, now)?;
        cache.insert(
            key,
            Cached {
                token: token.clone(),
                obtained_at: now,
            },
        );
        Ok(Some(token))
    }

    fn obtain(&self, scope: &str, target_nf_type: &str, now: u64) -> Result<SignedToken, TokenError> {
        match &self.source {
            TokenSource::None => Err(TokenError::Config("no token source".into())),
            TokenSource::File { path } => {
                let unreadable = |message: String| TokenError::FileUnreadable {
                    path: path.display().to_string(),
                    message,
                };
                let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
                let compact = text.trim_end_matches(['\r', '\n']);
                decode_unverified(compact).ok_or_else(|| unreadable("not a compact JWS".into()))
            }
            TokenSource::Fetch { endpoint, .. } => {
                acquire_token(endpoint, &self.request_for(scope, target_nf_type), self.transport.as_ref())
            }
            TokenSource::Mint { key, issuer_id, ttl, .. } => mint_token(
                &self.request_for(scope, target_nf_type),
                issuer_id,
                key,
                *ttl,
                ClaimCompleteness::Full,
                now,
            ),
        }
    }
}

/// Sets `Authorization: Bearer <compact>`, replacing any previous value,
/// unless the request carries an overlay-supplied Authorization header.
pub fn attach_token(request: &ConcreteRequest, token: &SignedToken) -> (ConcreteRequest, Option<Diagnostic>) {
    let mut out = request.clone();
    let overlay_set = out
        .provenance
        .overlay_headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization"));
    if overlay_set && out.header("authorization").is_some() {
        let diag = Diagnostic {
            kind: DiagnosticKind::OverlayAuthorization,
            location: out.provenance.template_id.clone(),
            message: "Authorization supplied by overlay; fetched token not attached".into(),
        };
        return (out, Some(diag));
    }
    out.headers.retain(|(k, _)| !k.eq_ignore_ascii_case("authorization"));
    out.headers.insert(0, ("Authorization".into(), token.bearer()));
    (out, None)
}
