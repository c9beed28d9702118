use axum::body::Bytes;
use axum::extract::{RawQuery, State as Extract};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use sbifuzz::grammar::nf_type_for_service;
use sbifuzz::oauth::{is_known_nf_type, mint_token, Snssai, TokenRequest};
use serde_json::{json, Value};

use super::respond;
use crate::state::{bad_request, json_response, query_get, query_pairs, State, TOKEN_PATH};
use crate::Nf;

pub(super) fn routes() -> Router<State> {
    Router::new()
        .route(TOKEN_PATH, post(token))
        .route("/nnrf-disc/v1/nf-instances", get(discover))
}

fn token_error(error: &str) -> Response {
    json_response(StatusCode::BAD_REQUEST, &json!({"error": error}))
}

async fn token(Extract(state): Extract<State>, body: Bytes) -> Response {
    let form: Vec<(String, String)> = url::form_urlencoded::parse(&body).into_owned().collect();
    let field = |name: &str| {
        form.iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
            .filter(|v| !v.is_empty())
    };
    if field("grant_type") != Some("client_credentials") {
        return token_error("unsupported_grant_type");
    }
    let (Some(instance), Some(scope)) = (field("nfInstanceId"), field("scope")) else {
        return token_error("invalid_request");
    };
    if scope.trim().is_empty() {
        return token_error("invalid_scope");
    }
    let first_scope = scope.split_whitespace().next().unwrap_or_default();
    let target = field("targetNfType")
        .map(str::to_string)
        .unwrap_or_else(|| nf_type_for_service(first_scope));
    let mut req = TokenRequest::new(instance, field("nfType").unwrap_or("AMF"), &target, scope);
    if let Some(list) = field("targetSnssaiList") {
        match serde_json::from_str::<Vec<Snssai>>(list) {
            Ok(list) => req.target_snssai_list = Some(list),
            Err(_) => return token_error("invalid_request"),
        }
    }
    let config = &state.config;
    let now = state.clock.now();
    match mint_token(&req, Nf::Nrf.instance_id(), &config.key, config.token_ttl, config.token_claims, now) {
        Ok(t) => json_response(
            StatusCode::OK,
            &json!({
                "access_token": t.compact,
                "token_type": "Bearer",
                "expires_in": config.token_ttl,
                "scope": t.claims.scope,
            }),
        ),
        Err(_) => token_error("invalid_scope"),
    }
}

async fn discover(Extract(state): Extract<State>, headers: HeaderMap, RawQuery(query): RawQuery) -> Response {
    respond((|| {
        state.authorize(Nf::Nrf, "nnrf-disc", &headers)?;
        let pairs = query_pairs(query.as_deref());
        let nf_type = |name: &str| {
            query_get(&pairs, name)
                .filter(|t| is_known_nf_type(t))
                .ok_or_else(|| bad_request(name))
        };
        let target = nf_type("target-nf-type")?;
        nf_type("requester-nf-type")?;
        if let Some(id) = query_get(&pairs, "requester-nf-instance-id") {
            uuid::Uuid::parse_str(id).map_err(|_| bad_request("requester-nf-instance-id"))?;
        }
        let instances: Vec<Value> = if target == "SMF" {
            vec![state.config.seed.smf_profile.clone()]
        } else {
            Vec::new()
        };
        Ok(json_response(
            StatusCode::OK,
            &json!({"validityPeriod": 3600, "nfInstances": instances}),
        ))
    })())
}
