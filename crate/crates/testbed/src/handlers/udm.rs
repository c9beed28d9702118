use std::sync::LazyLock;

use axum::body::Bytes;
use axum::extract::rejection::PathRejection;
use axum::extract::{Path, RawQuery, State as Extract};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use regex::Regex;
use sbifuzz::oauth::Snssai;
use serde_json::{json, Value};

use super::{json_object, respond};
use crate::state::{bad_request, created, is_absolute_uri, json_response, not_found, query_get, query_pairs, State};
use crate::{BugFlag, Nf};

const SERVICE: &str = "nudm-sdm";
const ROOT: &str = "/nudm-sdm/v2";

static SUPPORTED_FEATURES: LazyLock<Regex> = LazyLock::new(|| Regex::new("^[A-Fa-f0-9]*$").unwrap());
static SHARED_DATA_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new("^[0-9]{5,6}-.+$").unwrap());

pub(super) fn routes() -> Router<State> {
    Router::new()
        .route("/nudm-sdm/v2/shared-data", get(shared_data))
        .route("/nudm-sdm/v2/shared-data-subscriptions", post(subscribe))
        .route("/nudm-sdm/v2/shared-data-subscriptions/{id}", delete(unsubscribe))
        .route("/nudm-sdm/v2/{ue}/{resource}", get(per_ue))
}

fn check_features(pairs: &[(String, String)]) -> Result<(), Response> {
    match query_get(pairs, "supported-features") {
        Some(f) if !SUPPORTED_FEATURES.is_match(f) => Err(bad_request("supported-features")),
        _ => Ok(()),
    }
}

async fn shared_data(Extract(state): Extract<State>, headers: HeaderMap, RawQuery(query): RawQuery) -> Response {
    const ROUTE: &str = "udm.shared-data";
    respond((|| {
        state.check_route(ROUTE)?;
        state.authorize(Nf::Udm, SERVICE, &headers)?;
        let pairs = query_pairs(query.as_deref());
        if query_get(&pairs, "supported-features").is_none() && state.bug(BugFlag::B1) {
            // Feature negotiation indexes the first element of an empty list.
            return Err(state.fault(ROUTE, BugFlag::B1));
        }
        check_features(&pairs)?;
        let records = &state.config.seed.shared_data;
        let Some(ids) = query_get(&pairs, "shared-data-ids") else {
            return Ok(json_response(StatusCode::OK, &Value::Array(records.clone())));
        };
        let ids: Vec<&str> = ids.split(',').collect();
        if ids.iter().any(|id| !SHARED_DATA_ID.is_match(id)) {
            return Err(bad_request("shared-data-ids"));
        }
        let found: Vec<Value> = records
            .iter()
            .filter(|r| r["sharedDataId"].as_str().is_some_and(|id| ids.contains(&id)))
            .cloned()
            .collect();
        if found.is_empty() {
            return Err(not_found("DATA_NOT_FOUND"));
        }
        Ok(json_response(StatusCode::OK, &Value::Array(found)))
    })())
}

async fn per_ue(
    Extract(state): Extract<State>,
    headers: HeaderMap,
    path: Result<Path<(String, String)>, PathRejection>,
    RawQuery(query): RawQuery,
) -> Response {
    let Ok(Path((ue, resource))) = path else {
        return not_found("RESOURCE_URI_STRUCTURE_NOT_FOUND");
    };
    let pairs = query_pairs(query.as_deref());
    match resource.as_str() {
        "sm-data" => respond(sm_data(&state, &headers, &ue, &pairs)),
        "id-translation-result" => respond(id_translation(&state, &headers, &ue, &pairs)),
        _ => not_found("RESOURCE_URI_STRUCTURE_NOT_FOUND"),
    }
}

fn sm_data(state: &State, headers: &HeaderMap, supi: &str, pairs: &[(String, String)]) -> Result<Response, Response> {
    const ROUTE: &str = "udm.sm-data";
    state.check_route(ROUTE)?;
    state.authorize(Nf::Udm, SERVICE, headers)?;
    let seed = &state.config.seed;
    if !seed.supis.iter().any(|s| s == supi) {
        return Err(not_found("USER_NOT_FOUND"));
    }
    check_features(pairs)?;
    let Some(raw) = query_get(pairs, "single-nssai") else {
        if state.bug(BugFlag::B2) {
            // The absent filter is dereferenced as if it had been decoded.
            return Err(state.fault(ROUTE, BugFlag::B2));
        }
        return Ok(json_response(StatusCode::OK, &Value::Array(seed.sm_data.clone())));
    };
    let snssai: Snssai = match serde_json::from_str(raw) {
        Ok(s) => s,
        Err(_) if state.bug(BugFlag::B3) => return Err(state.fault(ROUTE, BugFlag::B3)),
        Err(_) => return Err(bad_request("single-nssai")),
    };
    if !snssai.is_valid() {
        return Err(bad_request("single-nssai"));
    }
    let wanted = serde_json::to_value(&snssai).unwrap_or_default();
    let found: Vec<Value> = seed
        .sm_data
        .iter()
        .filter(|r| r["singleNssai"] == wanted)
        .cloned()
        .collect();
    Ok(json_response(StatusCode::OK, &Value::Array(found)))
}

fn id_translation(state: &State, headers: &HeaderMap, ue: &str, pairs: &[(String, String)]) -> Result<Response, Response> {
    const ROUTE: &str = "udm.id-translation";
    state.check_route(ROUTE)?;
    state.authorize(Nf::Udm, SERVICE, headers)?;
    check_features(pairs)?;
    match state.config.seed.ue_ids.get(ue) {
        Some(supi) => Ok(json_response(StatusCode::OK, &json!({"supi": supi}))),
        // A failed lookup is reported as an internal failure instead of 404.
        None if state.bug(BugFlag::B7) => Err(state.fault(ROUTE, BugFlag::B7)),
        None => Err(not_found("USER_NOT_FOUND")),
    }
}

async fn subscribe(Extract(state): Extract<State>, headers: HeaderMap, body: Bytes) -> Response {
    const ROUTE: &str = "udm.subscribe";
    respond((|| {
        state.check_route(ROUTE)?;
        state.authorize(Nf::Udm, SERVICE, &headers)?;
        let mut sub = json_object(&body)?;
        let string = |name: &str| match sub.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            _ => Err(bad_request(name)),
        };
        let instance = string("nfInstanceId")?;
        let callback = string("callbackReference")?;
        let monitored: Vec<String> = match sub.get("monitoredResourceUris") {
            Some(Value::Array(items)) if !items.is_empty() => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| bad_request("monitoredResourceUris")))
                .collect::<Result<_, _>>()?,
            _ => return Err(bad_request("monitoredResourceUris")),
        };
        for (name, ty_ok) in [
            ("implicitUnsubscribe", sub.get("implicitUnsubscribe").is_none_or(Value::is_boolean)),
            ("expires", sub.get("expires").is_none_or(Value::is_string)),
            ("supportedFeatures", sub.get("supportedFeatures").is_none_or(Value::is_string)),
        ] {
            if !ty_ok {
                return Err(bad_request(name));
            }
        }
        let invalid = if !is_absolute_uri(&callback) {
            Some("callbackReference")
        } else if !monitored.iter().all(|u| is_absolute_uri(u)) {
            Some("monitoredResourceUris")
        } else if uuid::Uuid::parse_str(&instance).is_err() {
            Some("nfInstanceId")
        } else {
            None
        };
        if let Some(param) = invalid {
            if state.bug(BugFlag::B4) {
                // The parse error is dropped and the nil result used.
                return Err(state.fault(ROUTE, BugFlag::B4));
            }
            return Err(bad_request(param));
        }
        let id = state.new_id("sub");
        sub.insert("subscriptionId".into(), Value::String(id.clone()));
        let sub = Value::Object(sub);
        state.udm_subscriptions.lock().unwrap().insert(id.clone(), sub.clone());
        Ok(created(format!("{ROOT}/shared-data-subscriptions/{id}"), &sub))
    })())
}

async fn unsubscribe(
    Extract(state): Extract<State>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> Response {
    respond((|| {
        state.authorize(Nf::Udm, SERVICE, &headers)?;
        let Ok(Path(id)) = path else {
            return Err(not_found("SUBSCRIPTION_NOT_FOUND"));
        };
        match state.udm_subscriptions.lock().unwrap().remove(&id) {
            Some(_) => Ok(StatusCode::NO_CONTENT.into_response()),
            None => Err(not_found("SUBSCRIPTION_NOT_FOUND")),
        }
    })())
}
