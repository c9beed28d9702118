use axum::body::Bytes;
use axum::extract::rejection::PathRejection;
use axum::extract::{Path, State as Extract};
use axum::http::{HeaderMap, StatusCode};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Map, Value};

use super::{json_object, respond};
use crate::state::{bad_request, created, json_response, not_found, State};
use crate::{BugFlag, Nf};

const SERVICE: &str = "npcf-bdtpolicycontrol";
const COLLECTION: &str = "/npcf-bdtpolicycontrol/v1/bdtpolicies";

pub(super) fn routes() -> Router<State> {
    Router::new()
        .route(COLLECTION, post(create))
        .route(&format!("{COLLECTION}/{{id}}"), get(fetch))
}

/// Name of the first required member that is missing or mistyped.
fn invalid_member(req: &Map<String, Value>) -> Option<&'static str> {
    let window_ok = |w: &Value| ["startTime", "stopTime"].iter().all(|k| w.get(k).is_some_and(Value::is_string));
    let checks: [(&'static str, bool); 4] = [
        ("aspId", req.get("aspId").is_some_and(Value::is_string)),
        ("desTimeInt", req.get("desTimeInt").is_some_and(|w| w.is_object() && window_ok(w))),
        ("numOfUes", req.get("numOfUes").is_some_and(|n| n.is_i64() || n.is_u64())),
        ("volPerUe", req.get("volPerUe").is_some_and(Value::is_object)),
    ];
    checks.into_iter().find(|(_, ok)| !ok).map(|(name, _)| name)
}

async fn create(Extract(state): Extract<State>, headers: HeaderMap, body: Bytes) -> Response {
    const ROUTE: &str = "pcf.create";
    respond((|| {
        state.check_route(ROUTE)?;
        state.authorize(Nf::Pcf, SERVICE, &headers)?;
        let req = json_object(&body)?;
        if let Some(name) = invalid_member(&req) {
            return Err(bad_request(name));
        }
        if state.bug(BugFlag::B6) {
            // The transfer-policy lookup result is asserted to the wrong type.
            return Err(state.fault(ROUTE, BugFlag::B6));
        }
        let id = state.new_id("bdt");
        let policy = json!({
            "bdtPolData": {"bdtRefId": id, "selTransPolicyId": 1},
            "bdtReqData": Value::Object(req),
        });
        state.pcf_policies.lock().unwrap().insert(id.clone(), policy.clone());
        Ok(created(format!("{COLLECTION}/{id}"), &policy))
    })())
}

async fn fetch(
    Extract(state): Extract<State>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> Response {
    respond((|| {
        state.authorize(Nf::Pcf, SERVICE, &headers)?;
        let Ok(Path(id)) = path else {
            return Err(not_found("CONTEXT_NOT_FOUND"));
        };
        match state.pcf_policies.lock().unwrap().get(&id) {
            Some(p) => Ok(json_response(StatusCode::OK, p)),
            None => Err(not_found("CONTEXT_NOT_FOUND")),
        }
    })())
}
