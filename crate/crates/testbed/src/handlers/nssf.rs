use axum::body::Bytes;
use axum::extract::rejection::PathRejection;
use axum::extract::{Path, State as Extract};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, post};
use axum::Router;
use serde_json::{json, Value};

use super::{json_object, respond};
use crate::state::{bad_request, created, not_found, State};
use crate::{BugFlag, Nf};

const SERVICE: &str = "nnssf-nssaiavailability";
const COLLECTION: &str = "/nnssf-nssaiavailability/v1/nssai-availability/subscriptions";

pub(super) fn routes() -> Router<State> {
    Router::new()
        .route(COLLECTION, post(subscribe))
        .route(&format!("{COLLECTION}/{{id}}"), delete(unsubscribe))
}

async fn subscribe(Extract(state): Extract<State>, headers: HeaderMap, body: Bytes) -> Response {
    const ROUTE: &str = "nssf.subscribe";
    respond((|| {
        state.check_route(ROUTE)?;
        state.authorize(Nf::Nssf, SERVICE, &headers)?;
        // Shallow: member types only, the TAI entries are not inspected.
        let data = json_object(&body)?;
        if !data.get("nfNssaiAvailabilityUri").is_some_and(Value::is_string) {
            return Err(bad_request("nfNssaiAvailabilityUri"));
        }
        if !data.get("taiList").and_then(Value::as_array).is_some_and(|l| !l.is_empty()) {
            return Err(bad_request("taiList"));
        }
        if data.get("event").and_then(Value::as_str) != Some("SNSSAI_STATUS_CHANGE_REPORT") {
            return Err(bad_request("event"));
        }
        let expiry = match data.get("expiry") {
            None if state.bug(BugFlag::B5) => {
                // The optional expiry pointer is read without a nil check.
                return Err(state.fault(ROUTE, BugFlag::B5));
            }
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(bad_request("expiry")),
        };
        let id = state.new_id("nssf-sub");
        let mut created_data = json!({
            "subscriptionId": id,
            "authorizedNssaiAvailabilityData": [],
        });
        if let Some(e) = expiry {
            created_data["expiry"] = Value::String(e);
        }
        state.nssf_subscriptions.lock().unwrap().insert(id.clone(), Value::Object(data));
        Ok(created(format!("{COLLECTION}/{id}"), &created_data))
    })())
}

async fn unsubscribe(
    Extract(state): Extract<State>,
    headers: HeaderMap,
    path: Result<Path<String>, PathRejection>,
) -> Response {
    respond((|| {
        state.authorize(Nf::Nssf, SERVICE, &headers)?;
        let Ok(Path(id)) = path else {
            return Err(not_found("SUBSCRIPTION_NOT_FOUND"));
        };
        match state.nssf_subscriptions.lock().unwrap().remove(&id) {
            Some(_) => Ok(StatusCode::NO_CONTENT.into_response()),
            None => Err(not_found("SUBSCRIPTION_NOT_FOUND")),
        }
    })())
}
