//! One router per NF. Handlers parse bodies themselves so malformed input
//! gets a 400 problem body rather than a framework rejection.

mod nrf;
mod nssf;
mod pcf;
mod udm;

use axum::http::StatusCode;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use serde_json::Value;

use crate::state::{problem, State};
use crate::Nf;

pub(crate) fn router(nf: Nf, state: State) -> Router {
    let routes = match nf {
        Nf::Nrf => nrf::routes(),
        Nf::Udm => udm::routes(),
        Nf::Nssf => nssf::routes(),
        Nf::Pcf => pcf::routes(),
    };
    routes
        .route("/healthz", get(|| async { "ok" }))
        .fallback(|| async { problem(StatusCode::NOT_FOUND, "Not Found", "RESOURCE_URI_STRUCTURE_NOT_FOUND") })
        .with_state(state)
}

/// The body as a JSON object, or a 400.
fn json_object(body: &[u8]) -> Result<serde_json::Map<String, Value>, Response> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        _ => Err(problem(StatusCode::BAD_REQUEST, "Bad Request", "INVALID_MSG_FORMAT")),
    }
}

/// Collapses handler early-returns.
fn respond(result: Result<Response, Response>) -> Response {
    result.unwrap_or_else(|r| r)
}
