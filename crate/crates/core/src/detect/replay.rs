use std::collections::BTreeMap;

use super::{classify, BugClass, ClassifyContext, ReplayFile};
use crate::engine::{extract_handles, ExecutedExchange, Executor, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub reproduced: bool,
    /// Class of the final exchange, if any.
    pub observed: Option<BugClass>,
    pub exchanges: Vec<ExecutedExchange>,
    /// Why the replay stopped early.
    pub note: Option<String>,
}

/// Points every request (and the token endpoint) at `new` instead of `old`.
pub fn rebase_replay(replay: &mut ReplayFile, old: &str, new: &str) {
    let old = old.trim_end_matches('/');
    let new = new.trim_end_matches('/');
    for step in &mut replay.steps {
        if let Some(rest) = step.request.server.strip_prefix(old) {
            step.request.server = format!("{new}{rest}");
        }
    }
    if let Some(endpoint) = &mut replay.token.endpoint {
        if let Some(rest) = endpoint.strip_prefix(old) {
            *endpoint = format!("{new}{rest}");
        }
    }
}

fn record(index: usize, replay: &ReplayFile, outcome: Outcome) -> ExecutedExchange {
    let step = &replay.steps[index];
    let last = index + 1 == replay.steps.len();
    ExecutedExchange {
        id: index as u64,
        sequence: 0,
        step: index,
        checker: (last && replay.checker != "explore").then(|| replay.checker.clone()),
        request: outcome.request,
        bindings: step.bindings.clone(),
        token: step.token.clone(),
        token_claims: outcome.token_claims,
        status: outcome.status,
        transport_error: outcome.transport_error,
        response_headers: outcome.response_headers,
        response_body: outcome.response_body,
        attempts: outcome.attempts,
        latency_ms: Some(outcome.latency_ms),
    }
}

/// Re-runs the steps in order, re-extracting handles from fresh responses,
/// and classifies the final exchange.
pub fn run_replay(replay: &ReplayFile, executor: &Executor) -> ReplayOutcome {
    let mut exchanges = Vec::new();
    let mut handles: Vec<BTreeMap<String, String>> = Vec::new();
    let stop = |exchanges, note: String| ReplayOutcome {
        reproduced: false,
        observed: None,
        exchanges,
        note: Some(note),
    };
    for (i, step) in replay.steps.iter().enumerate() {
        let mut request = step.request.clone();
        for b in &step.bindings {
            let Some(value) = handles.get(b.from_step).and_then(|h| h.get(&b.handle)) else {
                return stop(exchanges, format!("step {} yielded no {:?}", b.from_step, b.handle));
            };
            request.set_path_value(&b.slot, value);
        }
        let outcome = match executor.send(&request, step.token.as_ref()) {
            Ok(o) => o,
            Err(e) => return stop(exchanges, format!("token for step {i}: {e}")),
        };
        let exchange = record(i, replay, outcome);
        let last = i + 1 == replay.steps.len();
        if !last {
            if !exchange.is_success() {
                let note = format!("step {i} returned {}", exchange.status);
                exchanges.push(exchange);
                return stop(exchanges, note);
            }
            handles.push(extract_handles(
                &step.produces,
                &exchange.response_headers,
                &exchange.response_body,
            ));
        }
        exchanges.push(exchange);
    }
    let ctx = ClassifyContext {
        declared: replay.declared_statuses.clone(),
        auth_scope: replay.service_scope.clone(),
        status_mapping: replay.status_mapping,
    };
    let observed = exchanges.last().and_then(|e| classify(&ctx, e)).map(|c| c.class);
    ReplayOutcome {
        reproduced: observed == Some(replay.bug_class),
        observed,
        exchanges,
        note: None,
    }
}
