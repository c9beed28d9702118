use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ResolvedSpec;

pub(crate) const METHODS: [&str; 8] = ["get", "put", "post", "delete", "options", "head", "patch", "trace"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    ParameterWithoutSchema,
    OperationWithoutResponses,
    UnreachableComponent,
    UnknownPinnedName,
    OverlayAuthorization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Checks the properties fuzzing relies on. Never fails; returns findings.
pub fn validate_spec(spec: &ResolvedSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let paths = spec.document.get("paths").and_then(Value::as_object);

    for (path, item) in paths.into_iter().flatten() {
        let shared_params = item.get("parameters").and_then(Value::as_array);
        for method in METHODS {
            let Some(op) = item.get(method) else { continue };
            let location = format!("{} {}", method.to_ascii_uppercase(), path);
            let own_params = op.get("parameters").and_then(Value::as_array);
            for param in shared_params.into_iter().chain(own_params).flatten() {
                let param = follow(spec, param);
                if param.get("schema").is_none() && param.get("content").is_none() {
                    let name = param.get("name").and_then(Value::as_str).unwrap_or("?");
                    out.push(Diagnostic {
                        kind: DiagnosticKind::ParameterWithoutSchema,
                        location: location.clone(),
                        message: format!("parameter {name:?} has neither schema nor content"),
                    });
                }
            }
            let has_responses = op
                .get("responses")
                .and_then(Value::as_object)
                .is_some_and(|r| !r.is_empty());
            if !has_responses {
                out.push(Diagnostic {
                    kind: DiagnosticKind::OperationWithoutResponses,
                    location: location.clone(),
                    message: format!("{location} declares no responses"),
                });
            }
        }
    }

    let reachable = reachable_components(spec);
    for key in spec.component_index.keys() {
        if key.starts_with("securitySchemes/") {
            continue;
        }
        if !reachable.contains(key) {
            out.push(Diagnostic {
                kind: DiagnosticKind::UnreachableComponent,
                location: format!("#/components/{key}"),
                message: format!("unreachable component {key}"),
            });
        }
    }
    out
}

fn follow<'a>(spec: &'a ResolvedSpec, node: &'a Value) -> &'a Value {
    let mut current = node;
    for _ in 0..16 {
        match current.get("$ref").and_then(Value::as_str) {
            Some(r) => match spec.resolve_local(r) {
                Some(next) => current = next,
                None => break,
            },
            None => break,
        }
    }
    current
}

/// Component keys (`section/name`) transitively referenced from `paths`.
fn reachable_components(spec: &ResolvedSpec) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    if let Some(paths) = spec.document.get("paths") {
        queue.push_back(paths.clone());
    }
    while let Some(node) = queue.pop_front() {
        let mut refs = Vec::new();
        super::collect_refs(&node, &mut refs);
        for r in refs {
            let Some(key) = r
                .strip_prefix("#/components/")
                .map(|k| k.replace("~1", "/").replace("~0", "~"))
            else {
                continue;
            };
            if seen.insert(key.clone()) {
                if let Some(target) = spec.component_index.get(&key) {
                    queue.push_back(target.clone());
                }
            }
        }
    }
    seen
}
