use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::property_names;
use super::template::{ParamLocation, RequestTemplate};
use crate::spec::{Diagnostic, DiagnosticKind};

/// Names held fixed while everything else is mutated. Header names match
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinPolicy {
    pub names: Vec<String>,
    /// Optional literal for a pinned name.
    #[serde(default)]
    pub values: BTreeMap<String, Value>,
}

pub const ALWAYS_PINNED: [&str; 2] = ["Authorization", "Content-Type"];

impl Default for PinPolicy {
    fn default() -> Self {
        PinPolicy {
            names: ALWAYS_PINNED.iter().map(|s| s.to_string()).collect(),
            values: BTreeMap::new(),
        }
    }
}

impl PinPolicy {
    pub fn pin(mut self, name: &str) -> Self {
        if !self.names.iter().any(|n| n == name) {
            self.names.push(name.to_string());
        }
        self
    }

    fn matches(&self, name: &str, location: Option<ParamLocation>) -> Option<&String> {
        self.names.iter().find(|n| {
            if location == Some(ParamLocation::Header) {
                n.eq_ignore_ascii_case(name)
            } else {
                *n == name
            }
        })
    }
}

pub fn is_always_pinned(name: &str) -> bool {
    ALWAYS_PINNED.iter().any(|p| p.eq_ignore_ascii_case(name))
}

/// Applies `policy`. Names from the policy that match nothing (other than
/// the always-pinned headers) produce a warning and leave `template` as is.
pub fn annotate_fuzzable(template: &RequestTemplate, policy: &PinPolicy) -> (RequestTemplate, Vec<Diagnostic>) {
    let mut out = template.clone();
    let mut used = vec![false; policy.names.len()];
    let index = |n: &String| policy.names.iter().position(|m| m == n).unwrap_or(0);

    for p in out.params_mut() {
        let pinned = is_always_pinned(&p.name) && p.location == ParamLocation::Header;
        let matched = policy.matches(&p.name, Some(p.location)).cloned();
        if let Some(m) = &matched {
            used[index(m)] = true;
        }
        if pinned || matched.is_some() {
            p.fuzzable = false;
            p.pinned_value = matched.and_then(|m| policy.values.get(&m).cloned());
        } else {
            p.fuzzable = true;
        }
    }
    if let Some(body) = out.body.as_mut() {
        body.pinned_fields = property_names(&body.schema)
            .into_iter()
            .filter(|name| match policy.matches(name, None) {
                Some(m) => {
                    used[index(m)] = true;
                    true
                }
                None => false,
            })
            .collect();
    }

    let mut diags = Vec::new();
    for (name, hit) in policy.names.iter().zip(used) {
        if !hit && !is_always_pinned(name) {
            diags.push(Diagnostic {
                kind: DiagnosticKind::UnknownPinnedName,
                location: template.template_id.clone(),
                message: format!("pinned name {name:?} matches no parameter or body field"),
            });
        }
    }
    (out, diags)
}
