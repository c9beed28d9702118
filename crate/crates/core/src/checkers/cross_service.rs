use std::collections::BTreeSet;

use crate::engine::TokenSpec;
use crate::grammar::{nf_type_for_service, RequestTemplate};

/// Send `target`'s canonical safe request with a token scoped to `scope`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossProbe {
    pub scope: String,
    pub target: String,
}

impl CrossProbe {
    pub fn token(&self) -> TokenSpec {
        TokenSpec {
            scope: self.scope.clone(),
            target_nf_type: nf_type_for_service(&self.scope),
        }
    }
}

/// Ordered (scope, service) pairs with differing names. The canonical safe
/// request of a service is its first GET that needs no handle; services
/// without one are not probed. Needs at least two scopes in the grammar.
pub fn cross_service_probes(templates: &[RequestTemplate], extra_scopes: &[String]) -> Vec<CrossProbe> {
    let own: BTreeSet<&str> = templates.iter().filter_map(|t| t.auth_scope.as_deref()).collect();
    if own.len() < 2 {
        return Vec::new();
    }
    let scopes: BTreeSet<&str> = own.iter().copied().chain(extra_scopes.iter().map(String::as_str)).collect();
    let mut targets: Vec<(&str, &str)> = Vec::new();
    for t in templates {
        let Some(scope) = t.auth_scope.as_deref() else { continue };
        if t.method == "GET" && !t.is_consumer() && !targets.iter().any(|(s, _)| *s == scope) {
            targets.push((scope, &t.template_id));
        }
    }
    let mut out = Vec::new();
    for scope in &scopes {
        for (service, template_id) in &targets {
            if scope != service {
                out.push(CrossProbe {
                    scope: scope.to_string(),
                    target: template_id.to_string(),
                });
            }
        }
    }
    out
}
