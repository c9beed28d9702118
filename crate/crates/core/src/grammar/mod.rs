//! Request grammar: templates, dependency edges, value dictionaries.

mod annotate;
mod deps;
mod dictionary;
pub mod schema;
mod template;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use annotate::{annotate_fuzzable, is_always_pinned, PinPolicy, ALWAYS_PINNED};
pub use deps::{apply_dependencies, infer_dependencies, normalize_handle_name, DependencyEdge, DependencyGraph};
pub use dictionary::{build_dictionary, FuzzDictionary, Overlay, ENUM_PROBE, FIXED_UUID, NIL_UUID};
pub use template::{
    compile, nf_type_for_service, BodySpec, ConsumedSlot, HandleSource, ParamEncoding, ParamLocation,
    ParamSpec, RequestTemplate, ResourceHandle, ResponseSpec,
};

use crate::spec::{Diagnostic, ResolvedSpec};

#[derive(Debug, thiserror::Error)]
pub enum GrammarError {
    #[error("{origin}: specification declares no paths")]
    EmptySpec { origin: String },
    #[error("overlay value {value} for {name:?} does not match schema type {expected}")]
    OverlayTypeMismatch {
        name: String,
        value: Value,
        expected: String,
    },
    #[error("duplicate template {0:?} across specifications")]
    DuplicateTemplate(String),
    #[error("grammar json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarMeta {
    /// SHA-256 over the canonical JSON of every input spec, in order.
    pub seed_spec_hash: String,
    pub specs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub templates: Vec<RequestTemplate>,
    pub edges: Vec<DependencyEdge>,
    pub dictionary: FuzzDictionary,
    pub meta: GrammarMeta,
}

pub fn spec_hash(specs: &[ResolvedSpec]) -> String {
    let mut hasher = Sha256::new();
    for spec in specs {
        hasher.update(serde_json::to_vec(&spec.document).unwrap_or_default());
        hasher.update([0u8]);
    }
    hex::encode(hasher.finalize())
}

impl Grammar {
    /// compile → annotate → infer dependencies → dictionary.
    pub fn build(
        specs: &[ResolvedSpec],
        overlay: Option<&Overlay>,
        policy: &PinPolicy,
    ) -> Result<(Grammar, Vec<Diagnostic>), GrammarError> {
        let mut templates = Vec::new();
        let mut seen = BTreeSet::new();
        for spec in specs {
            for t in compile(spec)? {
                if !seen.insert(t.template_id.clone()) {
                    return Err(GrammarError::DuplicateTemplate(t.template_id));
                }
                templates.push(t);
            }
        }

        // A pinned name only warns when no template knows it.
        let mut unmatched: Option<Vec<Diagnostic>> = None;
        for t in templates.iter_mut() {
            let (annotated, diags) = annotate_fuzzable(t, policy);
            *t = annotated;
            unmatched = Some(match unmatched {
                None => diags,
                Some(prev) => prev
                    .into_iter()
                    .filter(|d| diags.iter().any(|e| e.message == d.message))
                    .collect(),
            });
        }
        let mut diagnostics = unmatched.unwrap_or_default();
        for d in &mut diagnostics {
            d.location = "grammar".into();
        }

        let graph = infer_dependencies(&templates);
        apply_dependencies(&mut templates, &graph);
        let dictionary = build_dictionary(&templates, overlay)?;
        let grammar = Grammar {
            templates,
            edges: graph.edges,
            dictionary,
            meta: GrammarMeta {
                seed_spec_hash: spec_hash(specs),
                specs: specs
                    .iter()
                    .map(|s| s.origin.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
                    .collect(),
            },
        };
        Ok((grammar, diagnostics))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("grammar serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Grammar, GrammarError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn template(&self, id: &str) -> Option<&RequestTemplate> {
        self.templates.iter().find(|t| t.template_id == id)
    }

    pub fn graph(&self) -> DependencyGraph {
        DependencyGraph {
            nodes: self.templates.iter().map(|t| t.template_id.clone()).collect(),
            edges: self.edges.clone(),
        }
    }

    /// Distinct OAuth scopes the templates require, in template order.
    pub fn scopes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for scope in self.templates.iter().filter_map(|t| t.auth_scope.clone()) {
            if !out.contains(&scope) {
                out.push(scope);
            }
        }
        out
    }
}
