//! OpenAPI document loading, bundling and deployment adaptation.
//!
//! The pipeline is `load_document` → `resolve_refs` → `rewrite_servers` →
//! `validate_spec`. Every stage works on a `serde_json::Value` tree with
//! insertion order preserved, so bundled output keeps the author's layout.

mod bundle;
mod document;
mod servers;
mod validate;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

pub use bundle::{fs_resolver, resolve_refs, RefTarget};
pub use document::{load_document, parse_document, write_bundle};
pub use servers::{nf_name_for_api, rewrite_servers, HostMap, HostPort};
pub use validate::{validate_spec, Diagnostic, DiagnosticKind};
pub(crate) use validate::METHODS;

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported OpenAPI version {version:?} (expected 3.0.x or 3.1.x)")]
    UnsupportedVersion { path: PathBuf, version: String },
    #[error("{path}: document is missing the `{key}` root member")]
    MissingRoot { path: PathBuf, key: &'static str },
    #[error("dangling reference {reference:?} (from {from})")]
    DanglingRef { reference: String, from: PathBuf },
    #[error("cannot load referenced file {path}: {message}")]
    ResolverIo { path: PathBuf, message: String },
    #[error("component {section}/{name} from {origin} collides with a different definition and its renamed form {renamed:?} is also taken")]
    CollisionUnresolvable {
        section: String,
        name: String,
        origin: PathBuf,
        renamed: String,
    },
    #[error("reference cycle through inlined node {reference:?}")]
    InlineCycle { reference: String },
    #[error("no host mapping for service {service:?} (api root {api:?})")]
    UnknownService { service: String, api: String },
    #[error("invalid server url {url:?}: {message}")]
    InvalidServer { url: String, message: String },
}

/// A parsed but unprocessed specification file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSpecDocument {
    pub source_path: PathBuf,
    pub document: Value,
    pub format_version: String,
}

impl RawSpecDocument {
    /// All `$ref` strings in document order.
    pub fn refs(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_refs(&self.document, &mut out);
        out
    }

    pub fn path_count(&self) -> usize {
        self.document
            .get("paths")
            .and_then(Value::as_object)
            .map_or(0, |p| p.len())
    }
}

/// A self-contained document: every `$ref` is local.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSpec {
    pub document: Value,
    pub origin: PathBuf,
    pub server_urls: Vec<String>,
    /// `"<section>/<name>"` → component subtree.
    pub component_index: BTreeMap<String, Value>,
}

impl ResolvedSpec {
    pub fn from_document(document: Value, origin: impl Into<PathBuf>) -> Self {
        let component_index = index_components(&document);
        let server_urls = server_url_strings(&document);
        ResolvedSpec {
            document,
            origin: origin.into(),
            server_urls,
            component_index,
        }
    }

    pub fn refs(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_refs(&self.document, &mut out);
        out
    }

    /// Looks up the node a local `#/...` reference points at.
    pub fn resolve_local(&self, reference: &str) -> Option<&Value> {
        let pointer = reference.strip_prefix('#')?;
        self.document.pointer(pointer)
    }

    /// Origin file stem, e.g. `nudm_sdm` for `specs/nudm_sdm.yaml`.
    pub fn origin_stem(&self) -> String {
        file_stem(&self.origin)
    }
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub(crate) fn collect_refs(node: &Value, out: &mut Vec<String>) {
    match node {
        Value::Object(map) => {
            for (k, v) in map {
                if k == "$ref" {
                    if let Value::String(s) = v {
                        out.push(s.clone());
                        continue;
                    }
                }
                collect_refs(v, out);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_refs(v, out)),
        _ => {}
    }
}

fn index_components(document: &Value) -> BTreeMap<String, Value> {
    let mut index = BTreeMap::new();
    if let Some(sections) = document.get("components").and_then(Value::as_object) {
        for (section, members) in sections {
            if let Some(members) = members.as_object() {
                for (name, node) in members {
                    index.insert(format!("{section}/{name}"), node.clone());
                }
            }
        }
    }
    index
}

fn server_url_strings(document: &Value) -> Vec<String> {
    document
        .get("servers")
        .and_then(Value::as_array)
        .map(|servers| {
            servers
                .iter()
                .filter_map(|s| s.get("url").and_then(Value::as_str))
                .map(str::to_owned)
                .collect()
        })
        .unwrap_or_default()
}
