use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ResolvedSpec, SpecError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostPort {
    pub host: String,
    pub port: u16,
}

impl fmt::Display for HostPort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

impl FromStr for HostPort {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = |message: &str| SpecError::InvalidServer {
            url: s.to_string(),
            message: message.to_string(),
        };
        let (host, port) = s.rsplit_once(':').ok_or_else(|| invalid("expected host:port"))?;
        let port: u16 = port.parse().map_err(|_| invalid("port is not a number"))?;
        if host.is_empty() {
            return Err(invalid("empty host"));
        }
        if port == 0 {
            return Err(invalid("port must be in 1..65535"));
        }
        Ok(HostPort {
            host: host.to_string(),
            port,
        })
    }
}

/// Deployment topology: logical service name → `host:port`.
///
/// Keys may be NF names (`udm`) or full API names (`nudm-sdm`); the API
/// name wins when both are present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostMap {
    pub entries: BTreeMap<String, HostPort>,
    #[serde(default)]
    pub default: Option<HostPort>,
    #[serde(default = "default_scheme")]
    pub default_scheme: String,
}

fn default_scheme() -> String {
    "http".to_string()
}

impl Default for HostMap {
    fn default() -> Self {
        HostMap {
            entries: BTreeMap::new(),
            default: None,
            default_scheme: default_scheme(),
        }
    }
}

impl HostMap {
    pub fn new(scheme: &str) -> Self {
        HostMap {
            default_scheme: scheme.to_string(),
            ..HostMap::default()
        }
    }

    pub fn with(mut self, service: &str, host: HostPort) -> Self {
        self.entries.insert(service.to_string(), host);
        self
    }

    fn lookup(&self, keys: &[String]) -> Option<&HostPort> {
        keys.iter()
            .filter(|k| !k.is_empty())
            .find_map(|k| self.entries.get(k))
            .or(self.default.as_ref())
    }
}

/// `nudm-sdm` → `udm`, `nnrf-disc` → `nrf`.
pub fn nf_name_for_api(api: &str) -> String {
    let head = api.split('-').next().unwrap_or_default().to_ascii_lowercase();
    match head.strip_prefix('n') {
        Some(rest) if !rest.is_empty() => rest.to_string(),
        _ => head,
    }
}

/// `TS29510_Nnrf_AccessToken` or `nnrf_accesstoken` → `nrf`.
fn nf_name_for_stem(stem: &str) -> String {
    let mut parts = stem.split('_').peekable();
    if let Some(first) = parts.peek() {
        let is_ts = first.len() > 2
            && first[..2].eq_ignore_ascii_case("ts")
            && first[2..].chars().all(|c| c.is_ascii_digit());
        if is_ts {
            parts.next();
        }
    }
    nf_name_for_api(parts.next().unwrap_or_default())
}

fn first_segment(path: &str) -> &str {
    path.trim_start_matches('/').split('/').next().unwrap_or_default()
}

/// Substitutes `{apiRoot}` (or a bare relative root) with the deployment
/// origin for the spec's service. Only the `servers` member changes.
pub fn rewrite_servers(spec: &ResolvedSpec, hosts: &HostMap) -> Result<ResolvedSpec, SpecError> {
    let mut document = spec.document.clone();
    let stem = spec.origin_stem();
    let servers = match document.get("servers").and_then(Value::as_array) {
        Some(list) if !list.is_empty() => list.clone(),
        _ => vec![json!({"url": "/"})],
    };

    let mut rewritten = Vec::with_capacity(servers.len());
    for server in servers {
        let url = server
            .get("url")
            .and_then(Value::as_str)
            .unwrap_or("/")
            .to_string();
        let suffix = if let Some(rest) = url.strip_prefix("{apiRoot}") {
            Some(rest.to_string())
        } else if url.starts_with('/') {
            Some(url.clone())
        } else {
            None
        };
        let Some(suffix) = suffix else {
            url::Url::parse(&url).map_err(|e| SpecError::InvalidServer {
                url: url.clone(),
                message: e.to_string(),
            })?;
            rewritten.push(server);
            continue;
        };

        let api = first_segment(&suffix).to_string();
        let service = if api.is_empty() {
            nf_name_for_stem(&stem)
        } else {
            nf_name_for_api(&api)
        };
        let host = hosts
            .lookup(&[api.clone(), service.clone()])
            .ok_or_else(|| SpecError::UnknownService {
                service: service.clone(),
                api: api.clone(),
            })?;
        let suffix = suffix.trim_end_matches('/');
        let absolute = format!("{}://{}{}", hosts.default_scheme, host, suffix);

        let mut server = server.as_object().cloned().unwrap_or_default();
        server.insert("url".into(), Value::String(absolute));
        server.remove("variables");
        rewritten.push(Value::Object(server));
    }

    if let Some(root) = document.as_object_mut() {
        root.insert("servers".into(), Value::Array(rewritten));
    }
    let mut out = ResolvedSpec::from_document(document, spec.origin.clone());
    out.component_index = spec.component_index.clone();
    Ok(out)
}
