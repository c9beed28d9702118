use std::collections::BTreeMap;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::grammar::{ParamEncoding, ParamSpec, RequestTemplate};
use crate::http::{header_value, HttpRequest};

/// Everything except RFC 3986 unreserved characters is escaped.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

pub fn encode_component(text: &str) -> String {
    utf8_percent_encode(text, COMPONENT).to_string()
}

/// Where a path slot's value came from. Drives the status-mapping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    Handle,
    Overlay,
    Pinned,
    Dictionary,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub template_id: String,
    /// `explore` or `<checker>:<detail>`.
    pub mutation: String,
    /// Seed of the step's RNG stream (0 for stable instantiation).
    pub seed: u64,
    pub choices: Vec<String>,
    pub path_sources: BTreeMap<String, ValueSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub overlay_headers: Vec<String>,
}

/// A fully rendered request plus what is needed to re-render it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcreteRequest {
    pub method: String,
    /// Origin, e.g. `http://127.0.0.1:8001`.
    pub server: String,
    pub path_template: String,
    /// Unencoded slot values in path order.
    pub path_values: Vec<(String, String)>,
    /// Encoded query string without `?`.
    pub query: String,
    pub headers: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    pub provenance: Provenance,
}

impl ConcreteRequest {
    pub fn path(&self) -> String {
        render_path(&self.path_template, &self.path_values)
    }

    pub fn url(&self) -> String {
        let mut url = format!("{}{}", self.server, self.path());
        if !self.query.is_empty() {
            url.push('?');
            url.push_str(&self.query);
        }
        url
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        header_value(&self.headers, name)
    }

    pub fn to_http(&self) -> HttpRequest {
        HttpRequest {
            method: self.method.clone(),
            url: self.url(),
            headers: self.headers.clone(),
            body: self.body.clone(),
        }
    }

    /// Replaces a path slot's value, e.g. with a freshly extracted handle.
    pub fn set_path_value(&mut self, slot: &str, value: &str) {
        for (name, v) in &mut self.path_values {
            if name == slot {
                *v = value.to_string();
            }
        }
    }

    /// The request with any Authorization header removed.
    pub fn without_authorization(&self) -> ConcreteRequest {
        let mut out = self.clone();
        out.headers.retain(|(k, _)| !k.eq_ignore_ascii_case("authorization"));
        out
    }

    /// `(name, raw value)` pairs of the query string, decoded.
    pub fn query_pairs(&self) -> Vec<(String, String)> {
        url::form_urlencoded::parse(self.query.as_bytes())
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect()
    }
}

pub fn render_path(template: &str, values: &[(String, String)]) -> String {
    let mut out = template.to_string();
    for (slot, value) in values {
        out = out.replace(&format!("{{{slot}}}"), &encode_component(value));
    }
    out
}

/// A query/header value before encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftParam {
    pub name: String,
    pub value: Value,
    /// Put `value` (a string) on the wire verbatim, bypassing encoding.
    #[serde(default)]
    pub raw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DraftBody {
    Json(Value),
    /// Exact body text; used for inputs JSON values cannot express.
    Raw(String),
}

/// A request's parts before wire encoding. Checkers mutate drafts.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub path: Vec<(String, String)>,
    pub query: Vec<DraftParam>,
    pub headers: Vec<DraftParam>,
    pub body: Option<DraftBody>,
    pub path_sources: BTreeMap<String, ValueSource>,
    pub choices: Vec<String>,
    pub overlay_headers: Vec<String>,
}

/// Text form of a scalar or structure for one parameter.
pub fn plain_text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        Value::Null => "null".into(),
        Value::Bool(_) | Value::Number(_) => value.to_string(),
        Value::Array(items) => items.iter().map(plain_text).collect::<Vec<_>>().join(","),
        Value::Object(_) => value.to_string(),
    }
}

/// Wire values for one parameter; exploded arrays yield several.
pub fn wire_values(spec: Option<&ParamSpec>, param: &DraftParam) -> Vec<String> {
    if param.raw {
        return vec![plain_text(&param.value)];
    }
    let encoding = spec.map(|s| s.encoding).unwrap_or_default();
    let explode = spec.is_none_or(|s| s.explode);
    match (&param.value, encoding) {
        (v, ParamEncoding::Json) => vec![v.to_string()],
        (Value::Array(items), ParamEncoding::Plain) if explode => items.iter().map(plain_text).collect(),
        (v, ParamEncoding::Plain) => vec![plain_text(v)],
    }
}

fn form_body(value: &Value) -> String {
    let mut form = url::form_urlencoded::Serializer::new(String::new());
    if let Value::Object(map) = value {
        for (k, v) in map {
            form.append_pair(k, &plain_text(v));
        }
    }
    form.finish()
}

pub fn render(template: &RequestTemplate, draft: &Draft, mutation: &str, seed: u64) -> ConcreteRequest {
    let mut query = Vec::new();
    for p in &draft.query {
        let spec = template.query_params.iter().find(|s| s.name == p.name);
        for v in wire_values(spec, p) {
            query.push(format!("{}={}", encode_component(&p.name), encode_component(&v)));
        }
    }
    let mut headers = Vec::new();
    let body = draft.body.as_ref().map(|b| {
        let media = template
            .body
            .as_ref()
            .map(|s| s.media_type.clone())
            .unwrap_or_else(|| "application/json".into());
        let text = match b {
            DraftBody::Raw(text) => text.clone(),
            DraftBody::Json(v) if media.contains("x-www-form-urlencoded") => form_body(v),
            DraftBody::Json(v) => v.to_string(),
        };
        headers.push(("Content-Type".to_string(), media));
        text
    });
    for p in &draft.headers {
        let spec = template.header_params.iter().find(|s| s.name == p.name);
        if let Some(v) = wire_values(spec, p).into_iter().next() {
            headers.push((p.name.clone(), v));
        }
    }
    ConcreteRequest {
        method: template.method.clone(),
        server: template.server.clone(),
        path_template: template.path_template.clone(),
        path_values: draft.path.clone(),
        query: query.join("&"),
        headers,
        body,
        provenance: Provenance {
            template_id: template.template_id.clone(),
            mutation: mutation.to_string(),
            seed,
            choices: draft.choices.clone(),
            path_sources: draft.path_sources.clone(),
            overlay_headers: draft.overlay_headers.clone(),
        },
    }
}
