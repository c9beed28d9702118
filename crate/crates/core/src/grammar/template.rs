use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::schema::{flatten_all_of, follow, inline_refs, schema_type};
use super::GrammarError;
use crate::spec::METHODS;
use crate::spec::{nf_name_for_api, ResolvedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLocation {
    Path,
    Query,
    Header,
}

/// How a parameter value is put on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamEncoding {
    /// Scalars as text, arrays per `style`/`explode`.
    #[default]
    Plain,
    /// Serialized JSON (parameters declared through `content`).
    Json,
}

fn is_true(b: &bool) -> bool {
    *b
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub location: ParamLocation,
    pub required: bool,
    pub schema: Value,
    pub fuzzable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_value: Option<Value>,
    #[serde(default)]
    pub encoding: ParamEncoding,
    /// `false` joins array values with commas into a single parameter.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub explode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub media_type: String,
    pub required: bool,
    pub schema: Value,
    /// Body property names held fixed during mutation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned_fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSpec {
    /// Response schema exactly as declared (local refs kept).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub location_header: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandleSource {
    BodyField,
    LocationHeader,
}

/// A value a 2xx response exposes for later requests.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceHandle {
    pub name: String,
    pub source: HandleSource,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConsumedSlot {
    pub slot: String,
    pub location: ParamLocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTemplate {
    /// `"<METHOD> <path_template>"`.
    pub template_id: String,
    /// API name, e.g. `nudm-sdm`.
    pub service: String,
    /// Origin the requests go to, e.g. `http://127.0.0.1:8001`.
    pub server: String,
    pub method: String,
    /// Full path including the server's base path.
    pub path_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_scope: Option<String>,
    pub path_params: Vec<ParamSpec>,
    pub query_params: Vec<ParamSpec>,
    pub header_params: Vec<ParamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySpec>,
    pub declared_responses: BTreeMap<String, ResponseSpec>,
    pub produces: Vec<ResourceHandle>,
    pub consumes: Vec<ConsumedSlot>,
}

impl RequestTemplate {
    pub fn params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.path_params
            .iter()
            .chain(&self.query_params)
            .chain(&self.header_params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamSpec> {
        self.path_params
            .iter_mut()
            .chain(self.query_params.iter_mut())
            .chain(self.header_params.iter_mut())
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params().find(|p| p.name == name)
    }

    /// Whether `status` (e.g. 404) is declared, honoring `4XX` patterns.
    /// `default` does not count.
    pub fn declares(&self, status: u16) -> bool {
        let exact = status.to_string();
        let pattern = format!("{}XX", status / 100);
        self.declared_responses
            .keys()
            .any(|k| *k == exact || k.eq_ignore_ascii_case(&pattern))
    }

    pub fn is_consumer(&self) -> bool {
        !self.consumes.is_empty()
    }

    /// Names of `{slot}` placeholders in path order.
    pub fn path_slots(&self) -> Vec<String> {
        path_slots(&self.path_template)
    }
}

pub(crate) fn path_slots(path: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = path;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else { break };
        out.push(rest[open + 1..open + close].to_string());
        rest = &rest[open + close + 1..];
    }
    out
}

/// Splits a server URL into origin and base path. Unrewritten
/// `{apiRoot}` servers yield an empty origin.
fn split_server(url: &str) -> (String, String) {
    if let Some(rest) = url.strip_prefix("{apiRoot}") {
        return (String::new(), rest.trim_end_matches('/').to_string());
    }
    match url::Url::parse(url) {
        Ok(parsed) => {
            let origin = parsed.origin().ascii_serialization();
            let base = parsed.path().trim_end_matches('/').to_string();
            (origin, base)
        }
        Err(_) => (String::new(), url.trim_end_matches('/').to_string()),
    }
}

fn api_name(spec: &ResolvedSpec, base_path: &str) -> String {
    let first = base_path.trim_start_matches('/').split('/').next().unwrap_or_default();
    if !first.is_empty() {
        return first.to_string();
    }
    // `{apiRoot}` with no base path: fall back to the file stem with the
    // TS number dropped, e.g. `nnrf-accesstoken`.
    let stem = spec.origin_stem().to_ascii_lowercase();
    let parts: Vec<&str> = stem
        .split('_')
        .filter(|p| !(p.starts_with("ts") && p[2..].chars().all(|c| c.is_ascii_digit())))
        .collect();
    parts.join("-")
}

fn first_scope(requirements: Option<&Value>) -> Option<String> {
    requirements?
        .as_array()?
        .iter()
        .filter_map(Value::as_object)
        .flat_map(|req| req.values())
        .filter_map(Value::as_array)
        .flatten()
        .filter_map(Value::as_str)
        .next()
        .map(str::to_owned)
}

fn compile_param(raw: &Value, spec: &ResolvedSpec) -> Option<ParamSpec> {
    let param = follow(raw, spec);
    let name = param.get("name")?.as_str()?.to_string();
    let location = match param.get("in")?.as_str()? {
        "path" => ParamLocation::Path,
        "query" => ParamLocation::Query,
        "header" => ParamLocation::Header,
        _ => return None,
    };
    let (schema, encoding) = match (param.get("schema"), param.get("content")) {
        (Some(schema), _) => (inline_refs(schema, spec), ParamEncoding::Plain),
        (None, Some(Value::Object(content))) => {
            let schema = content
                .values()
                .next()
                .and_then(|media| media.get("schema"))
                .map(|s| inline_refs(s, spec))
                .unwrap_or(Value::Object(Default::default()));
            (schema, ParamEncoding::Json)
        }
        _ => (Value::Object(Default::default()), ParamEncoding::Plain),
    };
    let required = location == ParamLocation::Path
        || param.get("required").and_then(Value::as_bool).unwrap_or(false);
    let explode = param.get("explode").and_then(Value::as_bool).unwrap_or(true);
    Some(ParamSpec {
        name,
        location,
        required,
        schema: flatten_all_of(&schema),
        fuzzable: true,
        pinned_value: None,
        encoding,
        explode,
    })
}

fn pick_media(content: &serde_json::Map<String, Value>) -> Option<(&String, &Value)> {
    content
        .iter()
        .find(|(k, _)| k.as_str() == "application/json")
        .or_else(|| content.iter().find(|(k, _)| k.contains("json")))
        .or_else(|| content.iter().next())
}

fn compile_body(op: &Value, spec: &ResolvedSpec) -> Option<BodySpec> {
    let body = follow(op.get("requestBody")?, spec);
    let (media_type, media) = pick_media(body.get("content")?.as_object()?)?;
    let schema = media
        .get("schema")
        .map(|s| flatten_all_of(&inline_refs(s, spec)))
        .unwrap_or(Value::Object(Default::default()));
    Some(BodySpec {
        media_type: media_type.clone(),
        required: body.get("required").and_then(Value::as_bool).unwrap_or(false),
        schema,
        pinned_fields: Vec::new(),
    })
}

fn has_location_header(response: &Value) -> bool {
    response
        .get("headers")
        .and_then(Value::as_object)
        .is_some_and(|h| h.keys().any(|k| k.eq_ignore_ascii_case("location")))
}

fn response_schema(response: &Value) -> Option<&Value> {
    pick_media(response.get("content")?.as_object()?).and_then(|(_, m)| m.get("schema"))
}

fn compile_responses(
    op: &Value,
    spec: &ResolvedSpec,
) -> (BTreeMap<String, ResponseSpec>, Vec<ResourceHandle>) {
    let mut declared = BTreeMap::new();
    let mut produces = Vec::new();
    for (code, raw) in op.get("responses").and_then(Value::as_object).into_iter().flatten() {
        let response = follow(raw, spec);
        let location_header = has_location_header(response);
        let schema = response_schema(response).cloned();
        if code.starts_with('2') {
            if let Some(schema) = &schema {
                let inlined = flatten_all_of(&inline_refs(schema, spec));
                if schema_type(&inlined) == Some("object") {
                    let props = inlined.get("properties").and_then(Value::as_object);
                    for (name, prop) in props.into_iter().flatten() {
                        if matches!(schema_type(prop), Some("string" | "integer")) {
                            produces.push(ResourceHandle {
                                name: name.clone(),
                                source: HandleSource::BodyField,
                            });
                        }
                    }
                }
            }
            if location_header {
                produces.push(ResourceHandle {
                    name: "Location".into(),
                    source: HandleSource::LocationHeader,
                });
            }
        }
        declared.insert(code.clone(), ResponseSpec { schema, location_header });
    }
    produces.sort();
    produces.dedup();
    (declared, produces)
}

/// One template per `(path, method)` operation, in document order.
pub fn compile(spec: &ResolvedSpec) -> Result<Vec<RequestTemplate>, GrammarError> {
    let paths = spec
        .document
        .get("paths")
        .and_then(Value::as_object)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| GrammarError::EmptySpec {
            origin: spec.origin.display().to_string(),
        })?;
    let server_url = spec
        .server_urls
        .first()
        .cloned()
        .unwrap_or_else(|| "/".to_string());
    let (server, base_path) = split_server(&server_url);
    let service = api_name(spec, &base_path);
    let root_scope = first_scope(spec.document.get("security"));

    let mut out = Vec::new();
    for (path, item) in paths {
        let shared = item.get("parameters").and_then(Value::as_array);
        for method in METHODS {
            let Some(op) = item.get(method) else { continue };
            let mut params: Vec<ParamSpec> = Vec::new();
            let own = op.get("parameters").and_then(Value::as_array);
            for raw in shared.into_iter().chain(own).flatten() {
                let Some(p) = compile_param(raw, spec) else { continue };
                // Operation-level parameters override path-level ones.
                params.retain(|q| !(q.name == p.name && q.location == p.location));
                params.push(p);
            }
            let path_template = format!("{base_path}{path}");
            let method_upper = method.to_ascii_uppercase();
            // Keep path params in slot order.
            let mut path_params = Vec::new();
            for slot in path_slots(&path_template) {
                if let Some(p) = params
                    .iter()
                    .find(|p| p.location == ParamLocation::Path && p.name == slot)
                {
                    path_params.push(p.clone());
                } else {
                    // Undeclared slot: synthesize a required string param.
                    path_params.push(ParamSpec {
                        name: slot,
                        location: ParamLocation::Path,
                        required: true,
                        schema: serde_json::json!({"type": "string"}),
                        fuzzable: true,
                        pinned_value: None,
                        encoding: ParamEncoding::Plain,
                        explode: true,
                    });
                }
            }
            let by_location = |loc| params.iter().filter(|p| p.location == loc).cloned().collect();
            let (declared_responses, produces) = compile_responses(op, spec);
            let auth_scope = match op.get("security") {
                Some(reqs) => first_scope(Some(reqs)),
                None => root_scope.clone(),
            };
            out.push(RequestTemplate {
                template_id: format!("{method_upper} {path_template}"),
                service: service.clone(),
                server: server.clone(),
                method: method_upper,
                path_template,
                auth_scope,
                path_params,
                query_params: by_location(ParamLocation::Query),
                header_params: by_location(ParamLocation::Header),
                body: compile_body(op, spec),
                declared_responses,
                produces,
                consumes: Vec::new(),
            });
        }
    }
    Ok(out)
}

/// NF type to name in `targetNfType`-style fields, e.g. `UDM`.
pub fn nf_type_for_service(service: &str) -> String {
    nf_name_for_api(service).to_ascii_uppercase()
}
