use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::schema::{schema_type, type_accepts, visit_named};
use super::template::RequestTemplate;
use super::GrammarError;

/// Param name → explicit values, tried before anything generated.
pub type Overlay = BTreeMap<String, Vec<Value>>;

pub const NIL_UUID: &str = "00000000-0000-0000-0000-000000000000";
pub const FIXED_UUID: &str = "3fa85f64-5717-4562-b3fc-2c963f66afa6";
pub const ENUM_PROBE: &str = "UNDEFINED_ENUM_VALUE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzDictionary {
    pub strings: Vec<String>,
    pub integers: Vec<i64>,
    pub numbers: Vec<f64>,
    pub booleans: Vec<bool>,
    pub uuids: Vec<String>,
    pub uris: Vec<String>,
    pub datetimes: Vec<String>,
    pub enum_probes: Vec<String>,
    /// Enum members, examples and defaults found in the spec, per name.
    #[serde(default)]
    pub spec_values: BTreeMap<String, Vec<Value>>,
    #[serde(default)]
    pub overlay: Overlay,
}

impl Default for FuzzDictionary {
    fn default() -> Self {
        FuzzDictionary {
            strings: vec![
                String::new(),
                "A".into(),
                "A".repeat(1024),
                "%s%n".into(),
                "\u{00e9}\u{4e2d}\u{0410}\u{1f600}".into(),
            ],
            integers: vec![0, 1, -1, i64::from(i32::MAX)],
            numbers: vec![0.0, -1.5, 1e308],
            booleans: vec![true, false],
            uuids: vec![NIL_UUID.into(), FIXED_UUID.into()],
            uris: vec!["http://example.invalid/cb".into(), "not a uri".into()],
            datetimes: vec![
                "1970-01-01T00:00:00Z".into(),
                "9999-12-31T23:59:59Z".into(),
                "garbage".into(),
            ],
            enum_probes: vec![ENUM_PROBE.into()],
            spec_values: BTreeMap::new(),
            overlay: Overlay::new(),
        }
    }
}

fn push_unique(out: &mut Vec<Value>, v: Value) {
    if !out.contains(&v) {
        out.push(v);
    }
}

impl FuzzDictionary {
    /// Built-in values for a schema, ignoring names.
    pub fn type_pool(&self, schema: &Value) -> Vec<Value> {
        if let Some(Value::Array(members)) = schema.get("enum") {
            let mut out: Vec<Value> = members.clone();
            match schema_type(schema) {
                Some("integer") => {
                    let max = members.iter().filter_map(Value::as_i64).max().unwrap_or(0);
                    out.push(json!(max.saturating_add(1)));
                }
                _ => out.extend(self.enum_probes.iter().map(|s| json!(s))),
            }
            return out;
        }
        let format = schema.get("format").and_then(Value::as_str).unwrap_or_default();
        let strings = |pool: &[String]| pool.iter().map(|s| json!(s)).collect();
        match schema_type(schema) {
            Some("integer") => self.integers.iter().map(|i| json!(i)).collect(),
            Some("number") => self.numbers.iter().map(|n| json!(n)).collect(),
            Some("boolean") => self.booleans.iter().map(|b| json!(b)).collect(),
            Some("string") | None => match format {
                "uuid" => strings(&self.uuids),
                "uri" | "uri-reference" | "url" => strings(&self.uris),
                "date-time" | "date" => strings(&self.datetimes),
                _ => strings(&self.strings),
            },
            _ => Vec::new(),
        }
    }

    /// Candidate values for a named leaf: overlay first, then spec-derived
    /// values of the right type, then the type pool.
    pub fn pool_for(&self, name: &str, schema: &Value) -> Vec<Value> {
        let mut out = Vec::new();
        for v in self.overlay.get(name).into_iter().flatten() {
            push_unique(&mut out, v.clone());
        }
        let expected = schema_type(schema);
        if schema.get("enum").is_none() {
            for v in self.spec_values.get(name).into_iter().flatten() {
                if type_accepts(expected, v) {
                    push_unique(&mut out, v.clone());
                }
            }
        }
        for v in self.type_pool(schema) {
            push_unique(&mut out, v);
        }
        out
    }

    /// The value used when a name is pinned or a stable choice is wanted.
    pub fn stable_value(&self, name: &str, schema: &Value) -> Option<Value> {
        if let Some(v) = self.overlay.get(name).and_then(|v| v.first()) {
            return Some(v.clone());
        }
        if let Some(v) = schema.get("example").or_else(|| schema.get("default")) {
            return Some(v.clone());
        }
        if let Some(v) = schema.get("enum").and_then(Value::as_array).and_then(|e| e.first()) {
            return Some(v.clone());
        }
        let format = schema.get("format").and_then(Value::as_str).unwrap_or_default();
        match schema_type(schema) {
            Some("integer") => Some(json!(1)),
            Some("number") => Some(json!(1.0)),
            Some("boolean") => Some(json!(true)),
            Some("string") | None => Some(json!(match format {
                "uuid" => FIXED_UUID,
                "uri" | "uri-reference" | "url" => "http://example.invalid/cb",
                "date-time" => "2026-01-01T00:00:00Z",
                "date" => "2026-01-01",
                _ => "A",
            })),
            _ => None,
        }
    }
}

/// Every (name, schema) pair in the templates: params and body properties.
fn named_schemas(templates: &[RequestTemplate]) -> Vec<(String, Value)> {
    let mut out = Vec::new();
    for t in templates {
        for p in t.params() {
            out.push((p.name.clone(), p.schema.clone()));
            visit_named(&p.schema, &mut |n, s| out.push((n.to_string(), s.clone())));
        }
        if let Some(body) = &t.body {
            visit_named(&body.schema, &mut |n, s| out.push((n.to_string(), s.clone())));
        }
    }
    out
}

pub fn build_dictionary(
    templates: &[RequestTemplate],
    overlay: Option<&Overlay>,
) -> Result<FuzzDictionary, GrammarError> {
    let mut dict = FuzzDictionary::default();
    let named = named_schemas(templates);
    for (name, schema) in &named {
        let mut found = Vec::new();
        for key in ["enum", "examples"] {
            if let Some(Value::Array(values)) = schema.get(key) {
                found.extend(values.iter().cloned());
            }
        }
        for key in ["example", "default"] {
            if let Some(v) = schema.get(key) {
                found.push(v.clone());
            }
        }
        if found.is_empty() {
            continue;
        }
        let entry = dict.spec_values.entry(name.clone()).or_default();
        for v in found {
            push_unique(entry, v);
        }
    }

    if let Some(overlay) = overlay {
        for (name, values) in overlay {
            for (other, schema) in &named {
                if other != name {
                    continue;
                }
                let expected = schema_type(schema);
                if let Some(bad) = values.iter().find(|v| !type_accepts(expected, v)) {
                    return Err(GrammarError::OverlayTypeMismatch {
                        name: name.clone(),
                        value: bad.clone(),
                        expected: expected.unwrap_or("any").to_string(),
                    });
                }
            }
        }
        dict.overlay = overlay.clone();
    }
    Ok(dict)
}
