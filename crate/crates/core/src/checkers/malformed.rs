use std::collections::BTreeMap;

use serde_json::Value;

use super::MALFORMED_VALUE;
use crate::engine::{plain_text, render, stable_draft, ConcreteRequest, DraftParam, EngineError};
use crate::grammar::{schema::schema_type, FuzzDictionary, ParamEncoding, ParamLocation, ParamSpec, RequestTemplate};

pub const MALFORMATIONS: [&str; 4] = ["truncated", "wrong_type", "over_long", "invalid_chars"];

const OVER_LONG: usize = 4096;
const INVALID_CHARS: &str = "\u{0}<>\"'{}|\\^`";

#[derive(Clone, Copy)]
enum Structure {
    Json,
    Uuid,
    DateTime,
    Uri,
}

fn structure(spec: &ParamSpec) -> Option<Structure> {
    if spec.encoding == ParamEncoding::Json {
        return Some(Structure::Json);
    }
    if schema_type(&spec.schema).is_some_and(|t| t != "string") {
        return None;
    }
    match spec.schema.get("format").and_then(Value::as_str)? {
        "uuid" => Some(Structure::Uuid),
        "date-time" | "date" => Some(Structure::DateTime),
        "uri" | "uri-reference" | "url" => Some(Structure::Uri),
        _ => None,
    }
}

fn malform(pattern: &str, structure: Structure, stable: &str) -> String {
    match pattern {
        "truncated" => match (structure, stable.find(':')) {
            (Structure::Json, Some(i)) => stable[..=i].to_string(),
            _ => stable.chars().take(stable.chars().count() / 2).collect(),
        },
        "wrong_type" => match structure {
            Structure::Json => "42".into(),
            Structure::Uuid => "not-a-uuid".into(),
            Structure::DateTime => "not-a-date".into(),
            Structure::Uri => "not a uri".into(),
        },
        "over_long" => format!("{stable}{}", "A".repeat(OVER_LONG)),
        _ => format!("{stable}{INVALID_CHARS}"),
    }
}

/// For every fuzzable parameter with a structured format (JSON content,
/// uuid, date-time, uri), one request per malformation pattern. Slots
/// filled from handles are left alone.
pub fn malformed_variants(
    template: &RequestTemplate,
    dict: &FuzzDictionary,
    bindings: &BTreeMap<String, Value>,
) -> Result<Vec<ConcreteRequest>, EngineError> {
    let base = stable_draft(template, dict, bindings)?;
    let mut out = Vec::new();
    for spec in template.params().filter(|s| s.fuzzable && !bindings.contains_key(&s.name)) {
        let Some(kind) = structure(spec) else { continue };
        let stable_value = dict.stable_value(&spec.name, &spec.schema).unwrap_or(Value::Null);
        let stable = match spec.encoding {
            ParamEncoding::Json => stable_value.to_string(),
            ParamEncoding::Plain => plain_text(&stable_value),
        };
        for pattern in MALFORMATIONS {
            let text = malform(pattern, kind, &stable);
            let mut d = base.clone();
            let param = DraftParam {
                name: spec.name.clone(),
                value: Value::String(text.clone()),
                raw: true,
            };
            match spec.location {
                ParamLocation::Path => {
                    for (slot, v) in &mut d.path {
                        if *slot == spec.name {
                            *v = text.clone();
                        }
                    }
                }
                ParamLocation::Query => replace_or_push(&mut d.query, param),
                ParamLocation::Header => replace_or_push(&mut d.headers, param),
            }
            out.push(render(template, &d, &format!("{MALFORMED_VALUE}:{}:{pattern}", spec.name), 0));
        }
    }
    Ok(out)
}

fn replace_or_push(params: &mut Vec<DraftParam>, param: DraftParam) {
    match params.iter_mut().find(|p| p.name == param.name) {
        Some(slot) => *slot = param,
        None => params.push(param),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_cuts_after_first_colon() {
        assert_eq!(malform("truncated", Structure::Json, r#"{"sst":1,"sd":"010203"}"#), r#"{"sst":"#);
        assert_eq!(malform("truncated", Structure::Uuid, "abcdef"), "abc");
        assert_eq!(malform("wrong_type", Structure::Uuid, "x"), "not-a-uuid");
        assert_eq!(malform("over_long", Structure::Uri, "u").len(), 1 + OVER_LONG);
        assert!(malform("invalid_chars", Structure::DateTime, "d").starts_with("d\u{0}"));
    }
}
