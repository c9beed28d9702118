//! Schema helpers shared by compilation and value generation.

use serde_json::{json, Map, Value};

use crate::spec::ResolvedSpec;

/// Replaces local `$ref` nodes with their targets. A reference already on
/// the expansion stack becomes a stub carrying `x-recursive-ref`.
pub fn inline_refs(node: &Value, spec: &ResolvedSpec) -> Value {
    inline_inner(node, spec, &mut Vec::new())
}

fn inline_inner(node: &Value, spec: &ResolvedSpec, stack: &mut Vec<String>) -> Value {
    match node {
        Value::Object(map) => {
            if let Some(Value::String(reference)) = map.get("$ref") {
                if stack.contains(reference) {
                    let name = reference.rsplit('/').next().unwrap_or_default();
                    let ty = spec
                        .resolve_local(reference)
                        .and_then(|t| t.get("type"))
                        .cloned()
                        .unwrap_or_else(|| json!("object"));
                    return json!({"type": ty, "x-recursive-ref": name});
                }
                let Some(target) = spec.resolve_local(reference) else {
                    return node.clone();
                };
                stack.push(reference.clone());
                let out = inline_inner(target, spec, stack);
                stack.pop();
                return out;
            }
            Value::Object(
                map.iter()
                    .map(|(k, v)| (k.clone(), inline_inner(v, spec, stack)))
                    .collect(),
            )
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| inline_inner(v, spec, stack)).collect()),
        other => other.clone(),
    }
}

/// Follows `$ref` chains on a single node without expanding children.
pub fn follow<'a>(node: &'a Value, spec: &'a ResolvedSpec) -> &'a Value {
    let mut current = node;
    for _ in 0..16 {
        match current.get("$ref").and_then(Value::as_str).and_then(|r| spec.resolve_local(r)) {
            Some(next) => current = next,
            None => break,
        }
    }
    current
}

/// Folds `allOf` members into one schema (properties and `required` merged).
pub fn flatten_all_of(schema: &Value) -> Value {
    let Some(parts) = schema.get("allOf").and_then(Value::as_array) else {
        return schema.clone();
    };
    let mut merged: Map<String, Value> = schema.as_object().cloned().unwrap_or_default();
    merged.remove("allOf");
    let mut properties = merged
        .get("properties")
        .and_then(Value::as_object)
        .cloned()
        .unwrap_or_default();
    let mut required: Vec<Value> = merged
        .get("required")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    for part in parts {
        let part = flatten_all_of(part);
        if let Some(props) = part.get("properties").and_then(Value::as_object) {
            for (k, v) in props {
                properties.insert(k.clone(), v.clone());
            }
        }
        for r in part.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !required.contains(r) {
                required.push(r.clone());
            }
        }
        if let Some(obj) = part.as_object() {
            for (k, v) in obj {
                if !matches!(k.as_str(), "properties" | "required") && !merged.contains_key(k) {
                    merged.insert(k.clone(), v.clone());
                }
            }
        }
    }
    if !properties.is_empty() {
        merged.insert("properties".into(), Value::Object(properties));
        merged.entry("type").or_insert_with(|| json!("object"));
    }
    if !required.is_empty() {
        merged.insert("required".into(), Value::Array(required));
    }
    Value::Object(merged)
}

/// The schema's effective JSON type.
pub fn schema_type(schema: &Value) -> Option<&str> {
    match schema.get("type") {
        Some(Value::String(t)) => Some(t.as_str()),
        // 3.1 style `type: [string, "null"]`
        Some(Value::Array(types)) => types.iter().filter_map(Value::as_str).find(|t| *t != "null"),
        _ => {
            if schema.get("properties").is_some() || schema.get("allOf").is_some() {
                Some("object")
            } else if schema.get("items").is_some() {
                Some("array")
            } else if let Some(Value::Array(values)) = schema.get("enum") {
                values.first().map(json_type_name)
            } else {
                None
            }
        }
    }
}

pub fn json_type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Whether `value` is acceptable for a schema of `expected` type.
pub fn type_accepts(expected: Option<&str>, value: &Value) -> bool {
    match (expected, value) {
        (None, _) => true,
        (Some("integer"), Value::Number(n)) => n.is_i64() || n.is_u64(),
        (Some("number"), Value::Number(_)) => true,
        (Some(t), v) => json_type_name(v) == t,
    }
}

/// Property names of an object schema, in declaration order.
pub fn property_names(schema: &Value) -> Vec<String> {
    flatten_all_of(schema)
        .get("properties")
        .and_then(Value::as_object)
        .map(|p| p.keys().cloned().collect())
        .unwrap_or_default()
}

pub fn required_names(schema: &Value) -> Vec<String> {
    flatten_all_of(schema)
        .get("required")
        .and_then(Value::as_array)
        .map(|r| r.iter().filter_map(Value::as_str).map(str::to_owned).collect())
        .unwrap_or_default()
}

/// Visits every named schema (object properties) below `schema`.
pub fn visit_named<F: FnMut(&str, &Value)>(schema: &Value, f: &mut F) {
    visit_inner(schema, f, 0);
}

fn visit_inner<F: FnMut(&str, &Value)>(schema: &Value, f: &mut F, depth: usize) {
    if depth > 12 {
        return;
    }
    let schema = flatten_all_of(schema);
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        for (name, sub) in props {
            f(name, sub);
            visit_inner(sub, f, depth + 1);
        }
    }
    if let Some(items) = schema.get("items") {
        visit_inner(items, f, depth + 1);
    }
    for key in ["oneOf", "anyOf"] {
        for alt in schema.get(key).and_then(Value::as_array).into_iter().flatten() {
            visit_inner(alt, f, depth + 1);
        }
    }
}
