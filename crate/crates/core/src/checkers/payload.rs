use serde_json::{json, Map, Value};

use crate::engine::DraftBody;

/// Body variants of a valid JSON object, in a fixed order: each member
/// dropped, each member duplicated, one reversed member order, then type
/// flips for every leaf down to depth 2. Pinned top-level members are left
/// alone. At most `cap` variants.
pub fn payload_variants(body: &Value, pinned: &[String], cap: usize) -> Vec<(String, DraftBody)> {
    let Value::Object(map) = body else {
        return Vec::new();
    };
    let free: Vec<&String> = map.keys().filter(|k| !pinned.contains(k)).collect();
    let mut out = Vec::new();

    for key in &free {
        let mut m = map.clone();
        m.shift_remove(key.as_str());
        out.push((format!("drop:{key}"), DraftBody::Json(Value::Object(m))));
    }
    for key in &free {
        out.push((format!("dup:{key}"), DraftBody::Raw(duplicate_member(map, key))));
    }
    if map.len() > 1 {
        let reversed: Map<String, Value> = map.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect();
        out.push(("permute".into(), DraftBody::Json(Value::Object(reversed))));
    }
    for key in &free {
        let value = &map[key.as_str()];
        for (tag, flipped) in flips(value) {
            let mut m = map.clone();
            m.insert(key.to_string(), flipped);
            out.push((format!("flip:{key}:{tag}"), DraftBody::Json(Value::Object(m))));
        }
        if let Value::Object(inner) = value {
            for (sub, leaf) in inner {
                for (tag, flipped) in flips(leaf) {
                    let mut nested = inner.clone();
                    nested.insert(sub.clone(), flipped);
                    let mut m = map.clone();
                    m.insert(key.to_string(), Value::Object(nested));
                    out.push((format!("flip:{key}.{sub}:{tag}"), DraftBody::Json(Value::Object(m))));
                }
            }
        }
    }
    out.truncate(cap);
    out
}

/// Object text with `key` written twice.
fn duplicate_member(map: &Map<String, Value>, key: &str) -> String {
    let members: Vec<String> = map
        .iter()
        .flat_map(|(k, v)| {
            let member = format!("{}:{v}", Value::String(k.clone()));
            let times = if k == key { 2 } else { 1 };
            std::iter::repeat_n(member, times)
        })
        .collect();
    format!("{{{}}}", members.join(","))
}

fn flips(value: &Value) -> Vec<(&'static str, Value)> {
    let candidates = [
        ("string", json!(crate::engine::plain_text(value))),
        ("number", json!(42)),
        ("boolean", json!(true)),
        ("null", Value::Null),
        ("array", json!([value])),
    ];
    let current = match value {
        Value::String(_) => "string",
        Value::Number(_) => "number",
        Value::Bool(_) => "boolean",
        Value::Null => "null",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    };
    candidates.into_iter().filter(|(tag, _)| *tag != current).collect()
}
