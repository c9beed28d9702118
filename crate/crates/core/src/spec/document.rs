use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Number, Value};

use super::{RawSpecDocument, ResolvedSpec, SpecError};

/// Reads and parses an OpenAPI file (YAML or JSON).
pub fn load_document(path: impl AsRef<Path>) -> Result<RawSpecDocument, SpecError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let document = parse_document(&text, path)?;
    check_root(document, path)
}

/// Parses YAML or JSON text into a JSON tree. Non-string mapping keys
/// (YAML lets response codes be bare integers) are stringified.
pub fn parse_document(text: &str, path: &Path) -> Result<Value, SpecError> {
    let is_json = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
    if is_json {
        return serde_json::from_str(text).map_err(|e| SpecError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        });
    }
    let yaml: serde_yaml::Value = serde_yaml::from_str(text).map_err(|e| SpecError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(yaml_to_json(yaml))
}

fn check_root(document: Value, path: &Path) -> Result<RawSpecDocument, SpecError> {
    let Some(root) = document.as_object() else {
        return Err(SpecError::Parse {
            path: path.to_path_buf(),
            message: "document root is not a mapping".into(),
        });
    };
    let version = match root.get("openapi") {
        Some(Value::String(v)) => v.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => String::new(),
        None => {
            // Swagger 2.0 documents carry `swagger` instead of `openapi`.
            if let Some(v) = root.get("swagger") {
                return Err(SpecError::UnsupportedVersion {
                    path: path.to_path_buf(),
                    version: scalar_text(v),
                });
            }
            return Err(SpecError::MissingRoot {
                path: path.to_path_buf(),
                key: "openapi",
            });
        }
    };
    if !(version.starts_with("3.0") || version.starts_with("3.1")) {
        return Err(SpecError::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    for key in ["info", "paths"] {
        if !root.contains_key(key) {
            return Err(SpecError::MissingRoot {
                path: path.to_path_buf(),
                key,
            });
        }
    }
    Ok(RawSpecDocument {
        source_path: path.to_path_buf(),
        document,
        format_version: version,
    })
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub(crate) fn yaml_to_json(value: serde_yaml::Value) -> Value {
    use serde_yaml::Value as Y;
    match value {
        Y::Null => Value::Null,
        Y::Bool(b) => Value::Bool(b),
        Y::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::Number(i.into())
            } else if let Some(u) = n.as_u64() {
                Value::Number(u.into())
            } else {
                n.as_f64()
                    .and_then(Number::from_f64)
                    .map_or(Value::Null, Value::Number)
            }
        }
        Y::String(s) => Value::String(s),
        Y::Sequence(items) => Value::Array(items.into_iter().map(yaml_to_json).collect()),
        Y::Mapping(mapping) => {
            let mut map = Map::new();
            for (k, v) in mapping {
                let key = match k {
                    Y::String(s) => s,
                    Y::Number(n) => n.to_string(),
                    Y::Bool(b) => b.to_string(),
                    Y::Null => "null".to_string(),
                    other => serde_yaml::to_string(&other)
                        .unwrap_or_default()
                        .trim()
                        .to_string(),
                };
                map.insert(key, yaml_to_json(v));
            }
            Value::Object(map)
        }
        Y::Tagged(tagged) => yaml_to_json(tagged.value),
    }
}

/// Writes a bundled spec as YAML into `out_dir`, named after its origin.
pub fn write_bundle(spec: &ResolvedSpec, out_dir: &Path) -> Result<PathBuf, SpecError> {
    fs::create_dir_all(out_dir).map_err(|source| SpecError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let name = format!("{}.yaml", spec.origin_stem());
    let target = out_dir.join(name);
    let text = serde_yaml::to_string(&spec.document).map_err(|e| SpecError::Parse {
        path: target.clone(),
        message: e.to_string(),
    })?;
    fs::write(&target, text).map_err(|source| SpecError::Io {
        path: target.clone(),
        source,
    })?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RawSpecDocument, SpecError> {
        let path = Path::new("inline.yaml");
        check_root(parse_document(text, path)?, path)
    }

    #[test]
    fn one_path_no_refs() {
        let raw = parse(
            "openapi: 3.0.0\ninfo: {title: t, version: '1'}\npaths:\n  /a:\n    get:\n      responses:\n        200: {description: ok}\n",
        )
        .unwrap();
        assert_eq!(raw.path_count(), 1);
        assert!(raw.refs().is_empty());
        assert_eq!(raw.format_version, "3.0.0");
        // bare integer status keys come out as strings
        assert!(raw.document.pointer("/paths/~1a/get/responses/200").is_some());
    }

    #[test]
    fn version_gate() {
        let err = parse("openapi: '2.0'\ninfo: {}\npaths: {}\n").unwrap_err();
        assert!(matches!(err, SpecError::UnsupportedVersion { ref version, .. } if version == "2.0"));
        let err = parse("swagger: '2.0'\ninfo: {}\npaths: {}\n").unwrap_err();
        assert!(matches!(err, SpecError::UnsupportedVersion { .. }));
    }

    #[test]
    fn missing_paths() {
        let err = parse("openapi: 3.0.1\ninfo: {}\n").unwrap_err();
        assert!(matches!(err, SpecError::MissingRoot { key: "paths", .. }));
    }

    #[test]
    fn malformed_yaml() {
        let err = parse("openapi: [3.0\n").unwrap_err();
        assert!(matches!(err, SpecError::Parse { .. }));
    }

    #[test]
    fn openapi_31_accepted() {
        let raw = parse("openapi: 3.1.0\ninfo: {}\npaths: {}\n").unwrap();
        assert_eq!(raw.format_version, "3.1.0");
    }
}
