//! Reference bundling.
//!
//! External `$ref` targets that live under `components/<section>/<name>` are
//! merged into the root document's `components` and referenced locally.
//! Targets anywhere else are inlined. Name collisions are settled by content:
//! equal definitions share a name, different ones are renamed with a
//! `_from_<filestem>` suffix.

use std::collections::{HashMap, HashSet};
use std::path::{Component, Path, PathBuf};

use serde_json::{Map, Value};

use super::document::parse_document;
use super::{file_stem, RawSpecDocument, ResolvedSpec, SpecError};

/// A parsed `$ref` string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RefTarget {
    /// File part, `None` for document-local references.
    pub file: Option<String>,
    /// JSON pointer without the leading `#`.
    pub pointer: String,
}

impl RefTarget {
    /// Whitespace is dropped first: folded YAML scalars (`>-`) split long
    /// references across lines and join them with spaces.
    pub fn parse(reference: &str) -> RefTarget {
        let compact: String = reference.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.split_once('#') {
            Some((file, pointer)) => RefTarget {
                file: (!file.is_empty()).then(|| file.to_string()),
                pointer: pointer.to_string(),
            },
            None => RefTarget {
                file: Some(compact),
                pointer: String::new(),
            },
        }
    }

    /// `(section, name)` when the pointer names a component.
    fn component(&self) -> Option<(String, String)> {
        let rest = self.pointer.strip_prefix("/components/")?;
        let (section, name) = rest.split_once('/')?;
        if name.contains('/') {
            return None;
        }
        Some((unescape(section), unescape(name)))
    }
}

fn unescape(token: &str) -> String {
    token.replace("~1", "/").replace("~0", "~")
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

/// Loader that reads referenced files from disk.
pub fn fs_resolver(path: &Path) -> Result<Value, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::ResolverIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_document(&text, path)
}

/// Bundles `raw` into a self-contained document. `resolver` receives the
/// path of each referenced file, relative paths already joined onto the
/// referencing file's directory.
pub fn resolve_refs<F>(raw: &RawSpecDocument, resolver: F) -> Result<ResolvedSpec, SpecError>
where
    F: FnMut(&Path) -> Result<Value, SpecError>,
{
    let root = normalize(&raw.source_path);
    let mut bundler = Bundler {
        root: root.clone(),
        root_doc: raw.document.clone(),
        docs: HashMap::new(),
        resolver,
        order: Vec::new(),
        seen: HashSet::new(),
        assigned: HashMap::new(),
    };

    bundler.collect(&raw.document.clone(), &root)?;
    let new_components = bundler.assign_names()?;

    let mut document = bundler.rewrite(&raw.document.clone(), &root, &mut Vec::new())?;
    for (section, name, file, pointer) in new_components {
        let node = bundler.target_node(&file, &pointer)?;
        let rewritten = bundler.rewrite(&node, &file, &mut Vec::new())?;
        let root_map = document
            .as_object_mut()
            .expect("root checked to be a mapping");
        let components = root_map
            .entry("components")
            .or_insert_with(|| Value::Object(Map::new()));
        let section_map = components
            .as_object_mut()
            .ok_or_else(|| SpecError::Parse {
                path: root.clone(),
                message: "`components` is not a mapping".into(),
            })?
            .entry(section)
            .or_insert_with(|| Value::Object(Map::new()));
        if let Some(section_map) = section_map.as_object_mut() {
            section_map.insert(name, rewritten);
        }
    }

    let spec = ResolvedSpec::from_document(document, raw.source_path.clone());
    check_local_refs(&spec)?;
    Ok(spec)
}

fn check_local_refs(spec: &ResolvedSpec) -> Result<(), SpecError> {
    for reference in spec.refs() {
        if spec.resolve_local(&reference).is_none() {
            return Err(SpecError::DanglingRef {
                reference,
                from: spec.origin.clone(),
            });
        }
    }
    Ok(())
}

type Key = (PathBuf, String);

enum Placement {
    Component { section: String, name: String },
    Inline,
}

struct Bundler<F> {
    root: PathBuf,
    root_doc: Value,
    docs: HashMap<PathBuf, Value>,
    resolver: F,
    /// External targets in first-visit order.
    order: Vec<Key>,
    seen: HashSet<Key>,
    assigned: HashMap<Key, Placement>,
}

impl<F> Bundler<F>
where
    F: FnMut(&Path) -> Result<Value, SpecError>,
{
    fn locate(&self, reference: &str, context: &Path) -> Key {
        let target = RefTarget::parse(reference);
        let file = match target.file {
            None => context.to_path_buf(),
            Some(f) => {
                let base = context.parent().unwrap_or(Path::new(""));
                normalize(&base.join(f))
            }
        };
        (file, target.pointer)
    }

    fn document(&mut self, file: &Path) -> Result<&Value, SpecError> {
        if file == self.root {
            return Ok(&self.root_doc);
        }
        if !self.docs.contains_key(file) {
            let doc = (self.resolver)(file)?;
            self.docs.insert(file.to_path_buf(), doc);
        }
        Ok(&self.docs[file])
    }

    fn target_node(&mut self, file: &Path, pointer: &str) -> Result<Value, SpecError> {
        let doc = self.document(file)?;
        doc.pointer(pointer)
            .cloned()
            .ok_or_else(|| SpecError::DanglingRef {
                reference: format!("{}#{}", file.display(), pointer),
                from: file.to_path_buf(),
            })
    }

    /// Phase one: find every external target reachable from `node`.
    fn collect(&mut self, node: &Value, context: &Path) -> Result<(), SpecError> {
        let mut refs = Vec::new();
        super::collect_refs(node, &mut refs);
        for reference in refs {
            let key = self.locate(&reference, context);
            if key.0 == self.root {
                continue;
            }
            if !self.seen.insert(key.clone()) {
                continue;
            }
            let target = self.target_node(&key.0, &key.1).map_err(|e| match e {
                SpecError::DanglingRef { .. } => SpecError::DanglingRef {
                    reference: reference.clone(),
                    from: context.to_path_buf(),
                },
                other => other,
            })?;
            self.order.push(key.clone());
            self.collect(&target, &key.0)?;
        }
        Ok(())
    }

    /// Phase two: decide the local name of every external component.
    fn assign_names(&mut self) -> Result<Vec<(String, String, PathBuf, String)>, SpecError> {
        // (section, name) → canonical content of whatever holds that name.
        let mut taken: HashMap<(String, String), Value> = HashMap::new();
        if let Some(sections) = self.root_doc.get("components").and_then(Value::as_object) {
            for (section, members) in sections {
                for (name, node) in members.as_object().into_iter().flatten() {
                    let canon = self.canonical(node, &self.root.clone());
                    taken.insert((section.clone(), name.clone()), canon);
                }
            }
        }

        let mut added = Vec::new();
        for key in self.order.clone() {
            let target = RefTarget {
                file: None,
                pointer: key.1.clone(),
            };
            let Some((section, name)) = target.component() else {
                self.assigned.insert(key, Placement::Inline);
                continue;
            };
            let node = self.target_node(&key.0, &key.1)?;
            let canon = self.canonical(&node, &key.0);
            let (final_name, is_new) = match taken.get(&(section.clone(), name.clone())) {
                None => (name.clone(), true),
                Some(existing) if *existing == canon => (name.clone(), false),
                Some(_) => {
                    let renamed = format!("{name}_from_{}", file_stem(&key.0));
                    match taken.get(&(section.clone(), renamed.clone())) {
                        None => (renamed, true),
                        Some(existing) if *existing == canon => (renamed, false),
                        Some(_) => {
                            return Err(SpecError::CollisionUnresolvable {
                                section,
                                name,
                                origin: key.0.clone(),
                                renamed,
                            })
                        }
                    }
                }
            };
            if is_new {
                taken.insert((section.clone(), final_name.clone()), canon);
                added.push((section.clone(), final_name.clone(), key.0.clone(), key.1.clone()));
            }
            self.assigned.insert(
                key,
                Placement::Component {
                    section,
                    name: final_name,
                },
            );
        }
        Ok(added)
    }

    /// Content with every reference made absolute, for equality checks.
    fn canonical(&self, node: &Value, context: &Path) -> Value {
        match node {
            Value::Object(map) => Value::Object(
                map.iter()
                    .map(|(k, v)| match (k.as_str(), v) {
                        ("$ref", Value::String(r)) => {
                            let (file, pointer) = self.locate(r, context);
                            (k.clone(), Value::String(format!("{}#{}", file.display(), pointer)))
                        }
                        _ => (k.clone(), self.canonical(v, context)),
                    })
                    .collect(),
            ),
            Value::Array(items) => {
                Value::Array(items.iter().map(|v| self.canonical(v, context)).collect())
            }
            other => other.clone(),
        }
    }

    fn rewrite(
        &mut self,
        node: &Value,
        context: &Path,
        inline_stack: &mut Vec<Key>,
    ) -> Result<Value, SpecError> {
        match node {
            Value::Object(map) => {
                if let Some(Value::String(reference)) = map.get("$ref") {
                    let key = self.locate(reference, context);
                    if key.0 == self.root {
                        let mut out = map.clone();
                        out.insert("$ref".into(), Value::String(format!("#{}", key.1)));
                        return Ok(Value::Object(out));
                    }
                    match self.assigned.get(&key) {
                        Some(Placement::Component { section, name }) => {
                            let mut out = map.clone();
                            out.insert(
                                "$ref".into(),
                                Value::String(format!(
                                    "#/components/{}/{}",
                                    escape(section),
                                    escape(name)
                                )),
                            );
                            return Ok(Value::Object(out));
                        }
                        Some(Placement::Inline) => {
                            if inline_stack.contains(&key) {
                                return Err(SpecError::InlineCycle {
                                    reference: reference.clone(),
                                });
                            }
                            let target = self.target_node(&key.0, &key.1)?;
                            inline_stack.push(key.clone());
                            let out = self.rewrite(&target, &key.0.clone(), inline_stack);
                            inline_stack.pop();
                            return out;
                        }
                        None => {
                            return Err(SpecError::DanglingRef {
                                reference: reference.clone(),
                                from: context.to_path_buf(),
                            })
                        }
                    }
                }
                let mut out = Map::with_capacity(map.len());
                for (k, v) in map {
                    out.insert(k.clone(), self.rewrite(v, context, inline_stack)?);
                }
                Ok(Value::Object(out))
            }
            Value::Array(items) => items
                .iter()
                .map(|v| self.rewrite(v, context, inline_stack))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array),
            other => Ok(other.clone()),
        }
    }
}

/// Lexical normalization; referenced files need not exist on disk.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for component in path.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}
