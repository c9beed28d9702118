use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::request::{render, ConcreteRequest, Draft, DraftBody, DraftParam, ValueSource};
use super::EngineError;
use crate::grammar::schema::{flatten_all_of, required_names, schema_type};
use crate::grammar::{FuzzDictionary, ParamSpec, RequestTemplate};

pub const DEFAULT_OPTIONAL_PROBABILITY: f64 = 0.75;
const MAX_DEPTH: usize = 8;

/// How values are chosen.
pub enum Choice<'a> {
    /// Seeded random draws; optional members present with probability `p`.
    Random { rng: &'a mut ChaCha8Rng, optional_probability: f64 },
    /// Every optional member present, first (stable) values everywhere.
    Stable,
}

struct Builder<'a, 'b> {
    dict: &'a FuzzDictionary,
    choice: Choice<'b>,
    choices: Vec<String>,
}

impl Builder<'_, '_> {
    fn optional_present(&mut self) -> bool {
        match &mut self.choice {
            Choice::Random { rng, optional_probability } => rng.gen_bool(optional_probability.clamp(0.0, 1.0)),
            Choice::Stable => true,
        }
    }

    /// Picks a leaf value; overlay values get half the probability mass.
    fn leaf(&mut self, name: &str, schema: &Value, label: &str) -> (Value, ValueSource) {
        let pool = self.dict.pool_for(name, schema);
        let overlay = self.dict.overlay.get(name);
        let overlay_len = pool.iter().take_while(|v| overlay.is_some_and(|o| o.contains(v))).count();
        let stable = || self.dict.stable_value(name, schema).unwrap_or(Value::Null);
        let (value, index) = match &mut self.choice {
            Choice::Stable => {
                let v = stable();
                let i = pool.iter().position(|p| *p == v);
                (v, i)
            }
            Choice::Random { rng, .. } if !pool.is_empty() => {
                let i = if overlay_len > 0 && rng.gen_bool(0.5) {
                    rng.gen_range(0..overlay_len)
                } else {
                    rng.gen_range(0..pool.len())
                };
                (pool[i].clone(), Some(i))
            }
            Choice::Random { .. } => (stable(), None),
        };
        let source = match index {
            Some(i) if i < overlay_len => ValueSource::Overlay,
            _ => ValueSource::Dictionary,
        };
        if !label.is_empty() {
            self.choices.push(match index {
                Some(i) => format!("{label}=pool[{i}]"),
                None => format!("{label}=stable"),
            });
        }
        (value, source)
    }

    fn value(&mut self, name: &str, schema: &Value, depth: usize, pinned: &[String]) -> Value {
        if schema.get("x-recursive-ref").is_some() || depth > MAX_DEPTH {
            return json!({});
        }
        let schema = flatten_all_of(schema);
        for key in ["oneOf", "anyOf"] {
            if let Some(first) = schema.get(key).and_then(Value::as_array).and_then(|a| a.first()) {
                return self.value(name, first, depth, pinned);
            }
        }
        match schema_type(&schema) {
            Some("object") if schema.get("enum").is_none() => {
                let mut out = Map::new();
                let required = required_names(&schema);
                let props = schema.get("properties").and_then(Value::as_object).cloned().unwrap_or_default();
                for (key, sub) in &props {
                    let is_pinned = depth == 0 && pinned.contains(key);
                    if required.contains(key) || is_pinned || self.optional_present() {
                        let v = if is_pinned {
                            self.dict.stable_value(key, sub).unwrap_or(Value::Null)
                        } else {
                            self.value(key, sub, depth + 1, pinned)
                        };
                        out.insert(key.clone(), v);
                    }
                }
                Value::Object(out)
            }
            Some("array") => {
                let min = schema.get("minItems").and_then(Value::as_u64).unwrap_or(1).max(1) as usize;
                let count = match &mut self.choice {
                    Choice::Random { rng, .. } => rng.gen_range(min..=min + 1),
                    Choice::Stable => min,
                };
                let items = schema.get("items").cloned().unwrap_or(json!({"type": "string"}));
                Value::Array((0..count).map(|_| self.value(name, &items, depth + 1, pinned)).collect())
            }
            _ => self.leaf(name, &schema, "").0,
        }
    }

    fn param(&mut self, spec: &ParamSpec) -> Value {
        if let Some(v) = &spec.pinned_value {
            return v.clone();
        }
        if !spec.fuzzable {
            return self.dict.stable_value(&spec.name, &spec.schema).unwrap_or(Value::Null);
        }
        match schema_type(&spec.schema) {
            Some("object") | Some("array") if spec.schema.get("enum").is_none() => {
                // Whole-value overlay entries win over composition.
                let overlay_len = self.dict.overlay.get(&spec.name).map_or(0, Vec::len);
                let use_overlay = overlay_len > 0
                    && match &mut self.choice {
                        Choice::Stable => true,
                        Choice::Random { rng, .. } => rng.gen_bool(0.5),
                    };
                if use_overlay {
                    let i = match &mut self.choice {
                        Choice::Random { rng, .. } => rng.gen_range(0..overlay_len),
                        Choice::Stable => 0,
                    };
                    self.choices.push(format!("{}=overlay[{i}]", spec.name));
                    return self.dict.overlay[&spec.name][i].clone();
                }
                self.choices.push(format!("{}=generated", spec.name));
                self.value(&spec.name, &spec.schema, 1, &[])
            }
            _ => self.leaf(&spec.name, &spec.schema, &spec.name).0,
        }
    }
}

/// Builds a draft. `bindings` must cover every consumed slot.
pub fn draft(
    template: &RequestTemplate,
    dict: &FuzzDictionary,
    bindings: &BTreeMap<String, Value>,
    choice: Choice<'_>,
) -> Result<Draft, EngineError> {
    let mut b = Builder {
        dict,
        choice,
        choices: Vec::new(),
    };
    let mut path = Vec::new();
    let mut path_sources = BTreeMap::new();
    for spec in &template.path_params {
        let consumed = template.consumes.iter().any(|c| c.slot == spec.name);
        let (value, source) = if let Some(v) = bindings.get(&spec.name) {
            b.choices.push(format!("{}=handle", spec.name));
            (v.clone(), ValueSource::Handle)
        } else if consumed {
            return Err(EngineError::MissingBinding {
                template: template.template_id.clone(),
                slot: spec.name.clone(),
            });
        } else if !spec.fuzzable {
            (b.param(spec), ValueSource::Pinned)
        } else {
            b.leaf(&spec.name, &spec.schema, &spec.name)
        };
        path.push((spec.name.clone(), super::request::plain_text(&value)));
        path_sources.insert(spec.name.clone(), source);
    }

    let optional = |b: &mut Builder, spec: &ParamSpec| -> Option<DraftParam> {
        let present = spec.required || !spec.fuzzable || b.optional_present();
        if !present {
            b.choices.push(format!("{}=omitted", spec.name));
            return None;
        }
        Some(DraftParam {
            name: spec.name.clone(),
            value: b.param(spec),
            raw: false,
        })
    };
    let query: Vec<DraftParam> = template.query_params.iter().filter_map(|s| optional(&mut b, s)).collect();
    let headers: Vec<DraftParam> = template
        .header_params
        .iter()
        .filter(|s| !crate::grammar::is_always_pinned(&s.name))
        .filter_map(|s| optional(&mut b, s))
        .collect();
    let overlay_headers = headers
        .iter()
        .filter(|h| dict.overlay.contains_key(&h.name))
        .map(|h| h.name.clone())
        .collect();

    let body = match &template.body {
        Some(spec) if spec.required || b.optional_present() => {
            let value = b.value("", &spec.schema, 0, &spec.pinned_fields);
            Some(DraftBody::Json(value))
        }
        Some(_) => {
            b.choices.push("body=omitted".into());
            None
        }
        None => None,
    };
    Ok(Draft {
        path,
        query,
        headers,
        body,
        path_sources,
        choices: b.choices,
        overlay_headers,
    })
}

/// Seeded instantiation used by exploration.
pub fn instantiate(
    template: &RequestTemplate,
    dict: &FuzzDictionary,
    bindings: &BTreeMap<String, Value>,
    seed: u64,
    optional_probability: f64,
) -> Result<ConcreteRequest, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = draft(
        template,
        dict,
        bindings,
        Choice::Random {
            rng: &mut rng,
            optional_probability,
        },
    )?;
    Ok(render(template, &d, "explore", seed))
}

/// All optional members present with stable values.
pub fn stable_draft(
    template: &RequestTemplate,
    dict: &FuzzDictionary,
    bindings: &BTreeMap<String, Value>,
) -> Result<Draft, EngineError> {
    draft(template, dict, bindings, Choice::Stable)
}
