use std::collections::BTreeMap;

use serde_json::Value;

use super::OPTIONAL_PARAM_OMISSION;
use crate::engine::{render, stable_draft, ConcreteRequest, EngineError};
use crate::grammar::{FuzzDictionary, ParamSpec, RequestTemplate};

fn omittable(spec: &ParamSpec) -> bool {
    !spec.required && spec.fuzzable
}

/// One request per optional query/header parameter, lacking exactly that
/// parameter; everything else takes its stable value.
pub fn omission_variants(
    template: &RequestTemplate,
    dict: &FuzzDictionary,
    bindings: &BTreeMap<String, Value>,
) -> Result<Vec<ConcreteRequest>, EngineError> {
    let base = stable_draft(template, dict, bindings)?;
    let mut out = Vec::new();
    for spec in template.query_params.iter().filter(|s| omittable(s)) {
        let mut d = base.clone();
        d.query.retain(|p| p.name != spec.name);
        out.push(render(template, &d, &format!("{OPTIONAL_PARAM_OMISSION}:{}", spec.name), 0));
    }
    for spec in template.header_params.iter().filter(|s| omittable(s)) {
        let mut d = base.clone();
        d.headers.retain(|p| p.name != spec.name);
        out.push(render(template, &d, &format!("{OPTIONAL_PARAM_OMISSION}:{}", spec.name), 0));
    }
    Ok(out)
}
