use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::template::{ConsumedSlot, HandleSource, ParamLocation, RequestTemplate};

/// `producer` exposes `handle`, which fills path slot `slot` of `consumer`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub producer: String,
    pub consumer: String,
    pub handle: String,
    pub slot: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<DependencyEdge>,
}

impl DependencyGraph {
    pub fn producers_of<'a>(&'a self, consumer: &'a str) -> impl Iterator<Item = &'a DependencyEdge> {
        self.edges.iter().filter(move |e| e.consumer == consumer)
    }
}

/// Case, `-` and `_` insensitive; a trailing `id`/`ref` is dropped unless
/// it is the whole name.
pub fn normalize_handle_name(name: &str) -> String {
    let flat: String = name
        .chars()
        .filter(|c| *c != '-' && *c != '_')
        .flat_map(char::to_lowercase)
        .collect();
    for suffix in ["id", "ref"] {
        if let Some(stem) = flat.strip_suffix(suffix) {
            if !stem.is_empty() {
                return stem.to_string();
            }
        }
    }
    flat
}

/// Edges between templates of the same API. Ordered by producer,
/// consumer, handle; no self-loops.
pub fn infer_dependencies(templates: &[RequestTemplate]) -> DependencyGraph {
    let mut edges = BTreeSet::new();
    for producer in templates {
        for consumer in templates {
            if producer.template_id == consumer.template_id || producer.service != consumer.service {
                continue;
            }
            for slot in &consumer.path_params {
                let wanted = normalize_handle_name(&slot.name);
                for handle in &producer.produces {
                    let handle_name = match handle.source {
                        HandleSource::BodyField if normalize_handle_name(&handle.name) == wanted => {
                            handle.name.clone()
                        }
                        HandleSource::LocationHeader
                            if consumer.path_template
                                == format!("{}/{{{}}}", producer.path_template, slot.name) =>
                        {
                            slot.name.clone()
                        }
                        _ => continue,
                    };
                    edges.insert(DependencyEdge {
                        producer: producer.template_id.clone(),
                        consumer: consumer.template_id.clone(),
                        handle: handle_name,
                        slot: slot.name.clone(),
                    });
                }
            }
        }
    }
    DependencyGraph {
        nodes: templates.iter().map(|t| t.template_id.clone()).collect(),
        edges: edges.into_iter().collect(),
    }
}

/// Fills each template's `consumes` from the graph.
pub fn apply_dependencies(templates: &mut [RequestTemplate], graph: &DependencyGraph) {
    for t in templates.iter_mut() {
        let mut slots: Vec<ConsumedSlot> = graph
            .producers_of(&t.template_id)
            .map(|e| ConsumedSlot {
                slot: e.slot.clone(),
                location: ParamLocation::Path,
            })
            .collect();
        slots.sort();
        slots.dedup();
        t.consumes = slots;
    }
}
