use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grammar::{DependencyEdge, RequestTemplate};

/// A consumed slot filled from an earlier step's response.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Binding {
    pub slot: String,
    pub from_step: usize,
    pub handle: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub template_id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bindings: Vec<Binding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSequence {
    pub id: u64,
    pub steps: Vec<Step>,
}

impl TestSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Breadth-first planner over sequence length.
///
/// Level 1 holds every dependency-free template. Level k+1 extends each
/// retained level-k prefix (all steps 2xx) by every template whose consumed
/// slots can be bound from the prefix, plus every dependency-free template.
/// Consumers never run without bindings.
pub struct Planner {
    templates: Vec<String>,
    consumes: BTreeMap<String, Vec<String>>,
    /// consumer → slot → producers (with handle name).
    producers: BTreeMap<String, BTreeMap<String, Vec<(String, String)>>>,
    rng: ChaCha8Rng,
    next_id: u64,
    max_length: usize,
    max_prefixes: usize,
}

impl Planner {
    pub fn new(
        templates: &[RequestTemplate],
        edges: &[DependencyEdge],
        seed: u64,
        max_length: usize,
        max_prefixes: usize,
    ) -> Self {
        let mut producers: BTreeMap<String, BTreeMap<String, Vec<(String, String)>>> = BTreeMap::new();
        for e in edges {
            producers
                .entry(e.consumer.clone())
                .or_default()
                .entry(e.slot.clone())
                .or_default()
                .push((e.producer.clone(), e.handle.clone()));
        }
        Planner {
            templates: templates.iter().map(|t| t.template_id.clone()).collect(),
            consumes: templates
                .iter()
                .map(|t| (t.template_id.clone(), t.consumes.iter().map(|c| c.slot.clone()).collect()))
                .collect(),
            producers,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 0,
            max_length: max_length.max(1),
            max_prefixes: max_prefixes.max(1),
        }
    }

    /// Reserves a sequence id outside the plan, e.g. for checker probes.
    pub fn reserve_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn sequence(&mut self, steps: Vec<Step>) -> TestSequence {
        TestSequence {
            id: self.reserve_id(),
            steps,
        }
    }

    fn free(&self, id: &str) -> bool {
        self.consumes.get(id).is_none_or(Vec::is_empty)
    }

    pub fn first_level(&mut self) -> Vec<TestSequence> {
        let free: Vec<String> = self.templates.iter().filter(|t| self.free(t)).cloned().collect();
        free.into_iter()
            .map(|template_id| {
                let seed = self.rng.next_u64();
                self.sequence(vec![Step {
                    template_id,
                    seed,
                    bindings: Vec::new(),
                }])
            })
            .collect()
    }

    /// Bindings for `consumer` from the latest eligible producer step.
    fn bind(&self, consumer: &str, prefix: &[Step]) -> Option<Vec<Binding>> {
        let slots = self.consumes.get(consumer)?;
        let mut out = Vec::new();
        for slot in slots {
            let candidates = self.producers.get(consumer)?.get(slot)?;
            let (from_step, handle) = prefix.iter().enumerate().rev().find_map(|(i, step)| {
                candidates
                    .iter()
                    .find(|(p, _)| *p == step.template_id)
                    .map(|(_, h)| (i, h.clone()))
            })?;
            out.push(Binding {
                slot: slot.clone(),
                from_step,
                handle,
            });
        }
        Some(out)
    }

    /// Next level from the retained prefixes, in the given order. Returns
    /// an empty plan once `max_length` is reached.
    pub fn extend(&mut self, retained: &[TestSequence]) -> Vec<TestSequence> {
        let mut out = Vec::new();
        for prefix in retained.iter().take(self.max_prefixes) {
            if prefix.len() >= self.max_length {
                continue;
            }
            for template_id in self.templates.clone() {
                let bindings = if self.free(&template_id) {
                    Vec::new()
                } else {
                    match self.bind(&template_id, &prefix.steps) {
                        Some(b) => b,
                        None => continue,
                    }
                };
                let mut steps = prefix.steps.clone();
                steps.push(Step {
                    template_id,
                    seed: self.rng.next_u64(),
                    bindings,
                });
                out.push(self.sequence(steps));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::ConsumedSlot;
    use crate::grammar::ParamLocation;

    fn template(id: &str, consumes: &[&str]) -> RequestTemplate {
        let (method, path) = id.split_once(' ').unwrap();
        RequestTemplate {
            template_id: id.into(),
            service: "svc".into(),
            server: "http://127.0.0.1:1".into(),
            method: method.into(),
            path_template: path.into(),
            auth_scope: None,
            path_params: Vec::new(),
            query_params: Vec::new(),
            header_params: Vec::new(),
            body: None,
            declared_responses: BTreeMap::new(),
            produces: Vec::new(),
            consumes: consumes
                .iter()
                .map(|s| ConsumedSlot {
                    slot: s.to_string(),
                    location: ParamLocation::Path,
                })
                .collect(),
        }
    }

    fn edge(p: &str, c: &str, h: &str) -> DependencyEdge {
        DependencyEdge {
            producer: p.into(),
            consumer: c.into(),
            handle: h.into(),
            slot: h.into(),
        }
    }

    #[test]
    fn three_free_gets_are_level_one() {
        let ts = [template("GET /a", &[]), template("GET /b", &[]), template("GET /c", &[])];
        let mut p = Planner::new(&ts, &[], 7, 4, 256);
        let l1 = p.first_level();
        assert_eq!(l1.len(), 3);
        assert!(l1.iter().all(|s| s.len() == 1));
        let l2 = p.extend(&l1);
        assert_eq!(l2.len(), 9);
        assert!(l2.iter().all(|s| s.len() == 2));
    }

    #[test]
    fn consumer_only_after_its_producer() {
        let ts = [template("POST /s", &[]), template("DELETE /s/{id}", &["id"])];
        let edges = [edge("POST /s", "DELETE /s/{id}", "id")];
        let mut p = Planner::new(&ts, &edges, 7, 4, 256);
        let l1 = p.first_level();
        assert_eq!(l1.len(), 1);
        let l2 = p.extend(&l1);
        let ids: Vec<Vec<&str>> = l2
            .iter()
            .map(|s| s.steps.iter().map(|st| st.template_id.as_str()).collect())
            .collect();
        assert_eq!(ids, vec![vec!["POST /s", "POST /s"], vec!["POST /s", "DELETE /s/{id}"]]);
        let delete = &l2[1].steps[1];
        assert_eq!(
            delete.bindings,
            vec![Binding {
                slot: "id".into(),
                from_step: 0,
                handle: "id".into()
            }]
        );
    }

    #[test]
    fn unretained_prefixes_are_not_extended() {
        let ts = [template("POST /s", &[])];
        let mut p = Planner::new(&ts, &[], 7, 4, 256);
        let _ = p.first_level();
        assert!(p.extend(&[]).is_empty());
    }

    #[test]
    fn max_length_stops_growth() {
        let ts = [template("GET /a", &[])];
        let mut p = Planner::new(&ts, &[], 7, 2, 256);
        let l1 = p.first_level();
        let l2 = p.extend(&l1);
        assert!(p.extend(&l2).is_empty());
    }

    #[test]
    fn same_seed_same_plan() {
        let ts = [template("GET /a", &[]), template("GET /b", &[])];
        let plan = |seed| {
            let mut p = Planner::new(&ts, &[], seed, 4, 256);
            let l1 = p.first_level();
            let l2 = p.extend(&l1);
            (l1, l2)
        };
        assert_eq!(plan(3), plan(3));
        assert_ne!(plan(3), plan(4));
    }
}
