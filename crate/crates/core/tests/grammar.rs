use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sbifuzz::grammar::{
    annotate_fuzzable, build_dictionary, compile, infer_dependencies, Grammar, GrammarError, Overlay,
    PinPolicy, ENUM_PROBE,
};
use sbifuzz::spec::{fs_resolver, load_document, resolve_refs, rewrite_servers, DiagnosticKind, HostMap, ResolvedSpec};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn deployed(rel: &str) -> ResolvedSpec {
    let raw = load_document(fixture(rel)).unwrap();
    let spec = resolve_refs(&raw, fs_resolver).unwrap();
    let hosts = HostMap::new("http")
        .with("udm", "127.0.0.1:8001".parse().unwrap())
        .with("nssf", "127.0.0.1:8002".parse().unwrap())
        .with("pcf", "127.0.0.1:8003".parse().unwrap())
        .with("nrf", "127.0.0.1:8000".parse().unwrap())
        .with("xyz", "127.0.0.1:8009".parse().unwrap());
    rewrite_servers(&spec, &hosts).unwrap()
}

const CORPUS: [&str; 5] = [
    "specs/nudm_sdm.yaml",
    "specs/nnssf_nssaiavailability.yaml",
    "specs/npcf_bdtpolicycontrol.yaml",
    "specs/nnrf_disc.yaml",
    "specs/nnrf_accesstoken.yaml",
];

/// Brute-force oracle working on the raw document rather than templates:
/// every (2xx response property, path parameter) pair across operations,
/// compared by a regex-based name rule, plus the Location convention.
fn oracle_edges(spec: &ResolvedSpec) -> BTreeSet<(String, String, String)> {
    let doc = &spec.document;
    let base = url::Url::parse(&spec.server_urls[0]).unwrap().path().trim_end_matches('/').to_string();
    let strip = regex::Regex::new(r"^(.+?)(id|ref)$").unwrap();
    let norm = |s: &str| {
        let flat = s.to_lowercase().replace(['-', '_'], "");
        match strip.captures(&flat) {
            Some(c) => c[1].to_string(),
            None => flat,
        }
    };
    let deref = |v: &Value| {
        let mut v = v.clone();
        while let Some(r) = v.get("$ref").and_then(Value::as_str).map(str::to_owned) {
            v = doc.pointer(&r[1..]).unwrap().clone();
        }
        v
    };

    struct Op {
        id: String,
        path: String,
        fields: Vec<String>,
        location: bool,
        slots: Vec<String>,
    }
    let mut ops = Vec::new();
    for (path, item) in doc["paths"].as_object().unwrap() {
        for (method, op) in item.as_object().unwrap() {
            let mut fields = Vec::new();
            let mut location = false;
            for (code, resp) in op["responses"].as_object().unwrap() {
                if !code.starts_with('2') {
                    continue;
                }
                let resp = deref(resp);
                location |= resp.get("headers").and_then(|h| h.get("Location")).is_some();
                if let Some(schema) = resp.pointer("/content/application~1json/schema") {
                    let schema = deref(schema);
                    for (name, prop) in schema.get("properties").and_then(Value::as_object).into_iter().flatten() {
                        let ty = deref(prop).get("type").cloned();
                        if ty == Some(json!("string")) || ty == Some(json!("integer")) {
                            fields.push(name.clone());
                        }
                    }
                }
            }
            let slots = op
                .get("parameters")
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
                .map(|p| deref(p))
                .filter(|p| p["in"] == "path")
                .map(|p| p["name"].as_str().unwrap().to_string())
                .collect();
            ops.push(Op {
                id: format!("{} {base}{path}", method.to_uppercase()),
                path: format!("{base}{path}"),
                fields,
                location,
                slots,
            });
        }
    }
    let mut edges = BTreeSet::new();
    for p in &ops {
        for c in &ops {
            if p.id == c.id {
                continue;
            }
            for slot in &c.slots {
                for f in &p.fields {
                    if norm(f) == norm(slot) {
                        edges.insert((p.id.clone(), c.id.clone(), f.clone()));
                    }
                }
                if p.location && c.path == format!("{}/{{{slot}}}", p.path) {
                    edges.insert((p.id.clone(), c.id.clone(), slot.clone()));
                }
            }
        }
    }
    edges
}

fn inferred(spec: &ResolvedSpec) -> BTreeSet<(String, String, String)> {
    let templates = compile(spec).unwrap();
    infer_dependencies(&templates)
        .edges
        .into_iter()
        .map(|e| (e.producer, e.consumer, e.handle))
        .collect()
}

#[test]
fn crud_fixture_edges_match_oracle_and_hand_check() {
    let spec = deployed("extra/crud_subscriptions.yaml");
    let got = inferred(&spec);
    assert_eq!(got, oracle_edges(&spec));
    let post = "POST /nxyz-subs/v1/subscriptions".to_string();
    let hand: BTreeSet<_> = [
        (post.clone(), "DELETE /nxyz-subs/v1/subscriptions/{subscriptionId}".to_string(), "subscription_id".to_string()),
        (post, "GET /nxyz-subs/v1/subscriptions/{subscriptionId}".to_string(), "subscription_id".to_string()),
    ]
    .into();
    assert_eq!(got, hand);
}

#[test]
fn corpus_edges_match_oracle() {
    for rel in CORPUS {
        let spec = deployed(rel);
        assert_eq!(inferred(&spec), oracle_edges(&spec), "{rel}");
    }
}

#[test]
fn udm_subscription_edge_present() {
    let got = inferred(&deployed("specs/nudm_sdm.yaml"));
    assert!(got.contains(&(
        "POST /nudm-sdm/v2/shared-data-subscriptions".into(),
        "DELETE /nudm-sdm/v2/shared-data-subscriptions/{subscriptionId}".into(),
        "subscriptionId".into()
    )));
    assert!(got.contains(&(
        "GET /nudm-sdm/v2/{ueId}/id-translation-result".into(),
        "GET /nudm-sdm/v2/{supi}/sm-data".into(),
        "supi".into()
    )));
}

#[test]
fn unrelated_gets_have_no_edges() {
    let spec = ResolvedSpec::from_document(
        json!({"openapi": "3.0.0", "info": {}, "servers": [{"url": "http://h:1/nx/v1"}], "paths": {
            "/a": {"get": {"responses": {"200": {"description": "ok"}}}},
            "/b": {"get": {"responses": {"200": {"description": "ok"}}}}}}),
        "x.yaml",
    );
    assert!(inferred(&spec).is_empty());
}

#[test]
fn udm_shared_data_template() {
    let templates = compile(&deployed("specs/nudm_sdm.yaml")).unwrap();
    let t = templates
        .iter()
        .find(|t| t.template_id == "GET /nudm-sdm/v2/shared-data")
        .unwrap();
    let names: Vec<_> = t.query_params.iter().map(|p| (p.name.as_str(), p.required)).collect();
    assert_eq!(names, vec![("shared-data-ids", false), ("supported-features", false)]);
    assert!(!t.query_params[0].explode);
    assert_eq!(t.auth_scope.as_deref(), Some("nudm-sdm"));
    assert_eq!(t.server, "http://127.0.0.1:8001");
    assert_eq!(t.declared_responses.keys().collect::<Vec<_>>(), vec!["200", "400", "401", "403", "404"]);
}

#[test]
fn pcf_post_has_body() {
    let templates = compile(&deployed("specs/npcf_bdtpolicycontrol.yaml")).unwrap();
    let t = templates
        .iter()
        .find(|t| t.template_id == "POST /npcf-bdtpolicycontrol/v1/bdtpolicies")
        .unwrap();
    let body = t.body.as_ref().unwrap();
    assert!(body.required);
    assert_eq!(body.schema["properties"]["desTimeInt"]["required"], json!(["startTime", "stopTime"]));
}

#[test]
fn template_count_equals_operation_count_and_slots_are_covered() {
    for rel in CORPUS {
        let spec = deployed(rel);
        let ops: usize = spec.document["paths"]
            .as_object()
            .unwrap()
            .values()
            .map(|item| item.as_object().unwrap().keys().filter(|k| *k != "parameters").count())
            .sum();
        let templates = compile(&spec).unwrap();
        assert_eq!(templates.len(), ops, "{rel}");
        for t in &templates {
            assert!(!t.declared_responses.is_empty());
            let slots = t.path_slots();
            let names: Vec<_> = t.path_params.iter().map(|p| p.name.clone()).collect();
            assert_eq!(slots, names, "{}", t.template_id);
            assert!(t.path_params.iter().all(|p| p.required));
        }
    }
}

#[test]
fn grammar_serialization_is_deterministic() {
    let specs: Vec<_> = CORPUS.iter().map(|r| deployed(r)).collect();
    let policy = PinPolicy::default();
    let (a, _) = Grammar::build(&specs, None, &policy).unwrap();
    let (b, _) = Grammar::build(&specs, None, &policy).unwrap();
    let text = a.to_json();
    assert_eq!(text, b.to_json());
    let parsed: Value = serde_json::from_str(&text).unwrap();
    for key in ["templates", "edges", "dictionary", "meta"] {
        assert!(parsed.get(key).is_some(), "{key}");
    }
    assert_eq!(parsed["meta"]["seed_spec_hash"].as_str().unwrap().len(), 64);
    assert_eq!(Grammar::from_json(&text).unwrap(), a);
}

#[test]
fn enum_pool_and_empty_overlay() {
    let spec = ResolvedSpec::from_document(
        json!({"openapi": "3.0.0", "info": {}, "servers": [{"url": "http://h:1/nx/v1"}], "paths": {
            "/a": {"get": {"parameters": [{"name": "color", "in": "query",
                "schema": {"type": "string", "enum": ["A", "B"]}}],
                "responses": {"200": {"description": "ok"}}}}}}),
        "x.yaml",
    );
    let templates = compile(&spec).unwrap();
    let dict = build_dictionary(&templates, None).unwrap();
    let pool = dict.pool_for("color", &templates[0].query_params[0].schema);
    assert!(pool.contains(&json!("A")) && pool.contains(&json!("B")));
    let outside: Vec<_> = pool.iter().filter(|v| **v != json!("A") && **v != json!("B")).collect();
    assert_eq!(outside, vec![&json!(ENUM_PROBE)]);

    let mut expected = sbifuzz::grammar::FuzzDictionary::default();
    expected.spec_values.insert("color".into(), vec![json!("A"), json!("B")]);
    assert_eq!(dict, expected);
}

#[test]
fn overlay_supi_used_first_and_type_checked() {
    let templates = compile(&deployed("specs/nudm_sdm.yaml")).unwrap();
    let mut overlay = Overlay::new();
    overlay.insert("supi".into(), vec![json!("imsi-208930000000003")]);
    let dict = build_dictionary(&templates, Some(&overlay)).unwrap();
    let sm = templates.iter().find(|t| t.template_id.ends_with("/sm-data")).unwrap();
    let pool = dict.pool_for("supi", &sm.path_params[0].schema);
    assert_eq!(pool[0], json!("imsi-208930000000003"));

    overlay.insert("supi".into(), vec![json!(42)]);
    assert!(matches!(
        build_dictionary(&templates, Some(&overlay)),
        Err(GrammarError::OverlayTypeMismatch { .. })
    ));
}

#[test]
fn pin_policies() {
    let templates = compile(&deployed("specs/nudm_sdm.yaml")).unwrap();
    let shared = templates.iter().find(|t| t.template_id == "GET /nudm-sdm/v2/shared-data").unwrap();
    let (out, diags) = annotate_fuzzable(shared, &PinPolicy::default());
    assert!(diags.is_empty());
    assert!(out.param("supported-features").unwrap().fuzzable);

    let sm = templates.iter().find(|t| t.template_id.ends_with("/sm-data")).unwrap();
    let (out, _) = annotate_fuzzable(sm, &PinPolicy::default().pin("supi"));
    assert!(!out.param("supi").unwrap().fuzzable);

    let (out, diags) = annotate_fuzzable(shared, &PinPolicy::default().pin("no-such-name"));
    assert_eq!(&out, shared, "field-by-field equal");
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].kind, DiagnosticKind::UnknownPinnedName);
}
