use std::path::{Path, PathBuf};

use serde_json::Value;
use sbifuzz::spec::{
    fs_resolver, load_document, resolve_refs, rewrite_servers, validate_spec, DiagnosticKind,
    HostMap, ResolvedSpec,
};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn bundle(rel: &str) -> ResolvedSpec {
    let raw = load_document(fixture(rel)).unwrap();
    resolve_refs(&raw, fs_resolver).unwrap()
}

fn corpus_hosts() -> HostMap {
    HostMap::new("http")
        .with("udm", "udm:8000".parse().unwrap())
        .with("nssf", "nssf:8000".parse().unwrap())
        .with("pcf", "pcf:8000".parse().unwrap())
        .with("nrf", "nrf:8000".parse().unwrap())
}

const CORPUS: [&str; 5] = [
    "specs/nudm_sdm.yaml",
    "specs/nnssf_nssaiavailability.yaml",
    "specs/npcf_bdtpolicycontrol.yaml",
    "specs/nnrf_disc.yaml",
    "specs/nnrf_accesstoken.yaml",
];

/// Independent checker: walks every node, and for every `$ref` asserts it
/// is document-local and that following it lands on an existing node.
/// Recursion only descends the tree, never follows refs, so it terminates
/// on cyclic schemas.
fn assert_all_refs_local(root: &Value) {
    fn walk(node: &Value, root: &Value, seen: &mut usize) {
        match node {
            Value::Object(map) => {
                if let Some(Value::String(r)) = map.get("$ref") {
                    *seen += 1;
                    assert!(r.starts_with("#/"), "non-local ref {r}");
                    let pointer = &r[1..];
                    assert!(root.pointer(pointer).is_some(), "unresolvable ref {r}");
                }
                for v in map.values() {
                    walk(v, root, seen);
                }
            }
            Value::Array(items) => items.iter().for_each(|v| walk(v, root, seen)),
            _ => {}
        }
    }
    let mut seen = 0;
    walk(root, root, &mut seen);
    assert!(seen > 0, "fixture should contain refs");
}

#[test]
fn raw_udm_keeps_external_ref() {
    let raw = load_document(fixture("specs/nudm_sdm.yaml")).unwrap();
    assert!(raw
        .refs()
        .contains(&"TS29571_CommonData.yaml#/components/schemas/SupportedFeature".to_string()));
}

#[test]
fn udm_supported_features_resolves_locally() {
    let spec = bundle("specs/nudm_sdm.yaml");
    let params = spec
        .document
        .pointer("/paths/~1shared-data/get/parameters")
        .and_then(Value::as_array)
        .unwrap();
    let sf = params
        .iter()
        .find(|p| p["name"] == "supported-features")
        .unwrap();
    assert_eq!(sf["in"], "query");
    assert!(sf.get("required").is_none());
    assert_eq!(sf["schema"]["$ref"], "#/components/schemas/SupportedFeature");
    assert_eq!(
        spec.component_index["schemas/SupportedFeature"]["type"],
        "string"
    );
    assert_all_refs_local(&spec.document);
}

#[test]
fn mutually_recursive_files_terminate() {
    let spec = bundle("extra/recursive_a.yaml");
    assert!(spec.component_index.contains_key("schemas/NodeA"));
    assert!(spec.component_index.contains_key("schemas/NodeB"));
    assert_eq!(
        spec.component_index["schemas/NodeB"]["properties"]["parent"]["$ref"],
        "#/components/schemas/NodeA"
    );
    assert_eq!(
        spec.component_index["schemas/NodeB"]["properties"]["sibling"]["$ref"],
        "#/components/schemas/NodeB"
    );
    assert_all_refs_local(&spec.document);
}

#[test]
fn collisions_dedupe_or_rename() {
    let spec = bundle("extra/collision_root.yaml");
    // Equal content shares the root's name.
    assert!(!spec.component_index.contains_key("schemas/Same_from_collision_lib"));
    // Different content is renamed after the originating file.
    assert_eq!(
        spec.component_index["schemas/Kind_from_collision_lib"]["enum"],
        serde_json::json!(["RED", "BLUE"])
    );
    assert_eq!(spec.component_index["schemas/Kind"]["type"], "integer");
    let kind_param = spec.document.pointer("/paths/~1things/get/parameters/0/schema/$ref").unwrap();
    assert_eq!(kind_param, "#/components/schemas/Kind_from_collision_lib");
    assert_all_refs_local(&spec.document);
}

#[test]
fn bundling_is_idempotent() {
    for rel in CORPUS.iter().chain(["extra/recursive_a.yaml", "extra/collision_root.yaml"].iter()) {
        let once = bundle(rel);
        let again_raw = sbifuzz::spec::RawSpecDocument {
            source_path: fixture(rel),
            document: once.document.clone(),
            format_version: "3.0.0".into(),
        };
        let twice = resolve_refs(&again_raw, fs_resolver).unwrap();
        assert_eq!(once.document, twice.document, "{rel}");
    }
}

#[test]
fn corpus_pipeline_is_clean() {
    let hosts = corpus_hosts();
    for rel in CORPUS {
        let spec = bundle(rel);
        assert!(spec.refs().iter().all(|r| r.starts_with('#')), "{rel}");
        let deployed = rewrite_servers(&spec, &hosts).unwrap();
        for url in &deployed.server_urls {
            let parsed = url::Url::parse(url).unwrap();
            assert!(parsed.port().is_some(), "{url}");
        }
        let diags = validate_spec(&deployed);
        assert!(diags.is_empty(), "{rel}: {diags:?}");
    }
}

#[test]
fn rewrite_only_touches_servers() {
    let spec = bundle("specs/nudm_sdm.yaml");
    let deployed = rewrite_servers(&spec, &corpus_hosts()).unwrap();
    assert_eq!(deployed.server_urls, vec!["http://udm:8000/nudm-sdm/v2".to_string()]);
    let strip = |v: &Value| {
        let mut v = v.clone();
        v.as_object_mut().unwrap().remove("servers");
        v
    };
    assert_eq!(strip(&spec.document), strip(&deployed.document));
}

#[test]
fn unreachable_component_reported() {
    let mut spec = bundle("specs/nudm_sdm.yaml");
    spec.document["components"]["schemas"]["Orphan"] = serde_json::json!({"type": "string"});
    let spec = ResolvedSpec::from_document(spec.document, spec.origin);
    let diags = validate_spec(&spec);
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].kind, DiagnosticKind::UnreachableComponent);
    assert!(diags[0].message.contains("schemas/Orphan"));
}

#[test]
fn bundle_written_as_yaml_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = bundle("specs/nudm_sdm.yaml");
    let path = sbifuzz::spec::write_bundle(&spec, dir.path()).unwrap();
    let reloaded = load_document(&path).unwrap();
    assert_eq!(reloaded.document, spec.document);
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.contains("\n  /shared-data:\n"), "2-space indent expected");
}
