use std::collections::BTreeMap;
use std::hint::black_box;
use std::path::Path;

use criterion::{criterion_group, criterion_main, Criterion};
use sbifuzz::detect::body_fingerprint;
use sbifuzz::engine::instantiate;
use sbifuzz::grammar::{Grammar, PinPolicy};
use sbifuzz::oauth::{mint_token, verify_token, ClaimCompleteness, SelfIdentity, TokenRequest, VerifierMode};
use sbifuzz::spec::{fs_resolver, load_document, resolve_refs, rewrite_servers, HostMap, ResolvedSpec};

const NOW: u64 = 1_767_225_600;
const KEY: &[u8] = b"an-hs256-bench-key-of-32-bytes!!";

fn specs() -> Vec<ResolvedSpec> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/specs");
    let hosts = HostMap::new("http")
        .with("nrf", "127.0.0.1:8000".parse().unwrap())
        .with("udm", "127.0.0.1:8001".parse().unwrap())
        .with("nssf", "127.0.0.1:8002".parse().unwrap())
        .with("pcf", "127.0.0.1:8003".parse().unwrap());
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if !name.ends_with(".yaml") || name.starts_with("TS29571") {
            continue;
        }
        let raw = load_document(&path).unwrap();
        out.push(rewrite_servers(&resolve_refs(&raw, fs_resolver).unwrap(), &hosts).unwrap());
    }
    out
}

fn grammar(c: &mut Criterion) {
    let specs = specs();
    c.bench_function("grammar_build", |b| {
        b.iter(|| Grammar::build(black_box(&specs), None, &PinPolicy::default()).unwrap())
    });
    let (g, _) = Grammar::build(&specs, None, &PinPolicy::default()).unwrap();
    let t = g.template("POST /nudm-sdm/v2/shared-data-subscriptions").unwrap();
    let bindings = BTreeMap::new();
    let mut seed = 0u64;
    c.bench_function("instantiate_subscription", |b| {
        b.iter(|| {
            seed += 1;
            instantiate(t, &g.dictionary, &bindings, seed, 0.75).unwrap()
        })
    });
}

fn fingerprint(c: &mut Criterion) {
    let body = serde_json::json!({
        "title": "Internal Server Error",
        "status": 500,
        "cause": "RUNTIME_PANIC:index-oob",
        "detail": "request 3f2a9c10-1111-4a4a-8b8b-0123456789ab at 2026-01-01T00:00:00Z",
    })
    .to_string();
    c.bench_function("body_fingerprint", |b| b.iter(|| body_fingerprint(black_box(&body))));
}

fn tokens(c: &mut Criterion) {
    let req = TokenRequest::new("amf-1", "AMF", "UDM", "nudm-sdm");
    c.bench_function("mint_token", |b| {
        b.iter(|| mint_token(black_box(&req), "nrf-1", KEY, 3600, ClaimCompleteness::Full, NOW).unwrap())
    });
    let t = mint_token(&req, "nrf-1", KEY, 3600, ClaimCompleteness::Full, NOW).unwrap();
    let me = SelfIdentity {
        nf_type: "UDM".into(),
        instance_id: "udm-1".into(),
        ..Default::default()
    };
    for mode in [VerifierMode::Correct, VerifierMode::SeededScopeShadow, VerifierMode::Free5gcMinimal] {
        c.bench_function(&format!("verify_token/{mode:?}"), |b| {
            b.iter(|| verify_token(black_box(&t.compact), "nudm-sdm", &me, KEY, NOW, mode))
        });
    }
}

criterion_group!(benches, grammar, fingerprint, tokens);
criterion_main!(benches);
