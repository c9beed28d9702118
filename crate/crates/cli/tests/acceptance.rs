//! End-to-end acceptance checks against the in-process testbed. Prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use sbifuzz::detect::{BucketKey, BugClass, BugReport};
use sbifuzz::engine::{run_campaign, CampaignConfig, CheckerFlags, TokenConfig, TokenMode, EXCHANGE_LOG};
use sbifuzz::grammar::{compile, infer_dependencies, Grammar, Overlay, PinPolicy};
use sbifuzz::http::HttpTransport;
use sbifuzz::oauth::{
    acquire_token, decode_unverified, mint_token, verify_token, ClaimCompleteness, SelfIdentity, Snssai,
    TokenRequest, VerifierMode,
};
use sbifuzz::spec::{fs_resolver, load_document, resolve_refs, rewrite_servers, HostMap, ResolvedSpec};
use sbifuzz_testbed::{BugFlag, Nf, Testbed, TestbedConfig};
use serde_json::{json, Value};

const SEED: u64 = 7;
const BUDGET: u64 = 50_000;

type Outcome = Result<String, String>;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

const CORPUS: [&str; 5] = [
    "specs/nudm_sdm.yaml",
    "specs/nnssf_nssaiavailability.yaml",
    "specs/npcf_bdtpolicycontrol.yaml",
    "specs/nnrf_disc.yaml",
    "specs/nnrf_accesstoken.yaml",
];

fn bundled(rel: &str) -> ResolvedSpec {
    let raw = load_document(fixture(rel)).expect("fixture loads");
    resolve_refs(&raw, fs_resolver).expect("fixture bundles")
}

fn grammar_for(hosts: &HostMap) -> Grammar {
    let specs: Vec<ResolvedSpec> = CORPUS
        .iter()
        .map(|rel| rewrite_servers(&bundled(rel), hosts).expect("hosts cover corpus"))
        .collect();
    Grammar::build(&specs, None, &PinPolicy::default()).expect("grammar builds").0
}

fn overlay() -> Overlay {
    let mut o = Overlay::new();
    o.insert("ueId".into(), vec![json!("imsi-208930000000003"), json!("msisdn-0900000001")]);
    o.insert("single-nssai".into(), vec![json!({"sst": 1, "sd": "010203"})]);
    o.insert("target-nf-type".into(), vec![json!("SMF")]);
    o
}

/// A campaign directory with its grammar, pointed at `tb`.
fn campaign(tb: &Testbed, dir: &Path, checkers: CheckerFlags) -> CampaignConfig {
    std::fs::create_dir_all(dir).unwrap();
    let grammar = dir.join("grammar.json");
    std::fs::write(&grammar, grammar_for(&tb.host_map()).to_json()).unwrap();
    CampaignConfig {
        grammar,
        targets: tb.base_urls().into_values().collect(),
        budget: BUDGET,
        seed: SEED,
        workers: 1,
        checkers,
        token: TokenConfig {
            mode: TokenMode::Fetch,
            endpoint: Some(tb.token_endpoint()),
            ..Default::default()
        },
        extra_scopes: vec!["nudr-dr".into()],
        overlay: overlay(),
        ..Default::default()
    }
}

fn seeded_testbed(bugs: impl IntoIterator<Item = BugFlag>) -> Testbed {
    Testbed::start(TestbedConfig::default().with_bugs(bugs).deterministic(true)).expect("testbed starts")
}

fn cause(report: &BugReport) -> Option<String> {
    let body: Value = serde_json::from_str(&report.evidence.response_body).ok()?;
    body["cause"].as_str().map(str::to_string)
}

/// Whether `report` is a finding of `flag`.
fn is_finding_of(report: &BugReport, flag: BugFlag) -> bool {
    let class = report.bucket_key.class;
    match flag {
        BugFlag::B8 => class == BugClass::AuthzScopeBypass,
        BugFlag::B7 => class == BugClass::StatusMappingViolation && cause(report).as_deref() == flag.cause(),
        _ => class == BugClass::UnhandledError500 && cause(report).as_deref() == flag.cause(),
    }
}

fn criterion_1(reports: &[BugReport]) -> Outcome {
    let mut missing = Vec::new();
    let mut fingerprints = BTreeSet::new();
    for flag in BugFlag::ALL {
        let found: Vec<&BugReport> = reports.iter().filter(|r| is_finding_of(r, flag)).collect();
        if found.is_empty() {
            missing.push(flag.to_string());
        }
        if flag.cause().is_some() && flag != BugFlag::B7 {
            fingerprints.extend(found.iter().map(|r| r.bucket_key.fingerprint.clone()));
        }
    }
    if !missing.is_empty() {
        return Err(format!("no report for {}", missing.join(", ")));
    }
    if fingerprints.len() != 6 {
        return Err(format!("{} distinct 500 fingerprints for B1-B6, expected 6", fingerprints.len()));
    }
    Ok(format!("{} reports cover B1-B8; 6 distinct 500 fingerprints", reports.len()))
}

fn criterion_2(dir: &Path) -> Outcome {
    let mut details = Vec::new();
    for (name, checkers) in [("checkers on", CheckerFlags::default()), ("checkers off", CheckerFlags::none())] {
        let tb = seeded_testbed([]);
        let config = campaign(&tb, &dir.join(name.replace(' ', "-")), checkers);
        let out = run_campaign(&config, &dir.join(format!("{}-out", name.replace(' ', "-")))).map_err(|e| e.to_string())?;
        let bad: Vec<String> = out
            .reports
            .iter()
            .filter(|r| matches!(r.bucket_key.class, BugClass::UnhandledError500 | BugClass::AuthzScopeBypass))
            .map(|r| format!("{} {}", r.bucket_key.class, r.bucket_key.endpoint))
            .collect();
        if !bad.is_empty() {
            return Err(format!("{name}: {}", bad.join("; ")));
        }
        details.push(format!("{name}: {} requests, {} reports", out.summary.requests_sent, out.reports.len()));
    }
    Ok(details.join("; "))
}

fn criterion_3() -> Outcome {
    let http = HttpTransport::default();
    let mut statuses = Vec::new();
    for mode in [VerifierMode::SeededScopeShadow, VerifierMode::Correct] {
        let mut config = TestbedConfig::default();
        config.set_verifier_mode(mode);
        let tb = Testbed::start(config).map_err(|e| e.to_string())?;
        let req = TokenRequest::new("6d7a9a4c-4f1e-4b4e-9c55-0f3c6a9e7b11", "AMF", "UDR", "nudr-dr");
        let token = acquire_token(&tb.token_endpoint(), &req, &http).map_err(|e| e.to_string())?;
        let response = sbifuzz::http::Transport::send(
            &http,
            &sbifuzz::http::HttpRequest {
                method: "GET".into(),
                url: format!(
                    "{}/nnrf-disc/v1/nf-instances?target-nf-type=SMF&requester-nf-type=AMF",
                    tb.base_url(Nf::Nrf)
                ),
                headers: vec![("Authorization".into(), token.bearer())],
                body: None,
            },
        )
        .map_err(|e| e.to_string())?;
        statuses.push(response.status);
    }
    match statuses[..] {
        [s, 403] if (200..300).contains(&s) => Ok(format!("SEEDED {s}, CORRECT 403")),
        _ => Err(format!("SEEDED {}, CORRECT {}", statuses[0], statuses[1])),
    }
}

/// Counts refs and fails on any that is not document-local or does not
/// land on a node.
fn local_refs(node: &Value, root: &Value) -> Result<usize, String> {
    match node {
        Value::Object(map) => {
            let mut n = 0;
            if let Some(Value::String(r)) = map.get("$ref") {
                let target = r.strip_prefix('#').ok_or_else(|| format!("external ref {r}"))?;
                root.pointer(target).ok_or_else(|| format!("dangling ref {r}"))?;
                n += 1;
            }
            for v in map.values() {
                n += local_refs(v, root)?;
            }
            Ok(n)
        }
        Value::Array(items) => items.iter().map(|v| local_refs(v, root)).sum(),
        _ => Ok(0),
    }
}

fn criterion_4() -> Outcome {
    let mut total = 0;
    for rel in CORPUS {
        let spec = bundled(rel);
        total += local_refs(&spec.document, &spec.document).map_err(|e| format!("{rel}: {e}"))?;
    }
    let udm = bundled("specs/nudm_sdm.yaml");
    let params = udm.document["paths"]["/shared-data"]["get"]["parameters"]
        .as_array()
        .ok_or("shared-data has no parameters")?;
    let sf = params
        .iter()
        .find(|p| p["name"] == "supported-features")
        .ok_or("supported-features missing")?;
    let r = sf["schema"]["$ref"].as_str().ok_or("supported-features schema is not a ref")?;
    let target = r
        .strip_prefix('#')
        .and_then(|p| udm.document.pointer(p))
        .ok_or_else(|| format!("{r} does not resolve in the bundle"))?;
    if target["type"] != "string" {
        return Err(format!("{r} resolved to {target}"));
    }
    Ok(format!("{total} refs across the corpus, all local; supported-features -> {r}"))
}

fn token_strategy() -> impl Strategy<Value = (String, String, u64, u64, Option<u8>, Vec<u8>, usize)> {
    let scope = prop::sample::select(vec!["nudm-sdm", "nnrf-disc", "nudr-dr", "npcf-bdtpolicycontrol", "nudm-sdm nudr-dr"]);
    let target = prop::sample::select(vec!["UDM", "NRF", "UDR", "PCF"]);
    (
        scope.prop_map(str::to_string),
        target.prop_map(str::to_string),
        0u64..7200,
        0u64..7200,
        prop::option::of(0u8..3),
        prop::collection::vec(any::<u8>(), 32..48),
        any::<usize>(),
    )
}

fn criterion_5() -> Outcome {
    const NOW: u64 = 1_767_225_600;
    const MODES: [VerifierMode; 3] = [VerifierMode::Correct, VerifierMode::SeededScopeShadow, VerifierMode::Free5gcMinimal];
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let result = runner.run(&token_strategy(), |(scope, target, ttl, elapsed, sst, key, bit)| {
        let mut req = TokenRequest::new("consumer-1", "AMF", &target, &scope);
        req.target_snssai_list = sst.map(|sst| vec![Snssai { sst, sd: None }]);
        let t = mint_token(&req, "nrf-1", &key, ttl, ClaimCompleteness::Full, NOW).unwrap();
        // Round trip: the claims decode back unchanged.
        prop_assert_eq!(&decode_unverified(&t.compact).unwrap().claims, &t.claims);
        prop_assert_eq!(t.claims.expiry, NOW + ttl);

        let identity = SelfIdentity {
            nf_type: "UDM".into(),
            instance_id: "udm-1".into(),
            snssai_list: vec![Snssai { sst: 1, sd: None }],
            nsi_list: vec![],
        };
        let now = NOW + elapsed;
        let verdict = |token: &str, mode| verify_token(token, "nudm-sdm", &identity, &key, now, mode);

        // A fresh, in-scope token for this producer verifies in every mode.
        let fits = target == "UDM" && scope.split(' ').any(|s| s == "nudm-sdm") && sst.is_none_or(|s| s == 1);
        if fits && ttl > elapsed {
            for mode in MODES {
                prop_assert!(verdict(&t.compact, mode).accepted, "{mode:?} rejected a valid token");
            }
        }

        // Strictness: whatever CORRECT accepts, the laxer modes accept.
        if verdict(&t.compact, VerifierMode::Correct).accepted {
            prop_assert!(verdict(&t.compact, VerifierMode::SeededScopeShadow).accepted);
            prop_assert!(verdict(&t.compact, VerifierMode::Free5gcMinimal).accepted);
        }

        // Any single-bit change (kept within ASCII) is rejected everywhere.
        let mut bytes = t.compact.clone().into_bytes();
        let i = bit % (bytes.len() * 7);
        bytes[i / 7] ^= 1 << (i % 7);
        let tampered = String::from_utf8(bytes).unwrap();
        for mode in MODES {
            let r = verdict(&tampered, mode);
            if r.accepted {
                return Err(TestCaseError::fail(format!("{mode:?} accepted tampered token {tampered}")));
            }
        }
        Ok(())
    });
    result
        .map(|()| "1000 cases: round trip, tamper rejection, mode monotonicity".into())
        .map_err(|e| e.to_string())
}

fn log_bytes(dir: &Path) -> Vec<u8> {
    std::fs::read(dir.join(EXCHANGE_LOG)).unwrap_or_default()
}

fn criterion_6(first: &(Vec<u8>, BTreeSet<BucketKey>), second: &(Vec<u8>, BTreeSet<BucketKey>)) -> Outcome {
    if first.0.is_empty() {
        return Err("empty exchange log".into());
    }
    if first.0 != second.0 {
        let line = first.0.split(|b| *b == b'\n').zip(second.0.split(|b| *b == b'\n')).position(|(a, b)| a != b);
        return Err(format!("exchange logs differ (first differing line {line:?})"));
    }
    if first.1 != second.1 {
        return Err("bucket key sets differ".into());
    }
    Ok(format!("{} log bytes identical; {} bucket keys identical", first.0.len(), first.1.len()))
}

fn replay(replay_file: &Path, rebase: &[String]) -> Result<(i32, String), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sbifuzz"));
    cmd.arg("replay").arg(replay_file);
    for r in rebase {
        cmd.arg("--rebase").arg(r);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    Ok((out.status.code().unwrap_or(-1), stdout))
}

fn criterion_7(reports: &[BugReport], out_dir: &Path, live: &Testbed) -> Outcome {
    let mut lines = Vec::new();
    for flag in BugFlag::ALL {
        let report = reports
            .iter()
            .find(|r| is_finding_of(r, flag))
            .ok_or_else(|| format!("{flag}: no report to replay"))?;
        let file = out_dir
            .join(sbifuzz::detect::bucket_dir_name(&report.bucket_key))
            .join("replay.json");
        let (code, stdout) = replay(&file, &[])?;
        if code != 2 || !stdout.contains("reproduced:") {
            return Err(format!("{flag} flag on: exit {code}, {stdout:?}"));
        }
        // Flag off, every other flag on, on fresh ports.
        let off = seeded_testbed(BugFlag::ALL.into_iter().filter(|b| *b != flag));
        let rebase: Vec<String> = Nf::ALL
            .iter()
            .map(|nf| format!("{}={}", live.base_url(*nf), off.base_url(*nf)))
            .collect();
        let (code, stdout) = replay(&file, &rebase)?;
        if code != 0 || !stdout.contains("not reproduced") {
            return Err(format!("{flag} flag off: exit {code}, {stdout:?}"));
        }
        lines.push(flag.to_string());
    }
    Ok(format!("{} reproduce with the flag on and not with it off", lines.join(",")))
}

fn criterion_8() -> Outcome {
    let hosts = HostMap::new("http").with("xyz", "127.0.0.1:8009".parse().unwrap());
    let spec = rewrite_servers(&bundled("extra/crud_subscriptions.yaml"), &hosts).map_err(|e| e.to_string())?;
    let templates = compile(&spec).map_err(|e| e.to_string())?;
    let got: BTreeSet<(String, String, String)> = infer_dependencies(&templates)
        .edges
        .into_iter()
        .map(|e| (e.producer, e.consumer, e.handle))
        .collect();
    // Worked out by hand from the fixture: the POST's `subscription_id`
    // feeds both `{subscriptionId}` operations, and GET/DELETE produce
    // nothing a sibling consumes.
    let post = "POST /nxyz-subs/v1/subscriptions";
    let oracle: BTreeSet<(String, String, String)> = ["GET", "DELETE"]
        .iter()
        .map(|m| {
            (
                post.to_string(),
                format!("{m} /nxyz-subs/v1/subscriptions/{{subscriptionId}}"),
                "subscription_id".to_string(),
            )
        })
        .collect();
    if got == oracle {
        Ok(format!("{} edges match", got.len()))
    } else {
        Err(format!("inferred {got:?}, expected {oracle:?}"))
    }
}

fn main() {
    let work = tempfile::tempdir().expect("tempdir");
    let mut results: BTreeMap<u8, (&str, Outcome)> = BTreeMap::new();

    let first_tb = seeded_testbed(BugFlag::ALL);
    let run = |tb: &Testbed, name: &str| {
        let config = campaign(tb, &work.path().join(name), CheckerFlags::default());
        let out_dir = work.path().join(name).join("out");
        let out = run_campaign(&config, &out_dir).map_err(|e| e.to_string());
        let keys = out
            .as_ref()
            .map(|o| o.reports.iter().map(|r| r.bucket_key.clone()).collect::<BTreeSet<_>>())
            .unwrap_or_default();
        (out, out_dir.clone(), (log_bytes(&out_dir), keys))
    };
    let (first, first_dir, first_fp) = run(&first_tb, "run-a");
    // Same ports, fresh state.
    let binds: BTreeMap<Nf, _> = Nf::ALL.iter().map(|nf| (*nf, first_tb.addr(*nf))).collect();
    first_tb.shutdown();
    let mut config = TestbedConfig::default().with_bugs(BugFlag::ALL).deterministic(true);
    config.binds = binds;
    let second_tb = Testbed::start(config).expect("restart on the same ports");
    let (_, _, second_fp) = run(&second_tb, "run-b");

    match &first {
        Ok(out) => {
            results.insert(1, ("all eight seeded bugs reported", criterion_1(&out.reports)));
            results.insert(6, ("deterministic logs and buckets", criterion_6(&first_fp, &second_fp)));
            results.insert(7, ("replay with flag on/off", criterion_7(&out.reports, &first_dir, &second_tb)));
        }
        Err(e) => {
            for (id, name) in [(1, "all eight seeded bugs reported"), (6, "deterministic logs and buckets"), (7, "replay with flag on/off")] {
                results.insert(id, (name, Err(format!("campaign failed: {e}"))));
            }
        }
    }
    results.insert(2, ("no false positives on a clean core", criterion_2(&work.path().join("clean"))));
    results.insert(3, ("cross-service token on discovery", criterion_3()));
    results.insert(4, ("bundles are self-contained", criterion_4()));
    results.insert(5, ("token properties", criterion_5()));
    results.insert(8, ("dependency inference on CRUD fixture", criterion_8()));

    let mut failed = 0;
    for (id, (name, outcome)) in &results {
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
