use std::sync::Arc;

use proptest::prelude::*;
use sbifuzz::clock::FixedClock;
use sbifuzz::engine::{ConcreteRequest, Provenance};
use sbifuzz::http::{HttpRequest, HttpResponse, Transport, TransportError};
use sbifuzz::oauth::{
    attach_token, decode_unverified, mint_token, verify_token, ClaimCompleteness, FailureCause, SelfIdentity,
    TokenError, TokenProvider, TokenRequest, TokenSource, VerifierMode,
};
use sbifuzz::spec::DiagnosticKind;

const NOW: u64 = 1_767_225_600;
const KEY: &[u8] = b"an-hs256-test-key-of-32-bytes-ok";

fn minted(scope: &str) -> sbifuzz::oauth::SignedToken {
    let req = TokenRequest::new("amf-1", "AMF", "UDM", scope);
    mint_token(&req, "nrf-1", KEY, 3600, ClaimCompleteness::Full, NOW).unwrap()
}

fn request(headers: &[(&str, &str)], overlay: &[&str]) -> ConcreteRequest {
    ConcreteRequest {
        method: "GET".into(),
        server: "http://127.0.0.1:8001".into(),
        path_template: "/nudm-sdm/v2/shared-data".into(),
        path_values: vec![],
        query: String::new(),
        headers: headers.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        body: None,
        provenance: Provenance {
            template_id: "GET /nudm-sdm/v2/shared-data".into(),
            overlay_headers: overlay.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        },
    }
}

fn authorizations(r: &ConcreteRequest) -> Vec<&str> {
    r.headers
        .iter()
        .filter(|(k, _)| k.eq_ignore_ascii_case("authorization"))
        .map(|(_, v)| v.as_str())
        .collect()
}

#[test]
fn attach_replaces_and_is_idempotent() {
    let t = minted("nudm-sdm");
    let (once, diag) = attach_token(&request(&[("authorization", "Bearer stale"), ("Accept", "x")], &[]), &t);
    assert!(diag.is_none());
    assert_eq!(authorizations(&once), [t.bearer()]);
    let (twice, _) = attach_token(&once, &t);
    assert_eq!(authorizations(&twice), [t.bearer()]);
    assert_eq!(twice.header("accept"), Some("x"));
}

#[test]
fn overlay_authorization_wins() {
    let t = minted("nudm-sdm");
    let r = request(&[("Authorization", "Bearer from-overlay")], &["Authorization"]);
    let (out, diag) = attach_token(&r, &t);
    assert_eq!(authorizations(&out), ["Bearer from-overlay"]);
    assert_eq!(diag.unwrap().kind, DiagnosticKind::OverlayAuthorization);
}

struct Unreachable;

impl Transport for Unreachable {
    fn send(&self, _: &HttpRequest) -> Result<HttpResponse, TransportError> {
        Err(TransportError::Connect("no network in this test".into()))
    }
}

#[test]
fn file_source_serves_the_same_token_for_every_scope() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("token.jws");
    let t = minted("nudm-sdm");
    std::fs::write(&path, format!("{}\n", t.compact)).unwrap();
    let provider = TokenProvider::new(
        TokenSource::File { path: path.clone() },
        Arc::new(Unreachable),
        Arc::new(FixedClock::new(NOW)),
    );
    let a = provider.token("nudm-sdm", "UDM").unwrap().unwrap();
    let b = provider.token("nnrf-disc", "NRF").unwrap().unwrap();
    assert_eq!(a.compact, t.compact);
    assert_eq!(b.compact, t.compact);

    let missing = TokenProvider::new(
        TokenSource::File {
            path: dir.path().join("absent"),
        },
        Arc::new(Unreachable),
        Arc::new(FixedClock::new(NOW)),
    );
    assert!(matches!(missing.token("nudm-sdm", "UDM"), Err(TokenError::FileUnreadable { .. })));
}

#[test]
fn fetch_failure_surfaces_as_transport_error() {
    let provider = TokenProvider::new(
        TokenSource::Fetch {
            endpoint: "http://127.0.0.1:1/oauth2/token".into(),
            nf_instance_id: "amf-1".into(),
            nf_type: "AMF".into(),
        },
        Arc::new(Unreachable),
        Arc::new(FixedClock::new(NOW)),
    );
    assert!(matches!(provider.token("nudm-sdm", "UDM"), Err(TokenError::Transport(_))));
}

#[test]
fn none_source_attaches_nothing() {
    let provider = TokenProvider::new(TokenSource::None, Arc::new(Unreachable), Arc::new(FixedClock::new(NOW)));
    assert!(provider.token("nudm-sdm", "UDM").unwrap().is_none());
}

fn identity() -> SelfIdentity {
    SelfIdentity {
        nf_type: "UDM".into(),
        instance_id: "udm-1".into(),
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn minted_tokens_round_trip(scope in "[a-z]{1,8}(-[a-z]{1,8})?", ttl in 1u64..100_000) {
        let req = TokenRequest::new("amf-1", "AMF", "UDM", &scope);
        let t = mint_token(&req, "nrf-1", KEY, ttl, ClaimCompleteness::Full, NOW).unwrap();
        prop_assert_eq!(decode_unverified(&t.compact).unwrap(), t.clone());
        let r = verify_token(&t.compact, &scope, &identity(), KEY, NOW, VerifierMode::Correct);
        prop_assert!(r.accepted);
    }

    #[test]
    fn one_flipped_signature_bit_is_rejected(bit in 0usize..256) {
        use base64::engine::general_purpose::URL_SAFE_NO_PAD;
        use base64::Engine;
        let t = minted("nudm-sdm");
        let (head, sig) = t.compact.rsplit_once('.').unwrap();
        let mut bytes = URL_SAFE_NO_PAD.decode(sig).unwrap();
        bytes[bit / 8] ^= 1 << (bit % 8);
        let forged = format!("{head}.{}", URL_SAFE_NO_PAD.encode(bytes));
        for mode in [VerifierMode::Correct, VerifierMode::SeededScopeShadow, VerifierMode::Free5gcMinimal] {
            let r = verify_token(&forged, "nudm-sdm", &identity(), KEY, NOW, mode);
            prop_assert_eq!(r.failure_cause, Some(FailureCause::BadSignature));
        }
    }
}
