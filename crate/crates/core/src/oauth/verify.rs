use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::Mac;
use serde::{Deserialize, Serialize};

use super::jws::{mac, split};
use super::{FailureCause, Snssai, VerificationResult, VerifierMode};

/// What a producer knows about itself when checking `aud` and slices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfIdentity {
    pub nf_type: String,
    pub instance_id: String,
    #[serde(default)]
    pub snssai_list: Vec<Snssai>,
    #[serde(default)]
    pub nsi_list: Vec<String>,
}

/// Producer-side check. The order is fixed: Malformed, BadSignature,
/// Expired, ScopeMismatch, AudienceMismatch, SliceMismatch.
pub fn verify_token(
    compact: &str,
    expected_service: &str,
    identity: &SelfIdentity,
    key: &[u8],
    now: u64,
    mode: VerifierMode,
) -> VerificationResult {
    let Some(parts) = split(compact) else {
        return VerificationResult::rejected(FailureCause::Malformed);
    };
    let signature_ok = URL_SAFE_NO_PAD
        .decode(parts.signature)
        .is_ok_and(|sig| mac(key, parts.signing_input.as_bytes()).verify_slice(&sig).is_ok());
    if !signature_ok {
        return VerificationResult::rejected(FailureCause::BadSignature);
    }
    let claims = parts.claims;
    let in_scope = claims.covers(expected_service);

    if mode == VerifierMode::Free5gcMinimal {
        // Scope membership is the only check.
        return if in_scope {
            VerificationResult::ACCEPTED
        } else {
            VerificationResult::rejected(FailureCause::ScopeMismatch)
        };
    }

    if claims.expiry <= now {
        return VerificationResult::rejected(FailureCause::Expired);
    }
    if !in_scope {
        return match mode {
            // The scope error is dropped and the caller proceeds as if
            // verification had succeeded.
            VerifierMode::SeededScopeShadow => VerificationResult::ACCEPTED,
            _ => VerificationResult::rejected(FailureCause::ScopeMismatch),
        };
    }
    if let Some(aud) = &claims.audience {
        if *aud != identity.nf_type && *aud != identity.instance_id {
            return VerificationResult::rejected(FailureCause::AudienceMismatch);
        }
    }
    if let Some(list) = &claims.producer_snssai_list {
        if !list.iter().any(|s| identity.snssai_list.contains(s)) {
            return VerificationResult::rejected(FailureCause::SliceMismatch);
        }
    }
    VerificationResult::ACCEPTED
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oauth::{mint_token, ClaimCompleteness, TokenRequest};

    const KEY: &[u8] = b"0123456789abcdef0123456789abcdef";
    const NOW: u64 = 1_767_225_600;

    fn nrf() -> SelfIdentity {
        SelfIdentity {
            nf_type: "NRF".into(),
            instance_id: "nrf-1".into(),
            ..Default::default()
        }
    }

    fn token(scope: &str, target: &str, ttl: u64) -> String {
        let req = TokenRequest::new("amf-1", "AMF", target, scope);
        mint_token(&req, "nrf-1", KEY, ttl, ClaimCompleteness::Full, NOW).unwrap().compact
    }

    #[test]
    fn cross_service_token() {
        let t = token("nudr-dr", "UDR", 3600);
        let seeded = verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW, VerifierMode::SeededScopeShadow);
        assert!(seeded.accepted);
        let correct = verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW, VerifierMode::Correct);
        assert_eq!(correct, VerificationResult::rejected(FailureCause::ScopeMismatch));
    }

    #[test]
    fn tampered_signature_rejected_everywhere() {
        let t = token("nnrf-disc", "NRF", 3600);
        let (head, sig) = t.rsplit_once('.').unwrap();
        let mut bytes = URL_SAFE_NO_PAD.decode(sig).unwrap();
        bytes[0] ^= 1;
        let forged = format!("{head}.{}", URL_SAFE_NO_PAD.encode(bytes));
        for mode in [VerifierMode::Correct, VerifierMode::SeededScopeShadow, VerifierMode::Free5gcMinimal] {
            let r = verify_token(&forged, "nnrf-disc", &nrf(), KEY, NOW, mode);
            assert_eq!(r.failure_cause, Some(FailureCause::BadSignature));
        }
    }

    #[test]
    fn expiry_boundaries() {
        let zero = token("nnrf-disc", "NRF", 0);
        assert_eq!(
            verify_token(&zero, "nnrf-disc", &nrf(), KEY, NOW, VerifierMode::Correct).failure_cause,
            Some(FailureCause::Expired)
        );
        let t = token("nnrf-disc", "NRF", 10);
        assert!(verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW + 9, VerifierMode::Correct).accepted);
        assert_eq!(
            verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW + 11, VerifierMode::Correct).failure_cause,
            Some(FailureCause::Expired)
        );
    }

    #[test]
    fn expired_wins_over_scope() {
        let t = token("nudr-dr", "UDR", 1);
        let r = verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW + 5, VerifierMode::Correct);
        assert_eq!(r.failure_cause, Some(FailureCause::Expired));
    }

    #[test]
    fn audience_and_slices() {
        let t = token("nnrf-disc", "UDM", 60);
        let r = verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW, VerifierMode::Correct);
        assert_eq!(r.failure_cause, Some(FailureCause::AudienceMismatch));
        assert!(verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW, VerifierMode::Free5gcMinimal).accepted);

        let mut req = TokenRequest::new("amf-1", "AMF", "NRF", "nnrf-disc");
        req.target_snssai_list = Some(vec![Snssai { sst: 1, sd: Some("010203".into()) }]);
        let t = mint_token(&req, "nrf-1", KEY, 60, ClaimCompleteness::Full, NOW).unwrap().compact;
        let r = verify_token(&t, "nnrf-disc", &nrf(), KEY, NOW, VerifierMode::Correct);
        assert_eq!(r.failure_cause, Some(FailureCause::SliceMismatch));
        let mut served = nrf();
        served.snssai_list = vec![Snssai { sst: 1, sd: Some("010203".into()) }];
        assert!(verify_token(&t, "nnrf-disc", &served, KEY, NOW, VerifierMode::Correct).accepted);
    }

    #[test]
    fn garbage_is_malformed() {
        for junk in ["", "a.b", "a.b.c.d", "!!!.???.###"] {
            let r = verify_token(junk, "x", &nrf(), KEY, NOW, VerifierMode::Correct);
            assert_eq!(r.failure_cause, Some(FailureCause::Malformed), "{junk}");
        }
    }
}
