use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, KeyInit, Mac};
use serde_json::json;
use sha2::Sha256;

use super::{AccessTokenClaims, ClaimCompleteness, SignedToken, TokenError, TokenRequest};

pub const MIN_KEY_LEN: usize = 32;

type HmacSha256 = Hmac<Sha256>;

pub(super) fn mac(key: &[u8], signing_input: &[u8]) -> HmacSha256 {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(signing_input);
    mac
}

/// Compact HS256 JWS over `claims`.
pub fn sign_claims(claims: &AccessTokenClaims, key: &[u8]) -> String {
    let header = URL_SAFE_NO_PAD.encode(json!({"alg": "HS256", "typ": "JWT"}).to_string());
    let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(claims).expect("claims serialize"));
    let signing_input = format!("{header}.{payload}");
    let signature = mac(key, signing_input.as_bytes()).finalize().into_bytes();
    format!("{signing_input}.{}", URL_SAFE_NO_PAD.encode(signature))
}

/// `exp = now + ttl`; with `ttl = 0` the token is expired on arrival.
pub fn mint_token(
    req: &TokenRequest,
    issuer_id: &str,
    key: &[u8],
    ttl: u64,
    mode: ClaimCompleteness,
    now: u64,
) -> Result<SignedToken, TokenError> {
    if key.len() < MIN_KEY_LEN {
        return Err(TokenError::WeakKey(key.len()));
    }
    if req.requested_scope.trim().is_empty() {
        return Err(TokenError::EmptyScope);
    }
    let full = mode == ClaimCompleteness::Full;
    let claims = AccessTokenClaims {
        issuer: full.then(|| issuer_id.to_string()),
        subject: req.consumer_instance_id.clone(),
        audience: full.then(|| req.target_nf_type.clone()),
        scope: req.requested_scope.clone(),
        expiry: now + ttl,
        issued_at: now,
        producer_snssai_list: req.target_snssai_list.clone(),
        producer_nsi_list: req.target_nsi_list.clone(),
    };
    Ok(SignedToken {
        compact: sign_claims(&claims, key),
        claims,
        alg: "HS256".into(),
    })
}

pub(super) struct Parts<'a> {
    pub signing_input: &'a str,
    pub signature: &'a str,
    pub claims: AccessTokenClaims,
}

/// Structural decode: three segments, HS256 header, claims payload.
pub(super) fn split(compact: &str) -> Option<Parts<'_>> {
    let mut segments = compact.split('.');
    let (header, payload, signature) = (segments.next()?, segments.next()?, segments.next()?);
    if segments.next().is_some() {
        return None;
    }
    let header: serde_json::Value = serde_json::from_slice(&URL_SAFE_NO_PAD.decode(header).ok()?).ok()?;
    if header.get("alg")?.as_str()? != "HS256" {
        return None;
    }
    let claims = serde_json::from_slice(&URL_SAFE_NO_PAD.decode(payload).ok()?).ok()?;
    let signing_input = &compact[..compact.len() - signature.len() - 1];
    Some(Parts {
        signing_input,
        signature,
        claims,
    })
}

/// Reads claims without checking the signature (client side).
pub fn decode_unverified(compact: &str) -> Option<SignedToken> {
    let parts = split(compact)?;
    Some(SignedToken {
        compact: compact.to_string(),
        claims: parts.claims,
        alg: "HS256".into(),
    })
}
