use std::sync::LazyLock;

use regex::Regex;
use sha2::{Digest, Sha256};

static UUID: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}\b").unwrap());
static TIMESTAMP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\d{4}-\d{2}-\d{2}[Tt]\d{2}:\d{2}:\d{2}(\.\d+)?([Zz]|[+-]\d{2}:\d{2})?").unwrap()
});
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d{4,}").unwrap());

/// Uuids, RFC 3339 timestamps and digit runs of four or more replaced by
/// placeholders, in that order.
pub fn normalize_body(body: &str) -> String {
    let s = UUID.replace_all(body, "<uuid>");
    let s = TIMESTAMP.replace_all(&s, "<ts>");
    NUMBER.replace_all(&s, "<n>").into_owned()
}

/// First 16 hex digits of SHA-256 over the normalized body.
pub fn body_fingerprint(body: &str) -> String {
    let digest = Sha256::digest(normalize_body(body).as_bytes());
    hex::encode(&digest[..8])
}
