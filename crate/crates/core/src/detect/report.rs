use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{body_fingerprint, classify, BugClass, ClassifyContext};
use crate::checkers::DeclaredStatuses;
use crate::engine::{Binding, ConcreteRequest, ExecutedExchange, TokenConfig, TokenSpec};
use crate::grammar::{RequestTemplate, ResourceHandle};

pub const REPLAY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BucketKey {
    pub class: BugClass,
    /// `"METHOD path_template"`.
    pub endpoint: String,
    /// Checker name, or `explore`.
    pub checker: String,
    pub status: u16,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayStep {
    /// Sent without Authorization; the token is obtained again at replay.
    pub request: ConcreteRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<TokenSpec>,
    /// `from_step` indexes this replay's steps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bindings: Vec<Binding>,
    /// Handles this step's response yields for later steps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub produces: Vec<ResourceHandle>,
}

/// Everything needed to re-run a finding: no campaign state, no grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFile {
    pub version: u32,
    pub bug_class: BugClass,
    pub checker: String,
    pub endpoint: String,
    pub declared_statuses: DeclaredStatuses,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_scope: Option<String>,
    /// Token settings without the secret.
    pub token: TokenConfig,
    pub status_mapping: bool,
    pub steps: Vec<ReplayStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub bucket_key: BucketKey,
    /// Exchange id of the first occurrence.
    pub first_seen: u64,
    pub occurrence_count: u64,
    pub expectation: String,
    pub evidence: ExecutedExchange,
    pub replay: ReplayFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOptions {
    pub status_mapping: bool,
    pub token: TokenConfig,
}

fn context(template: &RequestTemplate, status_mapping: bool) -> ClassifyContext {
    ClassifyContext {
        declared: DeclaredStatuses::new(template.declared_responses.keys().cloned()),
        auth_scope: template.auth_scope.clone(),
        status_mapping,
    }
}

/// Classifies and buckets a whole exchange log. The result depends only on
/// the log, so re-ingesting a log reproduces the report set.
pub fn detect(templates: &[RequestTemplate], exchanges: &[ExecutedExchange], opts: &DetectOptions) -> Vec<BugReport> {
    let by_id: BTreeMap<&str, &RequestTemplate> = templates.iter().map(|t| (t.template_id.as_str(), t)).collect();
    let explored: BTreeMap<(u64, usize), &ExecutedExchange> = exchanges
        .iter()
        .filter(|e| e.checker.is_none())
        .map(|e| ((e.sequence, e.step), e))
        .collect();
    let mut token = opts.token.clone();
    token.key = None;

    let mut reports: BTreeMap<BucketKey, BugReport> = BTreeMap::new();
    for e in exchanges {
        let Some(template) = by_id.get(e.request.provenance.template_id.as_str()) else {
            continue;
        };
        let ctx = context(template, opts.status_mapping);
        let Some(found) = classify(&ctx, e) else { continue };
        let key = BucketKey {
            class: found.class,
            endpoint: template.template_id.clone(),
            checker: e.checker.clone().unwrap_or_else(|| "explore".into()),
            status: e.status,
            fingerprint: body_fingerprint(&e.response_body),
        };
        if let Some(r) = reports.get_mut(&key) {
            r.occurrence_count += 1;
            continue;
        }
        let replay = ReplayFile {
            version: REPLAY_VERSION,
            bug_class: found.class,
            checker: key.checker.clone(),
            endpoint: key.endpoint.clone(),
            declared_statuses: ctx.declared.clone(),
            service_scope: ctx.auth_scope.clone(),
            token: token.clone(),
            status_mapping: opts.status_mapping,
            steps: minimal_steps(e, &explored, &by_id),
        };
        reports.insert(
            key.clone(),
            BugReport {
                bucket_key: key,
                first_seen: e.id,
                occurrence_count: 1,
                expectation: found.expectation,
                evidence: e.clone(),
                replay,
            },
        );
    }
    reports.into_values().collect()
}

/// The binding closure of `target` within its sequence, then `target`.
fn minimal_steps(
    target: &ExecutedExchange,
    explored: &BTreeMap<(u64, usize), &ExecutedExchange>,
    templates: &BTreeMap<&str, &RequestTemplate>,
) -> Vec<ReplayStep> {
    let mut needed = BTreeSet::new();
    let mut pending: Vec<usize> = target.bindings.iter().map(|b| b.from_step).collect();
    while let Some(step) = pending.pop() {
        if needed.insert(step) {
            if let Some(e) = explored.get(&(target.sequence, step)) {
                pending.extend(e.bindings.iter().map(|b| b.from_step));
            }
        }
    }
    let renumber: BTreeMap<usize, usize> = needed.iter().enumerate().map(|(new, old)| (*old, new)).collect();
    let to_step = |e: &ExecutedExchange| ReplayStep {
        request: e.request.without_authorization(),
        token: e.token.clone(),
        bindings: e
            .bindings
            .iter()
            .filter_map(|b| {
                renumber.get(&b.from_step).map(|n| Binding {
                    slot: b.slot.clone(),
                    from_step: *n,
                    handle: b.handle.clone(),
                })
            })
            .collect(),
        produces: templates
            .get(e.request.provenance.template_id.as_str())
            .map(|t| t.produces.clone())
            .unwrap_or_default(),
    };
    let mut steps: Vec<ReplayStep> = needed
        .iter()
        .filter_map(|s| explored.get(&(target.sequence, *s)))
        .map(|e| to_step(e))
        .collect();
    let mut last = to_step(target);
    last.produces.clear();
    steps.push(last);
    steps
}

fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// `<class>-<method>-<path slug>-<status>-<hash8>`.
pub fn bucket_dir_name(key: &BucketKey) -> String {
    let (method, path) = key.endpoint.split_once(' ').unwrap_or(("", &key.endpoint));
    let digest = Sha256::digest(serde_json::to_vec(key).unwrap_or_default());
    format!(
        "{}-{}-{}-{}-{}",
        key.class,
        method,
        slug(path),
        key.status,
        &hex::encode(digest)[..8]
    )
}

fn pretty<T: Serialize>(value: &T) -> std::io::Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    Ok(text)
}

/// Writes `<bucket>/report.json` and `<bucket>/replay.json`.
pub fn write_report(report: &BugReport, out_dir: &Path) -> std::io::Result<PathBuf> {
    let dir = out_dir.join(bucket_dir_name(&report.bucket_key));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("report.json"), pretty(report)?)?;
    std::fs::write(dir.join("replay.json"), pretty(&report.replay)?)?;
    Ok(dir)
}

/// Every `*/report.json` under `dir`, ordered by bucket key.
pub fn load_reports(dir: &Path) -> std::io::Result<Vec<BugReport>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path().join("report.json");
        if path.is_file() {
            let text = std::fs::read_to_string(&path)?;
            let report: BugReport = serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))?;
            out.push(report);
        }
    }
    out.sort_by(|a, b| a.bucket_key.cmp(&b.bucket_key));
    Ok(out)
}
