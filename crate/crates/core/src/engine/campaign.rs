use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{CampaignConfig, ConfigError};
use super::execute::{extract_handles, Allowlist, ExecutedExchange, Executor, Outcome, RateLimiter, TokenSpec};
use super::instantiate::{instantiate, stable_draft};
use super::request::{render, ConcreteRequest, DraftBody};
use super::sequence::{Binding, Planner, TestSequence};
use super::EngineError;
use crate::checkers::{
    cross_service_probes, malformed_variants, omission_variants, payload_variants, CROSS_SERVICE_TOKEN,
    MALFORMED_VALUE, OPTIONAL_PARAM_OMISSION, PAYLOAD_BODY,
};
use crate::clock::{Clock, SystemClock};
use crate::detect::{detect, write_report, BugReport, DetectOptions};
use crate::grammar::{build_dictionary, FuzzDictionary, Grammar, RequestTemplate};
use crate::http::{HttpTransport, Transport};
use crate::oauth::TokenProvider;

pub const EXCHANGE_LOG: &str = "exchanges.ndjson";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub requests_sent: u64,
    pub sequences_executed: u64,
    pub bug_count_by_class: BTreeMap<String, u64>,
    pub reports: u64,
    pub wall_time_ms: u64,
}

pub struct CampaignOutput {
    pub summary: CampaignSummary,
    pub reports: Vec<BugReport>,
    pub exchanges: Vec<ExecutedExchange>,
}

/// One executed step before it receives an exchange id.
struct StepRecord {
    step: usize,
    bindings: Vec<Binding>,
    token: Option<TokenSpec>,
    outcome: Outcome,
}

struct SequenceResult {
    records: Vec<StepRecord>,
    /// Every step ran and returned 2xx.
    retained: bool,
}

struct Campaign<'a> {
    config: &'a CampaignConfig,
    templates: BTreeMap<String, RequestTemplate>,
    dict: FuzzDictionary,
    executor: Executor,
    log: BufWriter<File>,
    log_path: PathBuf,
    exchanges: Vec<ExecutedExchange>,
    checked: BTreeSet<String>,
}

fn io_error(path: &Path, source: std::io::Error) -> EngineError {
    EngineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads the grammar named by `config` and runs against live targets.
pub fn run_campaign(config: &CampaignConfig, out_dir: &Path) -> Result<CampaignOutput, EngineError> {
    let text = std::fs::read_to_string(&config.grammar).map_err(|e| io_error(&config.grammar, e))?;
    let grammar = Grammar::from_json(&text)?;
    let transport = Arc::new(HttpTransport::new(Duration::from_millis(config.timeout_ms)));
    run_campaign_with(config, &grammar, transport, Arc::new(SystemClock), out_dir)
}

pub fn run_campaign_with(
    config: &CampaignConfig,
    grammar: &Grammar,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    out_dir: &Path,
) -> Result<CampaignOutput, EngineError> {
    let started = Instant::now();
    config.validate()?;
    let allowlist = config.allowlist();
    let mut templates = Vec::new();
    for t in &grammar.templates {
        if allowlist.allows(&t.server) {
            templates.push(t.clone());
        } else {
            log::warn!("{}: server {} is not a target; skipped", t.template_id, t.server);
        }
    }
    if templates.is_empty() {
        return Err(ConfigError::Invalid("no grammar template is served by a listed target".into()).into());
    }

    let mut overlay = grammar.dictionary.overlay.clone();
    overlay.extend(config.overlay.clone());
    build_dictionary(&templates, Some(&overlay))?;
    let mut dict = grammar.dictionary.clone();
    dict.overlay = overlay;

    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    clear_buckets(out_dir).map_err(|e| io_error(out_dir, e))?;
    let log_path = out_dir.join(EXCHANGE_LOG);
    let log = BufWriter::new(File::create(&log_path).map_err(|e| io_error(&log_path, e))?);

    let tokens = TokenProvider::new(config.token.source()?, transport.clone(), clock);
    let mut campaign = Campaign {
        config,
        templates: templates.iter().map(|t| (t.template_id.clone(), t.clone())).collect(),
        dict,
        executor: Executor {
            transport,
            tokens: Arc::new(tokens),
            allowlist,
            limiter: RateLimiter::new(config.rate_limit),
            retries: config.retries,
        },
        log,
        log_path,
        exchanges: Vec::new(),
        checked: BTreeSet::new(),
    };

    let mut planner = Planner::new(
        &templates,
        &grammar.edges,
        config.seed,
        config.max_sequence_length,
        config.max_prefixes_per_level,
    );
    if config.checkers.cross_service_token {
        campaign.cross_service(&templates, &mut planner)?;
    }

    let pool = (config.workers > 1)
        .then(|| rayon::ThreadPoolBuilder::new().num_threads(config.workers).build())
        .transpose()
        .map_err(|e| ConfigError::Invalid(format!("worker pool: {e}")))?;
    let mut sequences_executed = 0;
    let mut level = planner.first_level();
    'levels: while !level.is_empty() {
        let mut batch = Vec::new();
        let mut reserved = 0;
        let mut exhausted = false;
        for seq in level {
            if campaign.used() + reserved + seq.len() as u64 > config.budget {
                exhausted = true;
                break;
            }
            reserved += seq.len() as u64;
            batch.push(seq);
        }
        let results: Vec<SequenceResult> = match &pool {
            Some(pool) => pool.install(|| batch.par_iter().map(|s| campaign.execute(s)).collect()),
            None => batch.iter().map(|s| campaign.execute(s)).collect(),
        };
        let mut retained = Vec::new();
        for (seq, result) in batch.into_iter().zip(results) {
            sequences_executed += 1;
            let keep = result.retained;
            campaign.intake(&seq, result)?;
            if keep {
                retained.push(seq);
            }
            if campaign.used() >= config.budget {
                break 'levels;
            }
        }
        if exhausted {
            break;
        }
        level = planner.extend(&retained);
    }
    campaign.log.flush().map_err(|e| io_error(&campaign.log_path, e))?;

    let reports = detect(
        &templates,
        &campaign.exchanges,
        &DetectOptions {
            status_mapping: config.checkers.status_mapping,
            token: config.token.clone(),
        },
    );
    for r in &reports {
        write_report(r, out_dir).map_err(|e| io_error(out_dir, e))?;
    }
    let mut bug_count_by_class = BTreeMap::new();
    for r in &reports {
        *bug_count_by_class.entry(r.bucket_key.class.to_string()).or_insert(0) += 1;
    }
    let summary = CampaignSummary {
        requests_sent: campaign.exchanges.len() as u64,
        sequences_executed,
        bug_count_by_class,
        reports: reports.len() as u64,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    let summary_path = out_dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&summary_path, text).map_err(|e| io_error(&summary_path, e))?;
    Ok(CampaignOutput {
        summary,
        reports,
        exchanges: campaign.exchanges,
    })
}

/// Removes bucket directories left by an earlier run.
fn clear_buckets(out_dir: &Path) -> std::io::Result<()> {
    for entry in std::fs::read_dir(out_dir)? {
        let path = entry?.path();
        if path.join("report.json").is_file() && path.join("replay.json").is_file() {
            std::fs::remove_dir_all(&path)?;
        }
    }
    Ok(())
}

impl Campaign<'_> {
    fn used(&self) -> u64 {
        self.exchanges.len() as u64
    }

    fn template(&self, id: &str) -> &RequestTemplate {
        &self.templates[id]
    }

    /// Runs one sequence; touches no campaign state, so batches may run
    /// in parallel.
    fn execute(&self, seq: &TestSequence) -> SequenceResult {
        let mut records = Vec::new();
        let mut handles: Vec<BTreeMap<String, String>> = Vec::new();
        for (i, step) in seq.steps.iter().enumerate() {
            let template = self.template(&step.template_id);
            let mut bound = BTreeMap::new();
            for b in &step.bindings {
                match handles.get(b.from_step).and_then(|h| h.get(&b.handle)) {
                    Some(v) => bound.insert(b.slot.clone(), Value::String(v.clone())),
                    None => return SequenceResult { records, retained: false },
                };
            }
            let request = match instantiate(template, &self.dict, &bound, step.seed, self.config.optional_probability) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("sequence {}: {e}", seq.id);
                    return SequenceResult { records, retained: false };
                }
            };
            let token = TokenSpec::for_template(template);
            let outcome = match self.executor.send(&request, token.as_ref()) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("sequence {}: token for {}: {e}", seq.id, template.template_id);
                    return SequenceResult { records, retained: false };
                }
            };
            let ok = (200..300).contains(&outcome.status);
            handles.push(if ok {
                extract_handles(&template.produces, &outcome.response_headers, &outcome.response_body)
            } else {
                BTreeMap::new()
            });
            records.push(StepRecord {
                step: i,
                bindings: step.bindings.clone(),
                token,
                outcome,
            });
            if !ok {
                return SequenceResult { records, retained: false };
            }
        }
        SequenceResult { records, retained: true }
    }

    fn push(
        &mut self,
        sequence: u64,
        step: usize,
        checker: Option<&str>,
        bindings: Vec<Binding>,
        token: Option<TokenSpec>,
        outcome: Outcome,
    ) -> Result<&ExecutedExchange, EngineError> {
        let exchange = ExecutedExchange {
            id: self.exchanges.len() as u64,
            sequence,
            step,
            checker: checker.map(str::to_string),
            request: outcome.request,
            bindings,
            token,
            token_claims: outcome.token_claims,
            status: outcome.status,
            transport_error: outcome.transport_error,
            response_headers: outcome.response_headers,
            response_body: outcome.response_body,
            attempts: outcome.attempts,
            latency_ms: self.config.log_latency.then_some(outcome.latency_ms),
        };
        let line = serde_json::to_string(&exchange).expect("exchange serializes");
        writeln!(self.log, "{line}").map_err(|e| io_error(&self.log_path, e))?;
        self.exchanges.push(exchange);
        Ok(self.exchanges.last().expect("just pushed"))
    }

    /// Sends checker requests while budget remains. Returns the exchanges'
    /// statuses.
    fn send_variants(
        &mut self,
        sequence: u64,
        step: usize,
        checker: &str,
        bindings: &[Binding],
        token: Option<&TokenSpec>,
        variants: Vec<ConcreteRequest>,
    ) -> Result<Vec<u16>, EngineError> {
        let mut statuses = Vec::new();
        for request in variants.into_iter().take(self.config.checkers.variant_cap) {
            if self.used() >= self.config.budget {
                break;
            }
            match self.executor.send(&request, token) {
                Ok(outcome) => {
                    let e = self.push(sequence, step, Some(checker), bindings.to_vec(), token.cloned(), outcome)?;
                    statuses.push(e.status);
                }
                Err(e) => log::warn!("{checker}: token: {e}"),
            }
        }
        Ok(statuses)
    }

    fn intake(&mut self, seq: &TestSequence, result: SequenceResult) -> Result<(), EngineError> {
        for record in result.records {
            if self.used() >= self.config.budget {
                return Ok(());
            }
            let template_id = record.outcome.request.provenance.template_id.clone();
            let bound: BTreeMap<String, Value> = record
                .bindings
                .iter()
                .filter_map(|b| {
                    record
                        .outcome
                        .request
                        .path_values
                        .iter()
                        .find(|(slot, _)| *slot == b.slot)
                        .map(|(slot, v)| (slot.clone(), Value::String(v.clone())))
                })
                .collect();
            let (step, bindings, token) = (record.step, record.bindings.clone(), record.token.clone());
            self.push(seq.id, step, None, record.bindings, record.token, record.outcome)?;
            if self.checked.insert(template_id.clone()) {
                self.run_checkers(seq.id, step, &template_id, &bound, &bindings, token.as_ref())?;
            }
        }
        Ok(())
    }

    /// Omission, malformed-value and payload checkers on a template's first
    /// execution, reusing that step's handle bindings.
    fn run_checkers(
        &mut self,
        sequence: u64,
        step: usize,
        template_id: &str,
        bound: &BTreeMap<String, Value>,
        bindings: &[Binding],
        token: Option<&TokenSpec>,
    ) -> Result<(), EngineError> {
        let template = self.template(template_id).clone();
        let flags = self.config.checkers.clone();
        if flags.optional_param_omission {
            let variants = omission_variants(&template, &self.dict, bound)?;
            self.send_variants(sequence, step, OPTIONAL_PARAM_OMISSION, bindings, token, variants)?;
        }
        if flags.malformed_value {
            let variants = malformed_variants(&template, &self.dict, bound)?;
            self.send_variants(sequence, step, MALFORMED_VALUE, bindings, token, variants)?;
        }
        if flags.payload_body && template.body.is_some() {
            let base = stable_draft(&template, &self.dict, bound)?;
            let Some(DraftBody::Json(body)) = base.body.clone() else {
                return Ok(());
            };
            let base_request = render(&template, &base, &format!("{PAYLOAD_BODY}:base"), 0);
            let statuses = self.send_variants(sequence, step, PAYLOAD_BODY, bindings, token, vec![base_request])?;
            if statuses.first().is_some_and(|s| (200..300).contains(s)) {
                let pinned = template.body.as_ref().map(|b| b.pinned_fields.clone()).unwrap_or_default();
                let variants = payload_variants(&body, &pinned, flags.variant_cap)
                    .into_iter()
                    .map(|(tag, b)| {
                        let mut d = base.clone();
                        d.body = Some(b);
                        render(&template, &d, &format!("{PAYLOAD_BODY}:{tag}"), 0)
                    })
                    .collect();
                self.send_variants(sequence, step, PAYLOAD_BODY, bindings, token, variants)?;
            }
        }
        Ok(())
    }

    /// Each probe is its own one-step sequence.
    fn cross_service(&mut self, templates: &[RequestTemplate], planner: &mut Planner) -> Result<(), EngineError> {
        for probe in cross_service_probes(templates, &self.config.extra_scopes) {
            if self.used() >= self.config.budget {
                break;
            }
            let template = self.template(&probe.target).clone();
            let draft = stable_draft(&template, &self.dict, &BTreeMap::new())?;
            let request = render(&template, &draft, &format!("{CROSS_SERVICE_TOKEN}:{}", probe.scope), 0);
            let token = probe.token();
            match self.executor.send(&request, Some(&token)) {
                Ok(outcome) => {
                    let id = planner.reserve_id();
                    self.push(id, 0, Some(CROSS_SERVICE_TOKEN), Vec::new(), Some(token), outcome)?;
                }
                Err(e) => log::warn!("{CROSS_SERVICE_TOKEN}: no token for scope {}: {e}", probe.scope),
            }
        }
        Ok(())
    }
}

/// Reads an exchange log back.
pub fn read_exchange_log(path: &Path) -> Result<Vec<ExecutedExchange>, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(EngineError::from))
        .collect()
}

/// Allowlist used for a replay: the replay's own origins.
pub fn replay_allowlist(replay: &crate::detect::ReplayFile) -> Allowlist {
    let mut origins: Vec<String> = replay.steps.iter().map(|s| s.request.server.clone()).collect();
    origins.extend(replay.token.endpoint.clone());
    Allowlist::new(origins)
}

/// Executor for a replay: its own origins, no rate limit, no retries.
pub fn replay_executor(
    replay: &crate::detect::ReplayFile,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
) -> Result<Executor, ConfigError> {
    let tokens = TokenProvider::new(replay.token.source()?, transport.clone(), clock);
    Ok(Executor {
        transport,
        tokens: Arc::new(tokens),
        allowlist: replay_allowlist(replay),
        limiter: RateLimiter::new(None),
        retries: 0,
    })
}
