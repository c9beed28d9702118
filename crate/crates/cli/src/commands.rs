use std::collections::BTreeMap;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sbifuzz::clock::SystemClock;
use sbifuzz::detect::{load_reports, rebase_replay, run_replay, ReplayFile};
use sbifuzz::engine::{replay_executor, run_campaign, CampaignConfig, EngineError};
use sbifuzz::grammar::{Grammar, GrammarError, Overlay, PinPolicy};
use sbifuzz::http::HttpTransport;
use sbifuzz::oauth::{ClaimCompleteness, VerifierMode};
use sbifuzz::spec::{
    fs_resolver, load_document, resolve_refs, rewrite_servers, validate_spec, write_bundle, HostMap, HostPort,
    ResolvedSpec,
};
use sbifuzz_testbed::{BugFlag, Nf, Testbed, TestbedConfig};

/// Bad input from the user: exits with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

#[derive(Debug, Parser)]
#[command(name = "sbifuzz", version, about = "Stateful grammar-based fuzzer for 5G core SBI APIs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resolve external references and write self-contained specs.
    Bundle {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        hosts: HostArgs,
    },
    /// Compile bundled specs into a grammar file.
    Compile {
        #[arg(required = true)]
        specs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// YAML or JSON map from parameter name to values.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Hold a parameter or body field fixed.
        #[arg(long = "pin", value_name = "NAME")]
        pins: Vec<String>,
        #[command(flatten)]
        hosts: HostArgs,
    },
    /// Run a campaign.
    Fuzz {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summarise the reports in a campaign directory.
    Report { dir: PathBuf },
    /// Re-run one finding.
    Replay {
        file: PathBuf,
        /// Point `OLD` base URLs at `NEW`.
        #[arg(long, value_name = "OLD=NEW")]
        rebase: Vec<String>,
        /// Shared secret when the replay mints its own tokens.
        #[arg(long)]
        key: Option<String>,
    },
    /// Serve the mock core until interrupted.
    Testbed(TestbedArgs),
}

#[derive(Debug, Args)]
struct HostArgs {
    /// `service=host:port`, e.g. `udm=127.0.0.1:8001`.
    #[arg(long = "host", value_name = "SERVICE=HOST:PORT")]
    hosts: Vec<String>,
    /// Host map file (YAML or JSON).
    #[arg(long)]
    host_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TestbedArgs {
    /// `B1,B3`, `all` or `none`.
    #[arg(long, default_value = "none")]
    bugs: String,
    /// correct, seeded-scope-shadow or free5gc-minimal; B8 implies the
    /// second.
    #[arg(long)]
    verifier_mode: Option<String>,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    crash_hard: bool,
    #[arg(long, default_value = "127.0.0.1")]
    bind_base: IpAddr,
    /// NRF listens here, then UDM, NSSF and PCF on the next ports.
    #[arg(long, default_value_t = 8000)]
    port_base: u16,
    /// full or minimal token claims.
    #[arg(long, default_value = "full")]
    claims: String,
    #[arg(long, default_value_t = 3600)]
    token_ttl: u64,
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Bundle { specs, out, hosts } => bundle(&specs, &out, &hosts),
        Command::Compile {
            specs,
            out,
            overlay,
            pins,
            hosts,
        } => compile(&specs, &out, overlay.as_deref(), &pins, &hosts),
        Command::Fuzz {
            config,
            out,
            seed,
            budget,
            workers,
        } => fuzz(&config, &out, seed, budget, workers),
        Command::Report { dir } => report(&dir),
        Command::Replay { file, rebase, key } => replay(&file, &rebase, key),
        Command::Testbed(args) => testbed(&args),
    }
}

fn host_map(args: &HostArgs) -> Result<Option<HostMap>> {
    let mut map = match &args.host_map {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_yaml::from_str::<HostMap>(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    for entry in &args.hosts {
        let (service, host) = entry
            .split_once('=')
            .ok_or_else(|| usage(format!("--host {entry:?}: expected SERVICE=HOST:PORT")))?;
        let host: HostPort = host.parse().map_err(|e| usage(format!("--host {entry:?}: {e}")))?;
        map = Some(map.unwrap_or_default().with(service, host));
    }
    Ok(map)
}

fn load_specs(paths: &[PathBuf], hosts: Option<&HostMap>) -> Result<Vec<ResolvedSpec>> {
    let mut out = Vec::new();
    for path in paths {
        let raw = load_document(path)?;
        let mut spec = resolve_refs(&raw, fs_resolver)?;
        if let Some(hosts) = hosts {
            spec = rewrite_servers(&spec, hosts)?;
        }
        for d in validate_spec(&spec) {
            log::warn!("{}: {d}", path.display());
        }
        out.push(spec);
    }
    Ok(out)
}

fn bundle(specs: &[PathBuf], out: &Path, hosts: &HostArgs) -> Result<u8> {
    let hosts = host_map(hosts)?;
    for spec in load_specs(specs, hosts.as_ref())? {
        let path = write_bundle(&spec, out)?;
        println!("{}", path.display());
    }
    Ok(0)
}

fn compile(specs: &[PathBuf], out: &Path, overlay: Option<&Path>, pins: &[String], hosts: &HostArgs) -> Result<u8> {
    let hosts = host_map(hosts)?;
    let specs = load_specs(specs, hosts.as_ref())?;
    let overlay: Option<Overlay> = match overlay {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(serde_yaml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let policy = pins.iter().fold(PinPolicy::default(), |p, name| p.pin(name));
    let (grammar, diagnostics) = Grammar::build(&specs, overlay.as_ref(), &policy).map_err(|e| match e {
        GrammarError::OverlayTypeMismatch { .. } => usage(e),
        other => other.into(),
    })?;
    for d in diagnostics {
        log::warn!("{d}");
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, grammar.to_json()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{}: {} templates, {} dependency edges",
        out.display(),
        grammar.templates.len(),
        grammar.edges.len()
    );
    Ok(0)
}

fn fuzz(config: &Path, out: &Path, seed: Option<u64>, budget: Option<u64>, workers: Option<usize>) -> Result<u8> {
    let mut config = CampaignConfig::load(config).map_err(usage)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(budget) = budget {
        config.budget = budget;
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    config.validate().map_err(usage)?;
    let output = run_campaign(&config, out).map_err(|e| match e {
        EngineError::Config(c) => usage(c),
        other => other.into(),
    })?;
    let s = &output.summary;
    println!(
        "{} requests, {} sequences, {} reports in {} ms",
        s.requests_sent, s.sequences_executed, s.reports, s.wall_time_ms
    );
    for (class, n) in &s.bug_count_by_class {
        println!("  {class}: {n}");
    }
    Ok(if s.reports > 0 { 2 } else { 0 })
}

fn report(dir: &Path) -> Result<u8> {
    let reports = load_reports(dir).with_context(|| format!("reading reports under {}", dir.display()))?;
    let mut rows: BTreeMap<(String, String), (u64, usize)> = BTreeMap::new();
    for r in &reports {
        let row = rows
            .entry((r.bucket_key.class.to_string(), r.bucket_key.endpoint.clone()))
            .or_default();
        row.0 += r.occurrence_count;
        row.1 += 1;
    }
    let class_w = rows.keys().map(|k| k.0.len()).max().unwrap_or(0).max(5);
    let endpoint_w = rows.keys().map(|k| k.1.len()).max().unwrap_or(0).max(8);
    println!("{:class_w$}  {:endpoint_w$}  {:>7}  {:>11}", "class", "endpoint", "buckets", "occurrences");
    for ((class, endpoint), (occurrences, buckets)) in &rows {
        println!("{class:class_w$}  {endpoint:endpoint_w$}  {buckets:>7}  {occurrences:>11}");
    }
    println!("{} reports", reports.len());
    Ok(0)
}

fn replay(file: &Path, rebase: &[String], key: Option<String>) -> Result<u8> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let mut replay: ReplayFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", file.display())))?;
    for pair in rebase {
        let (old, new) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("--rebase {pair:?}: expected OLD=NEW")))?;
        rebase_replay(&mut replay, old, new);
    }
    if key.is_some() {
        replay.token.key = key;
    }
    let transport = Arc::new(HttpTransport::new(Duration::from_secs(10)));
    let executor = replay_executor(&replay, transport, Arc::new(SystemClock)).map_err(usage)?;
    let outcome = run_replay(&replay, &executor);
    for e in &outcome.exchanges {
        let status = match &e.transport_error {
            Some(err) => format!("transport error: {err}"),
            None => e.status.to_string(),
        };
        println!("step {}: {} {} -> {status}", e.step, e.request.method, e.request.url());
    }
    if let Some(note) = &outcome.note {
        println!("stopped: {note}");
    }
    if outcome.reproduced {
        println!("reproduced: {} at {}", replay.bug_class, replay.endpoint);
        Ok(2)
    } else {
        match outcome.observed {
            Some(class) => println!("not reproduced (observed {class}, expected {})", replay.bug_class),
            None => println!("not reproduced"),
        }
        Ok(0)
    }
}

fn testbed(args: &TestbedArgs) -> Result<u8> {
    let bugs = BugFlag::parse_list(&args.bugs).map_err(usage)?;
    let mut config = TestbedConfig::on_ports(args.bind_base, args.port_base)
        .with_bugs(bugs)
        .deterministic(args.deterministic);
    if let Some(mode) = &args.verifier_mode {
        let mode: VerifierMode = mode.parse().map_err(|e| usage(format!("--verifier-mode: {e}")))?;
        if config.bugs.contains(&BugFlag::B8) && mode != VerifierMode::SeededScopeShadow {
            bail!(usage("B8 requires the seeded-scope-shadow verifier"));
        }
        config.set_verifier_mode(mode);
    }
    config.crash_hard = args.crash_hard;
    config.token_claims = args
        .claims
        .parse::<ClaimCompleteness>()
        .map_err(|e| usage(format!("--claims: {e}")))?;
    config.token_ttl = args.token_ttl;
    let tb = Testbed::start(config).map_err(usage)?;
    for nf in Nf::ALL {
        println!("{:4} {}", nf.name(), tb.base_url(nf));
    }
    println!("token endpoint {}", tb.token_endpoint());
    loop {
        std::thread::park();
    }
}
