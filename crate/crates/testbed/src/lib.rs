//! A mock service-based core: NRF (token issuance, discovery), UDM, NSSF
//! and PCF stubs, each carrying defects that can be switched on one by one.
//!
//! Seeded defects answer with fingerprinted 500s instead of terminating, so
//! a campaign keeps running and every finding names its site.

mod handlers;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener};
use std::str::FromStr;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sbifuzz::oauth::{ClaimCompleteness, Snssai, VerifierMode};
use sbifuzz::spec::HostMap;

pub use state::{DETERMINISTIC_EPOCH, TOKEN_PATH};

/// Network functions the testbed runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nf {
    Nrf,
    Udm,
    Nssf,
    Pcf,
}

impl Nf {
    pub const ALL: [Nf; 4] = [Nf::Nrf, Nf::Udm, Nf::Nssf, Nf::Pcf];

    /// Lowercase name, as used for host-map keys.
    pub fn name(self) -> &'static str {
        match self {
            Nf::Nrf => "nrf",
            Nf::Udm => "udm",
            Nf::Nssf => "nssf",
            Nf::Pcf => "pcf",
        }
    }

    pub fn nf_type(self) -> &'static str {
        match self {
            Nf::Nrf => "NRF",
            Nf::Udm => "UDM",
            Nf::Nssf => "NSSF",
            Nf::Pcf => "PCF",
        }
    }

    /// Fixed NF instance id.
    pub fn instance_id(self) -> &'static str {
        match self {
            Nf::Nrf => "8f7e0d4a-0b65-4c57-9b1d-4f3a2b1c0d01",
            Nf::Udm => "8f7e0d4a-0b65-4c57-9b1d-4f3a2b1c0d02",
            Nf::Nssf => "8f7e0d4a-0b65-4c57-9b1d-4f3a2b1c0d03",
            Nf::Pcf => "8f7e0d4a-0b65-4c57-9b1d-4f3a2b1c0d04",
        }
    }
}

/// Seeded defects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BugFlag {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
}

impl BugFlag {
    pub const ALL: [BugFlag; 8] = [
        BugFlag::B1,
        BugFlag::B2,
        BugFlag::B3,
        BugFlag::B4,
        BugFlag::B5,
        BugFlag::B6,
        BugFlag::B7,
        BugFlag::B8,
    ];

    /// Cause string carried in the 500 body; B8 does not produce one.
    pub fn cause(self) -> Option<&'static str> {
        Some(match self {
            BugFlag::B1 => "RUNTIME_PANIC:index-oob",
            BugFlag::B2 => "RUNTIME_PANIC:unmarshal-nil",
            BugFlag::B3 => "RUNTIME_PANIC:unmarshal-bad",
            BugFlag::B4 => "RUNTIME_PANIC:invalid-param",
            BugFlag::B5 => "RUNTIME_PANIC:nil-deref",
            BugFlag::B6 => "RUNTIME_PANIC:type-assert",
            BugFlag::B7 => "SYSTEM_FAILURE",
            BugFlag::B8 => return None,
        })
    }

    /// Parses `B1,B3,B8`; `all` and `none` are accepted.
    pub fn parse_list(text: &str) -> Result<BTreeSet<BugFlag>, String> {
        match text.trim().to_ascii_lowercase().as_str() {
            "all" => return Ok(BugFlag::ALL.into_iter().collect()),
            "" | "none" => return Ok(BTreeSet::new()),
            _ => {}
        }
        text.split(',').map(|s| s.trim().parse()).collect()
    }
}

impl fmt::Display for BugFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for BugFlag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        BugFlag::ALL
            .into_iter()
            .find(|b| b.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown bug flag {s:?} (expected B1..B8)"))
    }
}

/// Known subscribers and canned records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedData {
    pub supis: Vec<String>,
    /// ueId (SUPI or GPSI form) → SUPI.
    pub ue_ids: BTreeMap<String, String>,
    pub shared_data: Vec<serde_json::Value>,
    pub sm_data: Vec<serde_json::Value>,
    pub smf_profile: serde_json::Value,
}

impl Default for SeedData {
    fn default() -> Self {
        serde_json::from_str(include_str!("../fixtures/seed.json")).expect("seed fixture parses")
    }
}

pub const DEFAULT_KEY: &[u8; 32] = b"sbifuzz-testbed-shared-secret-32";

#[derive(Debug, Clone, PartialEq)]
pub struct TestbedConfig {
    pub binds: BTreeMap<Nf, SocketAddr>,
    pub key: Vec<u8>,
    pub verifier_mode: BTreeMap<Nf, VerifierMode>,
    pub bugs: BTreeSet<BugFlag>,
    pub seed: SeedData,
    /// Fixed clock and counter-based ids.
    pub deterministic: bool,
    /// A seeded 500 disables its route until restart.
    pub crash_hard: bool,
    pub token_claims: ClaimCompleteness,
    pub token_ttl: u64,
    /// Slices every producer serves.
    pub served_snssais: Vec<Snssai>,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        TestbedConfig::on_ports(IpAddr::V4(Ipv4Addr::LOCALHOST), 0)
    }
}

impl TestbedConfig {
    /// NRF on `base`, then UDM, NSSF, PCF on the next ports; `base = 0`
    /// picks free ports.
    pub fn on_ports(host: IpAddr, base: u16) -> Self {
        let binds = Nf::ALL
            .iter()
            .enumerate()
            .map(|(i, nf)| {
                let port = if base == 0 { 0 } else { base + i as u16 };
                (*nf, SocketAddr::new(host, port))
            })
            .collect();
        TestbedConfig {
            binds,
            key: DEFAULT_KEY.to_vec(),
            verifier_mode: Nf::ALL.iter().map(|nf| (*nf, VerifierMode::Correct)).collect(),
            bugs: BTreeSet::new(),
            seed: SeedData::default(),
            deterministic: false,
            crash_hard: false,
            token_claims: ClaimCompleteness::Full,
            token_ttl: 3600,
            served_snssais: vec![Snssai {
                sst: 1,
                sd: Some("010203".into()),
            }],
        }
    }

    /// Sets the flags; B8 switches every producer to the scope-shadowing
    /// verifier.
    pub fn with_bugs<I: IntoIterator<Item = BugFlag>>(mut self, bugs: I) -> Self {
        self.bugs = bugs.into_iter().collect();
        if self.bugs.contains(&BugFlag::B8) {
            self.set_verifier_mode(VerifierMode::SeededScopeShadow);
        }
        self
    }

    pub fn set_verifier_mode(&mut self, mode: VerifierMode) {
        for nf in Nf::ALL {
            self.verifier_mode.insert(nf, mode);
        }
    }

    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BindError {
    #[error("cannot bind {nf:?} on {addr}: {source}")]
    Bind {
        nf: Nf,
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("testbed runtime: {0}")]
    Runtime(std::io::Error),
}

/// A running testbed. Dropping it shuts every listener down.
pub struct Testbed {
    addrs: BTreeMap<Nf, SocketAddr>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Testbed {
    pub fn start(config: TestbedConfig) -> Result<Testbed, BindError> {
        let mut listeners = Vec::new();
        let mut addrs = BTreeMap::new();
        for (nf, addr) in &config.binds {
            let listener = TcpListener::bind(addr).map_err(|source| BindError::Bind {
                nf: *nf,
                addr: *addr,
                source,
            })?;
            listener.set_nonblocking(true).map_err(BindError::Runtime)?;
            addrs.insert(*nf, listener.local_addr().map_err(BindError::Runtime)?);
            listeners.push((*nf, listener));
        }
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_io()
            .enable_time()
            .build()
            .map_err(BindError::Runtime)?;
        let shared = state::Shared::new(config);
        let mut servers = Vec::new();
        for (nf, listener) in listeners {
            let listener = {
                let _guard = runtime.enter();
                tokio::net::TcpListener::from_std(listener).map_err(BindError::Runtime)?
            };
            let router = handlers::router(nf, shared.clone());
            servers.push(async move { axum::serve(listener, router).await });
        }
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("testbed".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let mut tasks = tokio::task::JoinSet::new();
                    for s in servers {
                        tasks.spawn(s);
                    }
                    let _ = stopped.await;
                    tasks.abort_all();
                });
                runtime.shutdown_timeout(Duration::from_millis(200));
            })
            .map_err(BindError::Runtime)?;
        Ok(Testbed {
            addrs,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self, nf: Nf) -> SocketAddr {
        self.addrs[&nf]
    }

    /// `http://host:port` of one NF.
    pub fn base_url(&self, nf: Nf) -> String {
        format!("http://{}", self.addr(nf))
    }

    pub fn token_endpoint(&self) -> String {
        format!("{}{TOKEN_PATH}", self.base_url(Nf::Nrf))
    }

    pub fn base_urls(&self) -> BTreeMap<Nf, String> {
        Nf::ALL.iter().map(|nf| (*nf, self.base_url(*nf))).collect()
    }

    /// Host map pointing each NF name at this testbed.
    pub fn host_map(&self) -> HostMap {
        let mut map = HostMap::new("http");
        for nf in Nf::ALL {
            let hp = self.addr(nf).to_string().parse().expect("socket address is host:port");
            map = map.with(nf.name(), hp);
        }
        map
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for Testbed {
    fn drop(&mut self) {
        self.stop_now();
    }
}
