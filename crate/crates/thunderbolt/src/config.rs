//! Run configuration: TOML file values, overridden by command-line flags.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use thunderbolt_core::replica::{Misbehavior, Protocol};
use thunderbolt_core::shard::ConflictPolicy;
use thunderbolt_core::sim::{Fault, SimConfig};
use thunderbolt_core::workload::SmallBankSpec;
use thunderbolt_core::ReplicaId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolArg {
    Thunderbolt,
    TuskSerial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Convert,
    Skip,
}

/// Fault injected into the last `f` replicas.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryArg {
    None,
    Crash,
    Delay,
    Halt,
    Censor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolArg,
    pub replicas: u32,
    /// Tolerated faults; must equal `(replicas - 1) / 3`.
    pub faults: Option<u32>,
    pub adversary: AdversaryArg,
    pub executors: usize,
    pub batch: usize,
    pub theta: f64,
    pub pr: f64,
    pub cross_pct: f64,
    pub k: u64,
    pub k_rotate: u64,
    pub seed: u64,
    pub txs: usize,
    pub accounts: u64,
    pub clients: u32,
    pub policy: PolicyArg,
    /// Modelled microseconds per read or write.
    pub op_cost: u64,
    pub round_timeout_us: u64,
    pub delay_min_us: u64,
    pub delay_max_us: u64,
    pub client_timeout_us: u64,
    pub submit_interval_us: u64,
    pub horizon_s: f64,
    /// Validate and run cross-shard batches on threads.
    pub parallel_exec: bool,
    /// Replay this workload file instead of generating one.
    pub workload: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        let p = &sim.protocol;
        let spec = SmallBankSpec::default();
        Self {
            protocol: ProtocolArg::Thunderbolt,
            replicas: p.n,
            faults: None,
            adversary: AdversaryArg::None,
            executors: p.executors,
            batch: p.batch,
            theta: spec.theta,
            pr: spec.p_read,
            cross_pct: spec.cross_pct,
            k: p.k,
            k_rotate: p.k_rotate,
            seed: 1,
            txs: 5_000,
            accounts: spec.accounts,
            clients: spec.clients,
            policy: PolicyArg::Skip,
            op_cost: p.op_cost,
            round_timeout_us: p.round_timeout,
            delay_min_us: sim.delay_min,
            delay_max_us: sim.delay_max,
            client_timeout_us: sim.client_timeout,
            submit_interval_us: 1,
            horizon_s: sim.horizon as f64 / 1e6,
            parallel_exec: false,
            workload: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing configuration")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn f(&self) -> u32 {
        self.replicas.saturating_sub(1) / 3
    }

    pub fn check(&self) -> Result<()> {
        if self.replicas < 4 {
            bail!("need at least 4 replicas");
        }
        if let Some(f) = self.faults {
            if f != self.f() {
                bail!("{} replicas tolerate exactly {} faults, not {f}", self.replicas, self.f());
            }
        }
        if self.batch == 0 || self.executors == 0 || self.txs == 0 {
            bail!("batch, executors and txs must be positive");
        }
        if self.delay_min_us > self.delay_max_us {
            bail!("delay_min_us exceeds delay_max_us");
        }
        if self.horizon_s.is_nan() || self.horizon_s <= 0.0 {
            bail!("horizon must be positive");
        }
        if self.k == 0 || self.k_rotate == 0 {
            bail!("k and k_rotate must be positive");
        }
        self.spec().check().map_err(anyhow::Error::msg)
    }

    pub fn spec(&self) -> SmallBankSpec {
        SmallBankSpec {
            accounts: self.accounts,
            theta: self.theta,
            p_read: self.pr,
            cross_pct: self.cross_pct,
            count: self.txs,
            seed: self.seed,
            shards: self.replicas,
            clients: self.clients,
        }
    }

    pub fn sim(&self) -> SimConfig {
        let mut c = SimConfig {
            seed: self.seed,
            delay_min: self.delay_min_us,
            delay_max: self.delay_max_us,
            horizon: (self.horizon_s * 1e6) as u64,
            client_timeout: self.client_timeout_us,
            submit_interval: if self.workload.is_some() { None } else { Some(self.submit_interval_us) },
            ..SimConfig::default()
        };
        let p = &mut c.protocol;
        p.protocol = match self.protocol {
            ProtocolArg::Thunderbolt => Protocol::Thunderbolt,
            ProtocolArg::TuskSerial => Protocol::TuskSerial,
        };
        p.n = self.replicas;
        p.batch = self.batch;
        p.executors = self.executors;
        p.op_cost = self.op_cost;
        p.k = self.k;
        p.k_rotate = self.k_rotate;
        p.round_timeout = self.round_timeout_us;
        p.policy = match self.policy {
            PolicyArg::Convert => ConflictPolicy::Convert,
            PolicyArg::Skip => ConflictPolicy::SkipUntilFinalized,
        };
        let f = self.f();
        for r in self.replicas - f..self.replicas {
            let fault = match self.adversary {
                AdversaryArg::None => continue,
                AdversaryArg::Crash => Fault::Crash { at: 0 },
                AdversaryArg::Delay => Fault::Delay { extra: 10 * self.delay_max_us },
                AdversaryArg::Halt => Fault::HaltProposals { dag: None, from_round: 2, except: Vec::new() },
                AdversaryArg::Censor => Fault::Behave(Misbehavior::Censor(None)),
            };
            c.faults.push((ReplicaId(r), fault));
        }
        c
    }
}
