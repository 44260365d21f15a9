//! Deterministic discrete-event simulation of a replica group and its
//! clients. The seed is the only source of randomness.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::model::{BlockKind, DagId, Digest, ReplicaId, Round, ShardAssignment, ShardId, Transaction, TxId};
use crate::replica::{Misbehavior, Msg, Out, Protocol, ProtocolConfig, Replica, Timer};
use crate::shard::ExecBackend;
use crate::state::State;

/// Network-level fault of one replica.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Stops handling and sending anything from this time on.
    Crash { at: u64 },
    /// Every outgoing message takes this much longer.
    Delay { extra: u64 },
    /// From `from_round` on (in `dag`, or every DAG if `None`), the
    /// replica's own proposals and certificates reach only `except`.
    HaltProposals { dag: Option<DagId>, from_round: Round, except: Vec<ReplicaId> },
    /// Replica-internal deviation.
    Behave(Misbehavior),
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub protocol: ProtocolConfig,
    pub seed: u64,
    pub delay_min: u64,
    pub delay_max: u64,
    pub faults: Vec<(ReplicaId, Fault)>,
    /// Simulated time limit in microseconds.
    pub horizon: u64,
    pub client_timeout: u64,
    /// Gap between consecutive client submissions; `None` keeps the
    /// workload's own submit times.
    pub submit_interval: Option<u64>,
    /// Keep running after every transaction committed, until this time.
    pub run_until: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolConfig::default(),
            seed: 1,
            delay_min: 1_000,
            delay_max: 3_000,
            faults: Vec::new(),
            horizon: 30_000_000,
            client_timeout: 2_000_000,
            submit_interval: Some(1),
            run_until: None,
        }
    }
}

impl SimConfig {
    pub fn f(&self) -> u32 {
        (self.protocol.n.saturating_sub(1)) / 3
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.protocol.n;
        if n < 4 {
            return Err(SimError::InvalidConfig("need at least four replicas"));
        }
        let faulty: BTreeSet<ReplicaId> = self.faults.iter().map(|(r, _)| *r).collect();
        if faulty.len() > self.f() as usize {
            return Err(SimError::InvalidConfig("more than f faulty replicas"));
        }
        if faulty.iter().any(|r| r.0 >= n) {
            return Err(SimError::InvalidConfig("fault names an unknown replica"));
        }
        if self.delay_min > self.delay_max {
            return Err(SimError::InvalidConfig("minimum delay exceeds maximum"));
        }
        if self.protocol.batch == 0 || self.protocol.executors == 0 {
            return Err(SimError::InvalidConfig("batch and executors must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Event {
    Deliver { to: ReplicaId, msg: Msg },
    Timer { to: ReplicaId, timer: Timer },
    Submit { tx: usize },
    ClientTimeout { tx: usize, attempt: u32 },
    Resubmit { tx: usize },
}

#[derive(Clone, Debug, Default)]
pub struct ReplicaReport {
    pub id: ReplicaId,
    pub honest: bool,
    pub log: Vec<String>,
    pub commits: Vec<(DagId, Round, ShardId, Digest)>,
    pub applied: Vec<TxId>,
    pub proposed: Vec<(DagId, Round, BlockKind)>,
    pub transitions: Vec<(DagId, Round)>,
    pub state_digest: u64,
    pub invalid_blocks: u64,
    pub reexecutions: u64,
    pub skips: u64,
    pub converted: u64,
    pub deferred: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub submitted: usize,
    pub committed: usize,
    /// Transactions per simulated second.
    pub tps: f64,
    pub avg_latency_s: f64,
    pub reexec: u64,
    pub reconfigs: u64,
    pub invalid_blocks: u64,
    pub end_time: u64,
    pub retransmissions: u64,
    pub replicas: Vec<ReplicaReport>,
    /// Commit time of each transaction, by workload index.
    pub commit_times: Vec<Option<u64>>,
}

impl RunReport {
    pub fn honest(&self) -> impl Iterator<Item = &ReplicaReport> {
        self.replicas.iter().filter(|r| r.honest)
    }

    /// Text rendering covering everything observable about the run.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "submitted={} committed={} tps={:.3} avg_latency_s={:.6} reexec={} reconfigs={} invalid={} end={} retransmissions={}",
            self.submitted, self.committed, self.tps, self.avg_latency_s, self.reexec, self.reconfigs,
            self.invalid_blocks, self.end_time, self.retransmissions
        );
        for r in &self.replicas {
            let _ = writeln!(
                s,
                "replica={} honest={} commits={} applied={} state={:016x}",
                r.id.0,
                r.honest,
                r.commits.len(),
                r.applied.len(),
                r.state_digest
            );
            for l in &r.log {
                let _ = writeln!(s, "  {l}");
            }
        }
        s
    }

    /// Checks that every pair of honest replicas agrees: committed block
    /// sequences and applied transaction sequences are prefix-consistent,
    /// blocks of one proposer commit in round order, and nothing is applied
    /// twice.
    pub fn check_agreement(&self) -> Result<(), String> {
        let honest: Vec<&ReplicaReport> = self.honest().collect();
        for r in &honest {
            let mut last: BTreeMap<(DagId, ShardId), Round> = BTreeMap::new();
            for (d, round, p, _) in &r.commits {
                if let Some(prev) = last.insert((*d, *p), *round) {
                    if prev >= *round {
                        return Err(alloc::format!("replica {} commits {p} out of round order", r.id.0));
                    }
                }
            }
            let set: BTreeSet<&TxId> = r.applied.iter().collect();
            if set.len() != r.applied.len() {
                return Err(alloc::format!("replica {} applied a transaction twice", r.id.0));
            }
        }
        for i in 0..honest.len() {
            for j in i + 1..honest.len() {
                let (a, b) = (honest[i], honest[j]);
                let k = a.commits.len().min(b.commits.len());
                if a.commits[..k] != b.commits[..k] {
                    return Err(alloc::format!("replicas {} and {} diverge in committed blocks", a.id.0, b.id.0));
                }
                let k = a.applied.len().min(b.applied.len());
                if a.applied[..k] != b.applied[..k] {
                    return Err(alloc::format!("replicas {} and {} diverge in applied order", a.id.0, b.id.0));
                }
            }
        }
        Ok(())
    }
}

struct Client {
    tx: Arc<Transaction>,
    committed: Option<u64>,
}

pub struct Simulation {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    now: u64,
    replicas: Vec<Replica>,
    clients: Vec<Client>,
    by_id: BTreeMap<TxId, usize>,
    faults: BTreeMap<ReplicaId, Vec<Fault>>,
    outstanding: usize,
    retransmissions: u64,
    last_commit: u64,
}

impl Simulation {
    pub fn new(cfg: SimConfig, genesis: State, workload: Vec<Transaction>) -> Result<Self, SimError> {
        Self::with_backends(cfg, genesis, workload, |_| None)
    }

    /// Like [`Simulation::new`] with a custom execution backend per replica.
    pub fn with_backends(
        cfg: SimConfig,
        genesis: State,
        workload: Vec<Transaction>,
        mut backend: impl FnMut(ReplicaId) -> Option<Box<dyn ExecBackend + Send>>,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut faults: BTreeMap<ReplicaId, Vec<Fault>> = BTreeMap::new();
        for (r, f) in &cfg.faults {
            faults.entry(*r).or_default().push(f.clone());
        }
        let replicas = (0..cfg.protocol.n)
            .map(|i| {
                let id = ReplicaId(i);
                let m = faults.get(&id).and_then(|fs| {
                    fs.iter().find_map(|f| match f {
                        Fault::Behave(m) => Some(m.clone()),
                        _ => None,
                    })
                });
                let mut r = Replica::new(id, cfg.protocol.clone(), genesis.clone()).with_misbehavior(m);
                if let Some(b) = backend(id) {
                    r = r.with_backend(b);
                }
                r
            })
            .collect();
        let mut clients = Vec::with_capacity(workload.len());
        let mut by_id = BTreeMap::new();
        for (i, t) in workload.into_iter().enumerate() {
            let t = match cfg.submit_interval {
                Some(gap) => t.with_submit_time(i as u64 * gap),
                None => t,
            };
            by_id.insert(t.id, i);
            clients.push(Client { tx: Arc::new(t), committed: None });
        }
        let mut sim = Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            queue: BTreeMap::new(),
            seq: 0,
            now: 0,
            replicas,
            outstanding: clients.len(),
            clients,
            by_id,
            faults,
            retransmissions: 0,
            last_commit: 0,
        };
        for i in 0..sim.clients.len() {
            let at = sim.clients[i].tx.submitted_at;
            sim.push(at, Event::Submit { tx: i });
        }
        Ok(sim)
    }

    fn push(&mut self, at: u64, e: Event) {
        self.queue.insert((at, self.seq), e);
        self.seq += 1;
    }

    fn crashed(&self, r: ReplicaId, at: u64) -> bool {
        self.faults.get(&r).is_some_and(|fs| fs.iter().any(|f| matches!(f, Fault::Crash { at: c } if at >= *c)))
    }

    fn honest(&self, r: ReplicaId) -> bool {
        !self.faults.contains_key(&r)
    }

    fn link_delay(&mut self, from: ReplicaId) -> u64 {
        let extra: u64 = self
            .faults
            .get(&from)
            .map(|fs| fs.iter().map(|f| if let Fault::Delay { extra } = f { *extra } else { 0 }).sum())
            .unwrap_or(0);
        self.rng.random_range(self.cfg.delay_min..=self.cfg.delay_max) + extra
    }

    fn blocked(&self, from: ReplicaId, to: ReplicaId, msg: &Msg) -> bool {
        let Some(fs) = self.faults.get(&from) else { return false };
        let (dag, round) = match msg {
            Msg::Vertex(b) | Msg::Certificate(b) if b.author == from => (b.dag, b.round),
            _ => return false,
        };
        fs.iter().any(|f| match f {
            Fault::HaltProposals { dag: d, from_round, except } => {
                d.is_none_or(|d| d == dag) && round >= *from_round && !except.contains(&to)
            }
            _ => false,
        })
    }

    /// Assignment clients route by: the newest DAG any honest replica runs.
    fn routing(&self) -> &ShardAssignment {
        self.replicas
            .iter()
            .filter(|r| self.honest(r.id))
            .map(|r| &r.assignment)
            .max_by_key(|a| a.dag)
            .unwrap_or(&self.replicas[0].assignment)
    }

    fn send_to_owner(&mut self, i: usize) {
        let tx = self.clients[i].tx.clone();
        let owner = self.routing().owner(tx.home);
        let d = self.rng.random_range(self.cfg.delay_min..=self.cfg.delay_max);
        let at = self.now + d;
        self.push(at, Event::Deliver { to: owner, msg: Msg::Submit(tx) });
    }

    fn dispatch(&mut self, from: ReplicaId, outs: Vec<Out>) {
        for o in outs {
            match o {
                Out::Broadcast(m) => {
                    if self.crashed(from, self.now) {
                        continue;
                    }
                    for to in 0..self.cfg.protocol.n {
                        let to = ReplicaId(to);
                        if to == from || self.blocked(from, to, &m) {
                            continue;
                        }
                        let at = self.now + self.link_delay(from);
                        self.push(at, Event::Deliver { to, msg: m.clone() });
                    }
                }
                Out::Timer(at, timer) => self.push(at, Event::Timer { to: from, timer }),
                Out::Applied { tx, at } => {
                    if !self.honest(from) {
                        continue;
                    }
                    if let Some(&i) = self.by_id.get(&tx) {
                        if self.clients[i].committed.is_none() {
                            self.clients[i].committed = Some(at);
                            self.outstanding -= 1;
                            self.last_commit = self.last_commit.max(at);
                        }
                    }
                }
                Out::Discarded(txs) => {
                    for t in txs {
                        if let Some(&i) = self.by_id.get(&t) {
                            if self.clients[i].committed.is_none() {
                                let at = self.now + self.cfg.delay_min;
                                self.push(at, Event::Resubmit { tx: i });
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn run(mut self) -> RunReport {
        for i in 0..self.replicas.len() {
            let mut out = Vec::new();
            self.replicas[i].start(0, &mut out);
            self.dispatch(ReplicaId(i as u32), out);
        }
        while let Some(((at, _), ev)) = self.queue.pop_first() {
            if at > self.cfg.horizon {
                break;
            }
            if self.outstanding == 0 && self.cfg.run_until.is_none_or(|u| at > u) {
                break;
            }
            self.now = at;
            match ev {
                Event::Deliver { to, msg } => {
                    if self.crashed(to, at) {
                        continue;
                    }
                    let mut out = Vec::new();
                    self.replicas[to.0 as usize].on_message(at, msg, &mut out);
                    self.dispatch(to, out);
                }
                Event::Timer { to, timer } => {
                    if self.crashed(to, at) {
                        continue;
                    }
                    let mut out = Vec::new();
                    self.replicas[to.0 as usize].on_timer(at, timer, &mut out);
                    self.dispatch(to, out);
                }
                Event::Submit { tx } => {
                    self.send_to_owner(tx);
                    let t = at + self.cfg.client_timeout;
                    self.push(t, Event::ClientTimeout { tx, attempt: 1 });
                }
                Event::ClientTimeout { tx, attempt } => {
                    if self.clients[tx].committed.is_none() {
                        self.retransmissions += 1;
                        self.send_to_owner(tx);
                        let t = at + self.cfg.client_timeout;
                        self.push(t, Event::ClientTimeout { tx, attempt: attempt + 1 });
                    }
                }
                Event::Resubmit { tx } => {
                    if self.clients[tx].committed.is_none() {
                        self.retransmissions += 1;
                        self.send_to_owner(tx);
                    }
                }
            }
        }
        self.report()
    }

    fn report(self) -> RunReport {
        let committed: Vec<(u64, u64)> =
            self.clients.iter().filter_map(|c| c.committed.map(|t| (c.tx.submitted_at, t))).collect();
        let n = committed.len();
        let span = self.last_commit.max(1) as f64 / 1e6;
        let lat: f64 = committed.iter().map(|(s, c)| c.saturating_sub(*s) as f64 / 1e6).sum();
        let honest_ids: Vec<bool> = self.replicas.iter().map(|r| self.honest(r.id)).collect();
        let replicas: Vec<ReplicaReport> = self
            .replicas
            .iter()
            .zip(&honest_ids)
            .map(|(r, h)| ReplicaReport {
                id: r.id,
                honest: *h,
                log: r.log.lines().to_vec(),
                commits: r.commits.clone(),
                applied: r.applied.clone(),
                proposed: r.proposed.clone(),
                transitions: r.transitions.clone(),
                state_digest: r.ledger.state.digest(),
                invalid_blocks: r.stats.invalid_blocks,
                reexecutions: r.stats.reexecutions,
                skips: r.stats.skips,
                converted: r.stats.converted,
                deferred: r.stats.deferred,
            })
            .collect();
        let honest = || replicas.iter().filter(|r| r.honest);
        RunReport {
            submitted: self.clients.len(),
            committed: n,
            tps: if n == 0 { 0.0 } else { n as f64 / span },
            avg_latency_s: if n == 0 { 0.0 } else { lat / n as f64 },
            reexec: honest().map(|r| r.reexecutions).sum(),
            reconfigs: honest().map(|r| r.transitions.len() as u64).max().unwrap_or(0),
            invalid_blocks: honest().map(|r| r.invalid_blocks).max().unwrap_or(0),
            end_time: self.now,
            retransmissions: self.retransmissions,
            commit_times: self.clients.iter().map(|c| c.committed).collect(),
            replicas,
        }
    }
}

/// Convenience: validate, build and run.
pub fn run(cfg: SimConfig, genesis: State, workload: Vec<Transaction>) -> Result<RunReport, SimError> {
    Ok(Simulation::new(cfg, genesis, workload)?.run())
}

pub fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::Thunderbolt => "thunderbolt",
        Protocol::TuskSerial => "tusk-serial",
    }
}
