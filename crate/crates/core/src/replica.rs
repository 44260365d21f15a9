//! One replica: proposer for its shard, voter, and executor of the
//! committed order.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::dag::{CommittedLeader, DagStore, VoteBook, VoteCollector};
use crate::executor::{preplay, ExecutorConfig, ShardScope};
use crate::log::EventLog;
use crate::log_event;
use crate::model::{
    Block, BlockKind, CrossEntry, DagId, Digest, Key, ReplicaId, Round, ShardAssignment, ShardId, SinglePayload,
    Transaction, TxClass, TxId, Value,
};
use crate::reconfig::{EndingDetector, ShiftReason, ShiftTracker};
use crate::shard::{plan_proposal, ApplyEvent, ConflictPolicy, ExecBackend, LeaderView, Ledger, Plan, SerialBackend};
use crate::state::{Overlay, State};
use crate::validate::cross_makespan;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// Preplayed single-shard batches plus ordered cross-shard execution.
    Thunderbolt,
    /// Everything ordered first, then executed serially.
    TuskSerial,
}

impl core::fmt::Display for Protocol {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Protocol::Thunderbolt => "thunderbolt",
            Protocol::TuskSerial => "tusk-serial",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    pub n: u32,
    /// Maximum transactions per block.
    pub batch: usize,
    pub executors: usize,
    /// Simulated microseconds per read or write.
    pub op_cost: u64,
    pub k: u64,
    pub k_rotate: u64,
    /// How long a proposer waits for the round leader's proposal.
    pub round_timeout: u64,
    pub policy: ConflictPolicy,
    pub exclusive_after: u32,
    pub leader_offset: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Thunderbolt,
            n: 4,
            batch: 300,
            executors: 8,
            op_cost: 10,
            k: 2,
            k_rotate: 1_000_000,
            round_timeout: 8_000,
            policy: ConflictPolicy::SkipUntilFinalized,
            exclusive_after: 10,
            leader_offset: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Msg {
    Vertex(Arc<Block>),
    Vote { dag: DagId, digest: Digest, voter: ReplicaId },
    Certificate(Arc<Block>),
    Submit(Arc<Transaction>),
}

impl Msg {
    pub fn dag(&self) -> Option<DagId> {
        match self {
            Msg::Vertex(b) | Msg::Certificate(b) => Some(b.dag),
            Msg::Vote { dag, .. } => Some(*dag),
            Msg::Submit(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    /// Preplay of the pending proposal finished.
    Emit(DagId, Round),
    LeaderTimeout(DagId, Round),
}

#[derive(Clone, Debug)]
pub enum Out {
    Broadcast(Msg),
    Timer(u64, Timer),
    /// A transaction took effect here at the given (modelled) time.
    Applied {
        tx: TxId,
        at: u64,
    },
    /// Transactions dropped at a DAG switch or in an invalid block of this
    /// replica; their clients must resubmit.
    Discarded(Vec<TxId>),
}

/// Deviations a faulty replica performs inside its own logic. Network-level
/// faults live in the simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Misbehavior {
    /// Drop client transactions from these clients (all if `None`).
    Censor(Option<BTreeSet<u32>>),
    /// Corrupt one result in every preplayed batch.
    Tamper,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReplicaStats {
    pub proposals: u64,
    pub preplayed: u64,
    pub reexecutions: u64,
    pub converted: u64,
    pub skips: u64,
    pub invalid_blocks: u64,
    pub deferred: u64,
}

pub struct Replica {
    pub id: ReplicaId,
    cfg: ProtocolConfig,
    pub assignment: ShardAssignment,
    pub dag: DagStore,
    next_round: Round,
    emitting: Option<Arc<Block>>,
    votes: VoteBook,
    collector: VoteCollector,
    mine: BTreeMap<Digest, Arc<Block>>,
    awaiting_parents: Vec<Arc<Block>>,
    proposals: BTreeMap<(Round, ShardId), Arc<Block>>,
    singles: VecDeque<Arc<Transaction>>,
    crosses: VecDeque<Arc<Transaction>>,
    known: BTreeSet<TxId>,
    /// Submissions for the shard this replica owns in the next DAG, sent by
    /// clients that already saw the switch.
    early: Vec<Arc<Transaction>>,
    inflight: BTreeMap<Digest, Vec<Arc<Transaction>>>,
    overlays: BTreeMap<Round, BTreeMap<Key, Value>>,
    pub ledger: Ledger,
    shift: ShiftTracker,
    ending: EndingDetector,
    leader_deadline: Option<Round>,
    timed_out: Option<Round>,
    preplay_free: u64,
    exec_free: u64,
    future: Vec<Msg>,
    misbehavior: Option<Misbehavior>,
    backend: Box<dyn ExecBackend + Send>,
    pub log: EventLog,
    pub stats: ReplicaStats,
    /// Committed blocks in order, across DAG instances.
    pub commits: Vec<(DagId, Round, ShardId, Digest)>,
    /// Transactions in the order they took effect here.
    pub applied: Vec<TxId>,
    /// (dag, round) of every proposal, in order.
    pub proposed: Vec<(DagId, Round, BlockKind)>,
    /// (new dag, ending round of the old one).
    pub transitions: Vec<(DagId, Round)>,
}

impl Replica {
    pub fn new(id: ReplicaId, cfg: ProtocolConfig, genesis: State) -> Self {
        let assignment = ShardAssignment::initial(cfg.n);
        let mut ledger = Ledger::new(cfg.n, genesis);
        ledger.serial = cfg.protocol == Protocol::TuskSerial;
        Self {
            id,
            dag: DagStore::new(assignment.dag, cfg.n, cfg.leader_offset),
            shift: ShiftTracker::new(cfg.n, cfg.k, cfg.k_rotate),
            assignment,
            cfg,
            next_round: 0,
            emitting: None,
            votes: VoteBook::default(),
            collector: VoteCollector::default(),
            mine: BTreeMap::new(),
            awaiting_parents: Vec::new(),
            proposals: BTreeMap::new(),
            singles: VecDeque::new(),
            crosses: VecDeque::new(),
            known: BTreeSet::new(),
            early: Vec::new(),
            inflight: BTreeMap::new(),
            overlays: BTreeMap::new(),
            ledger,
            ending: EndingDetector::default(),
            leader_deadline: None,
            timed_out: None,
            preplay_free: 0,
            exec_free: 0,
            future: Vec::new(),
            misbehavior: None,
            backend: Box::new(SerialBackend),
            log: EventLog::default(),
            stats: ReplicaStats::default(),
            commits: Vec::new(),
            applied: Vec::new(),
            proposed: Vec::new(),
            transitions: Vec::new(),
        }
    }

    pub fn with_misbehavior(mut self, m: Option<Misbehavior>) -> Self {
        self.misbehavior = m;
        self
    }

    pub fn with_backend(mut self, b: Box<dyn ExecBackend + Send>) -> Self {
        self.backend = b;
        self
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn shard(&self) -> ShardId {
        self.assignment.shard_of(self.id).expect("every replica owns a shard")
    }

    pub fn queued(&self) -> usize {
        self.singles.len() + self.crosses.len()
    }

    fn quorum(&self) -> usize {
        self.dag.quorum()
    }

    pub fn start(&mut self, now: u64, out: &mut Vec<Out>) {
        self.try_propose(now, out);
    }

    pub fn on_timer(&mut self, now: u64, t: Timer, out: &mut Vec<Out>) {
        match t {
            Timer::Emit(dag, round) => {
                let Some(b) = self.emitting.take() else { return };
                if b.dag != dag || b.round != round {
                    self.emitting = Some(b);
                    return;
                }
                self.emit(now, b, out);
            }
            Timer::LeaderTimeout(dag, round) => {
                if dag == self.dag.dag && self.next_round == round && self.emitting.is_none() {
                    self.timed_out = Some(round);
                    log_event!(
                        self.log,
                        now,
                        "TIMEOUT dag={} round={} leader={}",
                        dag.0,
                        round,
                        self.dag.leader_of(round).map_or(0, |s| s.0)
                    );
                }
            }
        }
        self.try_propose(now, out);
    }

    pub fn on_message(&mut self, now: u64, msg: Msg, out: &mut Vec<Out>) {
        if let Some(d) = msg.dag() {
            if d > self.dag.dag {
                self.future.push(msg);
                return;
            }
            if d < self.dag.dag {
                return;
            }
        }
        match msg {
            Msg::Submit(tx) => self.on_submit(now, tx),
            Msg::Vertex(b) => self.on_vertex(b, out),
            Msg::Vote { digest, voter, .. } => {
                if let Some(voters) = self.collector.add(digest, voter, self.quorum()) {
                    if let Some(b) = self.mine.remove(&digest) {
                        let _ = voters;
                        out.push(Out::Broadcast(Msg::Certificate(b.clone())));
                        self.on_certificate(now, b, out);
                    }
                }
            }
            Msg::Certificate(b) => self.on_certificate(now, b, out),
        }
        self.try_propose(now, out);
    }

    fn on_submit(&mut self, now: u64, tx: Arc<Transaction>) {
        if self.ledger.is_applied(tx.id) || self.known.contains(&tx.id) {
            return;
        }
        if let Some(Misbehavior::Censor(who)) = &self.misbehavior {
            if who.as_ref().is_none_or(|c| c.contains(&tx.client)) {
                log_event!(self.log, now, "CENSOR tx={}", tx.id);
                return;
            }
        }
        if tx.home != self.shard() {
            if self.assignment.next().shard_of(self.id) == Some(tx.home) {
                self.early.push(tx);
            }
            return;
        }
        self.known.insert(tx.id);
        if self.cfg.protocol == Protocol::Thunderbolt && tx.class() == TxClass::SingleShard {
            self.singles.push_back(tx);
        } else {
            self.crosses.push_back(tx);
        }
    }

    fn on_vertex(&mut self, b: Arc<Block>, out: &mut Vec<Out>) {
        if self.assignment.owner(b.proposer) != b.author {
            return;
        }
        self.shift.observe(&b);
        self.proposals.insert((b.round, b.proposer), b.clone());
        if self.dag.has_parents(&b) {
            self.vote(&b, out);
        } else {
            self.awaiting_parents.push(b);
        }
    }

    fn vote(&mut self, b: &Block, out: &mut Vec<Out>) {
        if b.round > 0 && b.parents.len() < self.quorum() {
            return;
        }
        if self.votes.vote(b) {
            let v = Msg::Vote { dag: b.dag, digest: b.digest, voter: self.id };
            if b.author == self.id {
                if let Some(voters) = self.collector.add(b.digest, self.id, self.quorum()) {
                    let _ = voters;
                }
            } else {
                out.push(Out::Broadcast(v));
            }
        }
    }

    fn on_certificate(&mut self, now: u64, b: Arc<Block>, out: &mut Vec<Out>) {
        for s in self.dag.insert_certified(b) {
            self.shift.observe(&s);
        }
        let waiting = core::mem::take(&mut self.awaiting_parents);
        for w in waiting {
            if self.dag.has_parents(&w) {
                self.vote(&w, out);
            } else {
                self.awaiting_parents.push(w);
            }
        }
        let committed = self.dag.try_commit();
        for leader in committed {
            if self.on_commit(now, &leader, out) {
                break;
            }
        }
    }

    /// Applies one committed leader. Returns true if it ended the DAG.
    fn on_commit(&mut self, now: u64, leader: &CommittedLeader, out: &mut Vec<Out>) -> bool {
        let dag = self.dag.dag;
        log_event!(
            self.log,
            now,
            "COMMIT dag={} leader={} shard={} blocks={}",
            dag.0,
            leader.round,
            leader.leader.0,
            leader.blocks.len()
        );
        for b in &leader.blocks {
            self.commits.push((dag, b.round, b.proposer, b.digest));
            if b.author == self.id {
                self.overlays.remove(&b.round);
                if let Some(txs) = self.inflight.remove(&b.digest) {
                    for t in txs {
                        self.known.remove(&t.id);
                    }
                }
            }
        }
        let (events, work) = self.ledger.apply_leader(leader, &*self.backend);
        let cost = match self.cfg.protocol {
            Protocol::Thunderbolt => {
                work.validated_ops * self.cfg.op_cost / self.cfg.executors.max(1) as u64
                    + cross_makespan(&work.cross, self.cfg.executors, self.cfg.op_cost)
            }
            Protocol::TuskSerial => {
                work.cross.iter().map(|t| t.procedure.op_count() as u64).sum::<u64>() * self.cfg.op_cost
            }
        };
        self.exec_free = self.exec_free.max(now) + cost;
        let at = self.exec_free;
        for e in events {
            match e {
                ApplyEvent::Single { txs, .. } => {
                    for (t, _) in txs {
                        self.applied.push(t);
                        out.push(Out::Applied { tx: t, at });
                    }
                }
                ApplyEvent::Cross { tx, .. } | ApplyEvent::CrossRejected { tx } => {
                    self.applied.push(tx);
                    out.push(Out::Applied { tx, at });
                }
                ApplyEvent::Invalid { proposer, round, txs, reason } => {
                    self.stats.invalid_blocks += 1;
                    log_event!(
                        self.log,
                        now,
                        "INVALID dag={} round={} shard={} txs={} reason={}",
                        dag.0,
                        round,
                        proposer.0,
                        txs.len(),
                        reason
                    );
                    if proposer == self.shard() {
                        out.push(Out::Discarded(txs));
                    }
                }
                ApplyEvent::Deferred { tx, missing } => {
                    self.stats.deferred += 1;
                    log_event!(
                        self.log,
                        now,
                        "DEFER dag={} leader={} tx={} missing={}",
                        dag.0,
                        leader.round,
                        tx,
                        missing.0
                    );
                }
                ApplyEvent::Duplicate { .. } => {}
            }
        }
        if let Some(end) = self.ending.on_commit(leader, &self.dag) {
            self.transition(now, end, out);
            return true;
        }
        false
    }

    fn transition(&mut self, now: u64, ending: Round, out: &mut Vec<Out>) {
        log_event!(self.log, now, "ENDING dag={} round={}", self.dag.dag.0, ending);
        let mut dropped: Vec<Arc<Transaction>> = Vec::new();
        dropped.extend(self.singles.drain(..));
        dropped.extend(self.crosses.drain(..));
        for (_, txs) in core::mem::take(&mut self.inflight) {
            dropped.extend(txs);
        }
        if let Some(b) = self.emitting.take() {
            dropped.extend(b.single_txs().iter().cloned());
            dropped.extend(b.cross.iter().map(|c| c.tx.clone()));
        }
        dropped.extend(self.ledger.discard_deferred().into_iter().map(|d| d.entry.tx));
        let mut seen = BTreeSet::new();
        dropped.retain(|t| !self.ledger.is_applied(t.id) && seen.insert(t.id));
        if !dropped.is_empty() {
            out.push(Out::Discarded(dropped.into_iter().map(|t| t.id).collect()));
        }
        self.known.clear();
        self.assignment = self.assignment.next();
        self.dag = DagStore::new(self.assignment.dag, self.cfg.n, self.cfg.leader_offset);
        self.shift = ShiftTracker::new(self.cfg.n, self.cfg.k, self.cfg.k_rotate);
        self.ending = EndingDetector::default();
        self.next_round = 0;
        self.mine.clear();
        self.awaiting_parents.clear();
        self.proposals.clear();
        self.overlays.clear();
        self.leader_deadline = None;
        self.timed_out = None;
        self.transitions.push((self.assignment.dag, ending));
        let owners: Vec<u32> = self.assignment.owners().iter().map(|r| r.0).collect();
        log_event!(self.log, now, "NEWDAG id={} ending={} assignment={:?}", self.assignment.dag.0, ending, owners);
        for tx in core::mem::take(&mut self.early) {
            self.on_submit(now, tx);
        }
        let future = core::mem::take(&mut self.future);
        for m in future {
            self.on_message(now, m, out);
        }
    }

    fn leader_proposal(&self, round: Round) -> Option<Arc<Block>> {
        let l = self.dag.leader_of(round)?;
        let b = self.dag.get(round, l).or_else(|| self.proposals.get(&(round, l)))?;
        self.dag.has_parents(b).then(|| b.clone())
    }

    fn take_batch(q: &mut VecDeque<Arc<Transaction>>, max: usize, ledger: &Ledger) -> Vec<Arc<Transaction>> {
        let mut out = Vec::new();
        while out.len() < max {
            let Some(t) = q.pop_front() else { break };
            if !ledger.is_applied(t.id) {
                out.push(t);
            }
        }
        out
    }

    fn try_propose(&mut self, now: u64, out: &mut Vec<Out>) {
        if self.emitting.is_some() {
            return;
        }
        let r = self.next_round;
        let parents = match self.dag.parents_for(r) {
            Ok(p) => p,
            Err(_) => return,
        };
        let shard = self.shard();
        let dag = self.dag.dag;
        if r > 0 && !parents.iter().any(|p| p.proposer == shard) {
            return;
        }
        let mut kind;
        let mut single = None;
        let mut cross: Vec<CrossEntry> = Vec::new();
        let mut ready_at = now;
        if let Some(reason) = self.shift.check(shard, r) {
            kind = BlockKind::Shift;
            match reason {
                ShiftReason::Silent(s) => {
                    log_event!(self.log, now, "SHIFT dag={} round={} shard={} reason=silent:{}", dag.0, r, shard.0, s.0)
                }
                ShiftReason::Period => {
                    log_event!(self.log, now, "SHIFT dag={} round={} shard={} reason=period", dag.0, r, shard.0)
                }
                ShiftReason::Echo => {
                    log_event!(self.log, now, "SHIFT dag={} round={} shard={} reason=echo", dag.0, r, shard.0)
                }
            }
        } else if self.cfg.protocol == Protocol::TuskSerial || self.singles.is_empty() {
            kind = BlockKind::CrossOnly;
            cross = Self::take_batch(&mut self.crosses, self.cfg.batch, &self.ledger)
                .into_iter()
                .map(CrossEntry::native)
                .collect();
        } else {
            let leader = self.dag.leader_of(r);
            let holder;
            let view = match leader {
                None => LeaderView::NoLeader,
                Some(l) if l == shard => LeaderView::Own,
                Some(_) => match self.leader_proposal(r) {
                    Some(b) => {
                        holder = b;
                        LeaderView::Arrived(&holder)
                    }
                    None if self.timed_out == Some(r) => LeaderView::TimedOut,
                    None => {
                        if self.leader_deadline != Some(r) {
                            self.leader_deadline = Some(r);
                            out.push(Out::Timer(now + self.cfg.round_timeout, Timer::LeaderTimeout(dag, r)));
                        }
                        return;
                    }
                },
            };
            let ledger = &self.ledger;
            let (plan, pending) =
                plan_proposal(&self.dag, shard, r, view, ledger.deferred(), &|t| ledger.is_applied(t), self.cfg.policy);
            kind = BlockKind::CrossOnly;
            match plan {
                Plan::Skip => {
                    kind = BlockKind::Skip;
                    self.stats.skips += 1;
                    let blocking: Vec<Round> = pending.by_leader.keys().copied().collect();
                    log_event!(
                        self.log,
                        now,
                        "SKIP dag={} round={} shard={} blocking={:?} deferred={}",
                        dag.0,
                        r,
                        shard.0,
                        blocking,
                        pending.deferred.len()
                    );
                }
                Plan::Convert(why) => {
                    let batch = Self::take_batch(&mut self.singles, self.cfg.batch, &self.ledger);
                    if !batch.is_empty() {
                        self.stats.converted += batch.len() as u64;
                        log_event!(
                            self.log,
                            now,
                            "CONVERT dag={} round={} shard={} txs={} rule={}",
                            dag.0,
                            r,
                            shard.0,
                            batch.len(),
                            why
                        );
                    }
                    cross.extend(batch.into_iter().map(|t| CrossEntry::converted(t, why)));
                }
                Plan::Preplay => {
                    let batch = Self::take_batch(&mut self.singles, self.cfg.batch, &self.ledger);
                    if !batch.is_empty() {
                        match self.preplay(shard, &batch) {
                            Some((payload, cost)) => {
                                kind = BlockKind::Normal;
                                self.preplay_free = self.preplay_free.max(now) + cost;
                                ready_at = self.preplay_free;
                                self.overlays.insert(r, payload.result.final_writes());
                                single = Some(payload);
                            }
                            None => {
                                log_event!(
                                    self.log,
                                    now,
                                    "DROP dag={} round={} shard={} txs={}",
                                    dag.0,
                                    r,
                                    shard.0,
                                    batch.len()
                                );
                            }
                        }
                    }
                }
            }
            if kind != BlockKind::Skip {
                let room = self.cfg.batch.saturating_sub(cross.len());
                cross.extend(
                    Self::take_batch(&mut self.crosses, room, &self.ledger).into_iter().map(CrossEntry::native),
                );
            }
        }
        let block = Arc::new(Block::new(dag, r, shard, self.id, kind, single, cross, parents));
        let txs: Vec<Arc<Transaction>> =
            block.single_txs().iter().cloned().chain(block.cross.iter().map(|c| c.tx.clone())).collect();
        if !txs.is_empty() {
            self.inflight.insert(block.digest, txs);
        }
        self.next_round = r + 1;
        self.shift.record_proposal();
        self.stats.proposals += 1;
        self.proposed.push((dag, r, kind));
        log_event!(
            self.log,
            now,
            "PROPOSE dag={} round={} shard={} kind={} singles={} cross={}",
            dag.0,
            r,
            shard.0,
            kind,
            block.single_txs().len(),
            block.cross.len()
        );
        if ready_at > now {
            self.emitting = Some(block);
            out.push(Out::Timer(ready_at, Timer::Emit(dag, r)));
        } else {
            self.emit(now, block, out);
            self.try_propose(now, out);
        }
    }

    fn preplay(&mut self, shard: ShardId, batch: &[Arc<Transaction>]) -> Option<(SinglePayload, u64)> {
        let mut top: BTreeMap<Key, Value> = BTreeMap::new();
        for w in self.overlays.values() {
            top.extend(w.iter().map(|(k, v)| (k.clone(), *v)));
        }
        let view = Overlay { base: &self.ledger.state, top: &top };
        let cfg = ExecutorConfig { workers: self.cfg.executors, op_cost: 1, exclusive_after: self.cfg.exclusive_after };
        let (mut result, stats) = preplay(batch, &view, cfg, Some(ShardScope { shard, n: self.cfg.n })).ok()?;
        self.stats.reexecutions += stats.reexecutions;
        self.stats.preplayed += batch.len() as u64;
        if self.misbehavior == Some(Misbehavior::Tamper) {
            if let Some(e) = result.entries.first_mut() {
                e.result = e.result.wrapping_add(1);
            }
        }
        let txs = crate::executor::committed_txs(batch, &result);
        Some((SinglePayload { txs, result }, stats.makespan * self.cfg.op_cost))
    }

    fn emit(&mut self, _now: u64, b: Arc<Block>, out: &mut Vec<Out>) {
        self.mine.insert(b.digest, b.clone());
        self.proposals.insert((b.round, b.proposer), b.clone());
        self.shift.observe(&b);
        out.push(Out::Broadcast(Msg::Vertex(b.clone())));
        self.vote(&b, out);
    }
}
