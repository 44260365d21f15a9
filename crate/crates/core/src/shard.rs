//! Proposal rules for single- and cross-shard transactions, and the
//! deterministic application of committed leaders.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::dag::{CommittedLeader, DagStore};
use crate::executor::ShardScope;
use crate::model::{Block, BlockKind, Conversion, CrossEntry, Round, ShardId, SinglePayload, Transaction, TxId, Value};
use crate::state::State;
use crate::validate::{self, CrossOutcome, InvalidReason};

/// What a proposer does when earlier leaders still hold conflicting
/// cross-shard transactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConflictPolicy {
    /// Send the queued single-shard transactions down the cross-shard path.
    Convert,
    /// Propose empty skip blocks and keep the single-shard transactions
    /// queued until the blocking leaders are finalized.
    #[default]
    SkipUntilFinalized,
}

/// The current round's leader proposal as seen by a proposer.
#[derive(Clone, Copy, Debug)]
pub enum LeaderView<'a> {
    /// Even round: no leader.
    NoLeader,
    /// This proposer is the leader.
    Own,
    Arrived(&'a Block),
    TimedOut,
}

/// Unapplied cross-shard transactions touching one shard.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PendingCrossSet {
    /// Keyed by the round of the uncommitted leader whose history holds them.
    pub by_leader: BTreeMap<Round, Vec<TxId>>,
    /// Committed but deferred; they block until executed.
    pub deferred: Vec<TxId>,
}

impl PendingCrossSet {
    pub fn is_empty(&self) -> bool {
        self.by_leader.is_empty() && self.deferred.is_empty()
    }
}

/// Cross-shard transactions touching `shard` in the uncommitted history of
/// `v`. `v` itself need not be stored yet.
pub fn conflicting_in_history(dag: &DagStore, v: &Block, shard: ShardId, applied: &dyn Fn(TxId) -> bool) -> Vec<TxId> {
    let mut blocks = dag.history_where(v, |b| !dag.is_committed(b.digest));
    if !blocks.iter().any(|b| b.digest == v.digest) && !dag.is_committed(v.digest) {
        blocks.push(Arc::new(v.clone()));
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for b in &blocks {
        for c in &b.cross {
            if c.tx.touches_shard(shard) && !applied(c.tx.id) && seen.insert(c.tx.id) {
                out.push(c.tx.id);
            }
        }
    }
    out
}

/// Every pending cross-shard transaction that forbids preplay for `shard`
/// in `round`: those in the current leader's proposal history, those in
/// earlier uncommitted leaders, and deferred ones.
pub fn pending_crosses(
    dag: &DagStore,
    shard: ShardId,
    round: Round,
    leader: LeaderView<'_>,
    deferred: &[DeferredCross],
    applied: &dyn Fn(TxId) -> bool,
) -> PendingCrossSet {
    let mut set = PendingCrossSet::default();
    if let LeaderView::Arrived(v) = leader {
        let c = conflicting_in_history(dag, v, shard, applied);
        if !c.is_empty() {
            set.by_leader.insert(round, c);
        }
    }
    let first = dag.last_committed_leader().map_or(1, |l| l + 2);
    let mut q = first;
    while q < round {
        if let Some(v) = dag.leader_of(q).and_then(|l| dag.get(q, l)) {
            let c = conflicting_in_history(dag, v, shard, applied);
            if !c.is_empty() {
                set.by_leader.insert(q, c);
            }
        }
        q += 2;
    }
    set.deferred = deferred
        .iter()
        .filter(|d| d.entry.tx.touches_shard(shard) && !applied(d.entry.tx.id))
        .map(|d| d.entry.tx.id)
        .collect();
    set
}

/// Preplay may resume once every blocking leader is finalized: 2f+1 blocks
/// of the following round are stored and f+1 of them reference it. Deferred
/// transactions always block.
pub fn recover_preplay(dag: &DagStore, pending: &PendingCrossSet) -> bool {
    pending.deferred.is_empty() && pending.by_leader.keys().all(|q| dag.leader_finalized(*q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plan {
    Preplay,
    Convert(Conversion),
    Skip,
}

/// Decides how a proposer treats its queued single-shard transactions.
pub fn plan_proposal(
    dag: &DagStore,
    shard: ShardId,
    round: Round,
    leader: LeaderView<'_>,
    deferred: &[DeferredCross],
    applied: &dyn Fn(TxId) -> bool,
    policy: ConflictPolicy,
) -> (Plan, PendingCrossSet) {
    let pending = pending_crosses(dag, shard, round, leader, deferred, applied);
    if matches!(leader, LeaderView::TimedOut) {
        return (Plan::Convert(Conversion::LeaderTimeout), pending);
    }
    if pending.is_empty() || recover_preplay(dag, &pending) {
        return (Plan::Preplay, pending);
    }
    let plan = match policy {
        ConflictPolicy::SkipUntilFinalized => Plan::Skip,
        ConflictPolicy::Convert if pending.by_leader.contains_key(&round) => Plan::Convert(Conversion::LeaderConflict),
        ConflictPolicy::Convert => Plan::Convert(Conversion::PriorLeaderConflict),
    };
    (plan, pending)
}

/// A committed cross-shard transaction waiting for a later leader.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeferredCross {
    pub entry: CrossEntry,
    pub origin: ShardId,
    pub round: Round,
    /// Round of the leader that first committed it.
    pub leader: Round,
}

/// What applying one committed leader did, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApplyEvent {
    Single { proposer: ShardId, round: Round, txs: Vec<(TxId, Value)> },
    Invalid { proposer: ShardId, round: Round, txs: Vec<TxId>, reason: InvalidReason },
    Cross { tx: TxId, result: Value, conversion: Option<Conversion> },
    CrossRejected { tx: TxId },
    Deferred { tx: TxId, missing: ShardId },
    Duplicate { tx: TxId },
}

/// Validation and cross-shard execution, possibly parallel.
pub trait ExecBackend {
    fn validate(&self, payload: &SinglePayload, scope: ShardScope, base: &State) -> Result<(), InvalidReason>;
    fn run_cross(&self, entries: &[CrossEntry], n: u32, state: &mut State) -> Vec<CrossOutcome>;
}

/// Single-threaded backend.
#[derive(Clone, Copy, Debug, Default)]
pub struct SerialBackend;

impl ExecBackend for SerialBackend {
    fn validate(&self, payload: &SinglePayload, scope: ShardScope, base: &State) -> Result<(), InvalidReason> {
        validate::validate_payload(payload, Some(scope), base)
    }

    fn run_cross(&self, entries: &[CrossEntry], n: u32, state: &mut State) -> Vec<CrossOutcome> {
        validate::execute_cross_serial(entries, n, state)
    }
}

/// Modelled work of one leader application.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ApplyWork {
    pub validated_ops: u64,
    pub cross: Vec<Arc<Transaction>>,
}

/// Replicated execution state of one replica.
#[derive(Clone, Debug)]
pub struct Ledger {
    pub n: u32,
    pub state: State,
    applied: BTreeSet<TxId>,
    deferred: Vec<DeferredCross>,
    /// (round, proposer) of every block in an applied leader history.
    seen: BTreeSet<(Round, ShardId)>,
    /// Skip the deferral rule and execute everything serially.
    pub serial: bool,
}

impl Ledger {
    pub fn new(n: u32, state: State) -> Self {
        Self { n, state, applied: BTreeSet::new(), deferred: Vec::new(), seen: BTreeSet::new(), serial: false }
    }

    pub fn is_applied(&self, t: TxId) -> bool {
        self.applied.contains(&t)
    }

    pub fn applied_count(&self) -> usize {
        self.applied.len()
    }

    pub fn deferred(&self) -> &[DeferredCross] {
        &self.deferred
    }

    /// Drops deferred transactions and per-DAG bookkeeping (used at a DAG
    /// switch).
    pub fn discard_deferred(&mut self) -> Vec<DeferredCross> {
        self.seen.clear();
        core::mem::take(&mut self.deferred)
    }

    /// Applies one committed leader: validated single-shard batches first,
    /// then cross-shard transactions in order. A cross-shard transaction
    /// touching shard A waits until A's block from the round before its
    /// committing leader has been part of an applied history; later ones
    /// from the same origin wait behind it.
    pub fn apply_leader(
        &mut self,
        leader: &CommittedLeader,
        backend: &dyn ExecBackend,
    ) -> (Vec<ApplyEvent>, ApplyWork) {
        let mut events = Vec::new();
        let mut work = ApplyWork::default();
        self.seen.extend(leader.blocks.iter().map(|b| (b.round, b.proposer)));
        if !self.serial {
            for b in &leader.blocks {
                let Some(p) = &b.single else { continue };
                if b.kind != BlockKind::Normal || p.txs.is_empty() {
                    continue;
                }
                let scope = ShardScope { shard: b.proposer, n: self.n };
                let ids: Vec<TxId> = p.txs.iter().map(|t| t.id).collect();
                work.validated_ops += p.txs.iter().map(|t| t.procedure.op_count() as u64).sum::<u64>();
                let verdict = match ids.iter().find(|t| self.applied.contains(t)) {
                    Some(t) => Err(InvalidReason::DuplicateTx(*t)),
                    None => backend.validate(p, scope, &self.state),
                };
                match verdict {
                    Ok(()) => {
                        self.state.apply(&p.result.final_writes());
                        self.applied.extend(ids.iter().copied());
                        events.push(ApplyEvent::Single {
                            proposer: b.proposer,
                            round: b.round,
                            txs: p.result.entries.iter().map(|e| (e.tx, e.result)).collect(),
                        });
                    }
                    Err(reason) => {
                        events.push(ApplyEvent::Invalid { proposer: b.proposer, round: b.round, txs: ids, reason })
                    }
                }
            }
        }

        let mut candidates: Vec<DeferredCross> = core::mem::take(&mut self.deferred);
        for b in &leader.blocks {
            for c in &b.cross {
                candidates.push(DeferredCross {
                    entry: c.clone(),
                    origin: b.proposer,
                    round: b.round,
                    leader: leader.round,
                });
            }
        }
        let mut blocked: BTreeSet<ShardId> = BTreeSet::new();
        let mut run: Vec<CrossEntry> = Vec::new();
        let mut slots: Vec<Result<usize, ApplyEvent>> = Vec::new();
        let mut seen = BTreeSet::new();
        for d in candidates {
            let id = d.entry.tx.id;
            if self.applied.contains(&id) || !seen.insert(id) {
                slots.push(Err(ApplyEvent::Duplicate { tx: id }));
                continue;
            }
            if !self.serial {
                let missing = if blocked.contains(&d.origin) {
                    Some(d.origin)
                } else {
                    let need = d.leader.saturating_sub(1);
                    d.entry.tx.sids.iter().copied().find(|a| d.leader > 0 && !self.seen.contains(&(need, *a)))
                };
                if let Some(a) = missing {
                    blocked.insert(d.origin);
                    slots.push(Err(ApplyEvent::Deferred { tx: id, missing: a }));
                    self.deferred.push(d);
                    continue;
                }
            }
            slots.push(Ok(run.len()));
            run.push(d.entry);
        }
        let mut outs = Vec::new();
        if !run.is_empty() {
            work.cross = run.iter().map(|e| e.tx.clone()).collect();
            outs = backend.run_cross(&run, self.n, &mut self.state);
        }
        for slot in slots {
            let i = match slot {
                Ok(i) => i,
                Err(e) => {
                    events.push(e);
                    continue;
                }
            };
            let e = &run[i];
            self.applied.insert(e.tx.id);
            events.push(match &outs[i] {
                CrossOutcome::Applied { result, .. } => {
                    ApplyEvent::Cross { tx: e.tx.id, result: *result, conversion: e.conversion }
                }
                CrossOutcome::Rejected { .. } => ApplyEvent::CrossRejected { tx: e.tx.id },
            });
        }
        (events, work)
    }
}
