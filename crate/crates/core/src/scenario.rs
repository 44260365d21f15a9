//! Fixed scenarios with known outcomes.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dag::DagStore;
use crate::executor::{committed_txs, preplay, ExecutorConfig, ShardScope};
use crate::model::{
    Block, BlockKind, CertRef, CrossEntry, DagId, ReplicaId, Round, ShardId, SinglePayload, Transaction, TxClass, TxId,
};
use crate::procedure::{checking, AccountId, Procedure, ScriptOp, WriteExpr};
use crate::replica::Misbehavior;
use crate::shard::{plan_proposal, ApplyEvent, ConflictPolicy, LeaderView, Ledger, Plan, SerialBackend};
use crate::sim::{Fault, SimConfig};
use crate::state::State;
use crate::workload::{account_shard, generate, initial_state, SmallBankSpec};

/// Four replicas, K=2, K'=6. Replica 0 (shard 0) censors every client
/// transaction and, from round 2 of the first DAG, its proposals reach only
/// replica 3, so they never gather a quorum of votes.
pub fn rotation_config(seed: u64) -> SimConfig {
    let mut cfg = SimConfig { seed, ..SimConfig::default() };
    cfg.protocol.n = 4;
    cfg.protocol.k = 2;
    cfg.protocol.k_rotate = 6;
    cfg.protocol.batch = 20;
    cfg.faults = vec![
        (ReplicaId(0), Fault::HaltProposals { dag: Some(DagId(1)), from_round: 2, except: vec![ReplicaId(3)] }),
        (ReplicaId(0), Fault::Behave(Misbehavior::Censor(None))),
    ];
    cfg.submit_interval = Some(200);
    cfg.client_timeout = 100_000;
    cfg.horizon = 5_000_000;
    cfg
}

pub fn rotation_workload(seed: u64) -> (State, Vec<Transaction>) {
    let spec = SmallBankSpec { accounts: 64, count: 40, shards: 4, seed, cross_pct: 20.0, ..SmallBankSpec::default() };
    (initial_state(spec.accounts), generate(&spec))
}

/// A transaction of a scripted layout. `sids[0]` is its home shard; the
/// transaction joins that proposer's queue at `round`.
#[derive(Clone, Debug)]
pub struct ScriptTx {
    pub name: &'static str,
    pub round: Round,
    pub sids: Vec<u32>,
}

/// Hand-placed proposal rounds over one shared DAG view. Every block of a
/// round is certified before the next round starts.
#[derive(Clone, Debug)]
pub struct RuleScript {
    pub n: u32,
    pub last_round: Round,
    pub policy: ConflictPolicy,
    pub txs: Vec<ScriptTx>,
    /// `(round, shard)`: that block arrives too late to be a parent of other
    /// shards' blocks in the next round.
    pub late: Vec<(Round, u32)>,
    /// `(round, shard)`: that proposer gives up waiting for the leader.
    pub timeouts: Vec<(Round, u32)>,
}

fn script_tx(t: &ScriptTx, n: u32, used: &mut BTreeSet<AccountId>, seq: u64) -> Transaction {
    let mut ops = Vec::new();
    for s in &t.sids {
        let a = (0..).find(|a| account_shard(*a, n).0 == *s && !used.contains(a)).expect("accounts cover every shard");
        used.insert(a);
        ops.push(ScriptOp::Read(checking(a)));
        ops.push(ScriptOp::Write(checking(a), WriteExpr::ReadsPlus(1)));
    }
    Transaction::new(0, seq, Procedure::Script(ops), n).expect("non-empty")
}

struct Proposer {
    singles: VecDeque<Arc<Transaction>>,
    crosses: VecDeque<Arc<Transaction>>,
}

/// Runs `script` and returns the rule firings and application events in
/// order.
pub fn run_rule_script(script: &RuleScript) -> Vec<String> {
    let n = script.n;
    let mut used = BTreeSet::new();
    let mut names: BTreeMap<TxId, &'static str> = BTreeMap::new();
    let mut arrivals: BTreeMap<Round, Vec<Arc<Transaction>>> = BTreeMap::new();
    let mut state = State::default();
    for (i, t) in script.txs.iter().enumerate() {
        let tx = script_tx(t, n, &mut used, i as u64);
        names.insert(tx.id, t.name);
        arrivals.entry(t.round).or_default().push(Arc::new(tx));
    }
    for a in &used {
        state.set(checking(*a), 100);
    }
    let name = |t: TxId| names.get(&t).copied().unwrap_or("?");
    let mut props: Vec<Proposer> =
        (0..n).map(|_| Proposer { singles: VecDeque::new(), crosses: VecDeque::new() }).collect();
    let mut dag = DagStore::new(DagId(1), n, 0);
    let mut ledger = Ledger::new(n, state);
    let mut log = Vec::new();
    for r in 0..=script.last_round {
        for t in arrivals.remove(&r).unwrap_or_default() {
            let p = &mut props[t.home.0 as usize];
            if t.class() == TxClass::SingleShard {
                p.singles.push_back(t);
            } else {
                p.crosses.push_back(t);
            }
        }
        let leader = dag.leader_of(r);
        let mut order: Vec<ShardId> = leader.into_iter().collect();
        order.extend((0..n).map(ShardId).filter(|s| Some(*s) != leader));
        let mut blocks: Vec<Arc<Block>> = Vec::new();
        for s in order {
            let parents: Vec<CertRef> = if r == 0 {
                Vec::new()
            } else {
                dag.round_blocks(r - 1)
                    .filter(|b| b.proposer == s || !script.late.contains(&(r - 1, b.proposer.0)))
                    .map(|b| b.cert_ref())
                    .collect()
            };
            let p = &mut props[s.0 as usize];
            let mut kind = BlockKind::CrossOnly;
            let mut single = None;
            let mut cross: Vec<CrossEntry> = Vec::new();
            if !p.singles.is_empty() {
                let lb = leader.and_then(|l| blocks.iter().find(|b| b.proposer == l).cloned());
                let view = match leader {
                    None => LeaderView::NoLeader,
                    Some(l) if l == s => LeaderView::Own,
                    Some(_) if script.timeouts.contains(&(r, s.0)) => LeaderView::TimedOut,
                    Some(_) => LeaderView::Arrived(lb.as_deref().expect("leader proposes first")),
                };
                let (plan, pending) =
                    plan_proposal(&dag, s, r, view, ledger.deferred(), &|t| ledger.is_applied(t), script.policy);
                match plan {
                    Plan::Skip => {
                        kind = BlockKind::Skip;
                        let blocking: Vec<Round> = pending.by_leader.keys().copied().collect();
                        let deferred: Vec<&str> = pending.deferred.iter().map(|t| name(*t)).collect();
                        log.push(format!("r{r} s{} SKIP blocking={blocking:?} deferred={deferred:?}", s.0));
                    }
                    Plan::Convert(why) => {
                        for t in p.singles.drain(..) {
                            log.push(format!("r{r} s{} CONVERT {} {why}", s.0, name(t.id)));
                            cross.push(CrossEntry::converted(t, why));
                        }
                    }
                    Plan::Preplay => {
                        let batch: Vec<Arc<Transaction>> = p.singles.drain(..).collect();
                        let cfg = ExecutorConfig { workers: 1, ..ExecutorConfig::default() };
                        let (result, _) = preplay(&batch, &ledger.state, cfg, Some(ShardScope { shard: s, n }))
                            .expect("scripted batches stay on their shard");
                        let txs = committed_txs(&batch, &result);
                        let listed: Vec<&str> = txs.iter().map(|t| name(t.id)).collect();
                        log.push(format!("r{r} s{} PREPLAY {}", s.0, listed.join(" ")));
                        kind = BlockKind::Normal;
                        single = Some(SinglePayload { txs, result });
                    }
                }
            }
            if kind != BlockKind::Skip {
                cross.extend(p.crosses.drain(..).map(CrossEntry::native));
            }
            blocks.push(Arc::new(Block::new(DagId(1), r, s, ReplicaId(s.0), kind, single, cross, parents)));
        }
        for b in blocks {
            dag.insert_certified(b);
        }
        for l in dag.try_commit() {
            log.push(format!("COMMIT leader={} blocks={}", l.round, l.blocks.len()));
            let (events, _) = ledger.apply_leader(&l, &SerialBackend);
            for e in events {
                match e {
                    ApplyEvent::Single { txs, .. } => {
                        let listed: Vec<&str> = txs.iter().map(|(t, _)| name(*t)).collect();
                        log.push(format!("SINGLE {}", listed.join(" ")));
                    }
                    ApplyEvent::Invalid { proposer, round, reason, .. } => {
                        log.push(format!("INVALID r{round} s{} {reason}", proposer.0));
                    }
                    ApplyEvent::Cross { tx, conversion, .. } => match conversion {
                        Some(c) => log.push(format!("CROSS {} {c}", name(tx))),
                        None => log.push(format!("CROSS {}", name(tx))),
                    },
                    ApplyEvent::CrossRejected { tx } => log.push(format!("REJECT {}", name(tx))),
                    ApplyEvent::Deferred { tx, missing } => {
                        log.push(format!("DEFER {} missing=s{}", name(tx), missing.0));
                    }
                    ApplyEvent::Duplicate { tx } => log.push(format!("DUPLICATE {}", name(tx))),
                }
            }
        }
    }
    log
}

/// Cross-shard transaction C0 sits in the round-3 leader's block and
/// touches shards 1-3; C2 touches shards 3 and 0 while shard 0's round-4
/// block is late; shard 1 times out on the round-7 leader.
pub fn conversion_script(policy: ConflictPolicy) -> RuleScript {
    let tx = |name, round, sids: &[u32]| ScriptTx { name, round, sids: sids.to_vec() };
    RuleScript {
        n: 4,
        last_round: 8,
        policy,
        txs: vec![
            tx("C0", 3, &[1, 2, 3]),
            tx("S10", 3, &[2]),
            tx("S13", 4, &[2]),
            tx("S14", 4, &[3]),
            tx("C2", 4, &[3, 0]),
            tx("S17", 5, &[2]),
            tx("S22", 6, &[3]),
            tx("S4", 7, &[1]),
        ],
        late: vec![(4, 0)],
        timeouts: vec![(7, 1)],
    }
}
