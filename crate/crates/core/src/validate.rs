//! Post-commit validation of preplayed batches and deterministic execution
//! of cross-shard transactions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::executor::ShardScope;
use crate::model::{assign_shard, CrossEntry, Key, SinglePayload, Transaction, TxId, Value};
use crate::procedure::{run_to_end, Access};
use crate::schedule::{ReadRecord, ReadSource, TxEffects};
use crate::state::{State, StateView};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InvalidReason {
    LengthMismatch,
    OrderMismatch { position: usize },
    DuplicateTx(TxId),
    WrongShard { tx: TxId, key: Key },
    UndeclaredKey { tx: TxId, key: Key },
    ReadMismatch { tx: TxId },
    WriteMismatch { tx: TxId },
    ResultMismatch { tx: TxId },
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidReason::LengthMismatch => write!(f, "schedule and batch differ in length"),
            InvalidReason::OrderMismatch { position } => {
                write!(f, "schedule position {position} names another transaction")
            }
            InvalidReason::DuplicateTx(t) => write!(f, "{t} scheduled twice"),
            InvalidReason::WrongShard { tx, key } => write!(f, "{tx} touches {key} on another shard"),
            InvalidReason::UndeclaredKey { tx, key } => write!(f, "{tx} touches undeclared {key}"),
            InvalidReason::ReadMismatch { tx } => write!(f, "{tx} read set differs"),
            InvalidReason::WriteMismatch { tx } => write!(f, "{tx} write set differs"),
            InvalidReason::ResultMismatch { tx } => write!(f, "{tx} result differs"),
        }
    }
}

/// Latest declared write before a position, per key.
pub struct WriteIndex {
    by_key: BTreeMap<Key, Vec<(u32, Value)>>,
}

impl WriteIndex {
    pub fn new(entries: &[TxEffects]) -> Self {
        let mut by_key: BTreeMap<Key, Vec<(u32, Value)>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            for (k, v) in &e.writes {
                by_key.entry(k.clone()).or_default().push((i as u32, *v));
            }
        }
        Self { by_key }
    }

    fn before(&self, key: &Key, pos: u32) -> Option<(u32, Value)> {
        let ws = self.by_key.get(key)?;
        let i = ws.partition_point(|(p, _)| *p < pos);
        i.checked_sub(1).map(|j| ws[j])
    }
}

/// Structural checks that need the whole batch.
pub fn check_structure(payload: &SinglePayload) -> Result<(), InvalidReason> {
    let entries = &payload.result.entries;
    if entries.len() != payload.txs.len() {
        return Err(InvalidReason::LengthMismatch);
    }
    let mut seen = BTreeSet::new();
    for (i, (t, e)) in payload.txs.iter().zip(entries).enumerate() {
        if t.id != e.tx {
            return Err(InvalidReason::OrderMismatch { position: i });
        }
        if !seen.insert(t.id) {
            return Err(InvalidReason::DuplicateTx(t.id));
        }
    }
    Ok(())
}

/// Re-executes the transaction at `pos` against `base` plus the declared
/// writes of earlier positions and compares with what was declared. Each
/// position can be checked independently of the others.
pub fn check_position(
    payload: &SinglePayload,
    index: &WriteIndex,
    pos: usize,
    scope: Option<ShardScope>,
    base: &dyn StateView,
) -> Result<(), InvalidReason> {
    let tx = &payload.txs[pos];
    let declared = &payload.result.entries[pos];
    let keys = tx.procedure.declared_keys();
    let mut reads: BTreeMap<Key, ReadRecord> = BTreeMap::new();
    let mut writes: BTreeMap<Key, Value> = BTreeMap::new();
    let result = run_to_end(&tx.procedure, |a| {
        let k = match &a {
            Access::Read(k) | Access::Write(k, _) => *k,
        };
        if !keys.contains(k) {
            return Err(InvalidReason::UndeclaredKey { tx: tx.id, key: k.clone() });
        }
        if let Some(s) = scope {
            if assign_shard(k, s.n) != s.shard {
                return Err(InvalidReason::WrongShard { tx: tx.id, key: k.clone() });
            }
        }
        match a {
            Access::Read(k) => {
                if let Some(v) = writes.get(k) {
                    return Ok(*v);
                }
                if let Some(r) = reads.get(k) {
                    return Ok(r.value);
                }
                let rec = match index.before(k, pos as u32) {
                    Some((p, v)) => ReadRecord { value: v, source: ReadSource::Position(p) },
                    None => ReadRecord { value: base.get(k), source: ReadSource::Snapshot },
                };
                reads.insert(k.clone(), rec);
                Ok(rec.value)
            }
            Access::Write(k, v) => {
                writes.insert(k.clone(), v);
                Ok(0)
            }
        }
    })?;
    if reads != declared.reads {
        return Err(InvalidReason::ReadMismatch { tx: tx.id });
    }
    if writes != declared.writes {
        return Err(InvalidReason::WriteMismatch { tx: tx.id });
    }
    if result != declared.result {
        return Err(InvalidReason::ResultMismatch { tx: tx.id });
    }
    Ok(())
}

/// Sequential validation of a whole payload against `base`.
pub fn validate_payload(
    payload: &SinglePayload,
    scope: Option<ShardScope>,
    base: &dyn StateView,
) -> Result<(), InvalidReason> {
    check_structure(payload)?;
    let index = WriteIndex::new(&payload.result.entries);
    (0..payload.txs.len()).try_for_each(|i| check_position(payload, &index, i, scope, base))
}

/// Outcome of one cross-shard transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CrossOutcome {
    Applied {
        result: Value,
        writes: BTreeMap<Key, Value>,
    },
    /// Touched a key outside its declared shards; no effects.
    Rejected {
        key: Key,
    },
}

/// Runs one cross-shard transaction against `state` without applying it.
pub fn run_cross(tx: &Transaction, n: u32, state: &dyn StateView) -> CrossOutcome {
    let mut writes: BTreeMap<Key, Value> = BTreeMap::new();
    let r = run_to_end(&tx.procedure, |a| match a {
        Access::Read(k) => {
            if !tx.touches_shard(assign_shard(k, n)) {
                return Err(k.clone());
            }
            Ok(writes.get(k).copied().unwrap_or_else(|| state.get(k)))
        }
        Access::Write(k, v) => {
            if !tx.touches_shard(assign_shard(k, n)) {
                return Err(k.clone());
            }
            writes.insert(k.clone(), v);
            Ok(0)
        }
    });
    match r {
        Ok(result) => CrossOutcome::Applied { result, writes },
        Err(key) => CrossOutcome::Rejected { key },
    }
}

/// Serial reference execution of cross-shard transactions in order.
pub fn execute_cross_serial(entries: &[CrossEntry], n: u32, state: &mut State) -> Vec<CrossOutcome> {
    entries
        .iter()
        .map(|e| {
            let out = run_cross(&e.tx, n, state);
            if let CrossOutcome::Applied { writes, .. } = &out {
                state.apply(writes);
            }
            out
        })
        .collect()
}

/// Wave of each transaction: one more than the latest earlier transaction
/// sharing a shard with it. Transactions of the same wave touch disjoint
/// shards and may run in parallel; running waves in order equals running the
/// whole list serially.
pub fn cross_waves(txs: &[Arc<Transaction>]) -> Vec<u32> {
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    txs.iter()
        .map(|t| {
            let w = t.sids.iter().filter_map(|s| last.get(&s.0)).max().map_or(0, |w| w + 1);
            for s in &t.sids {
                last.insert(s.0, w);
            }
            w
        })
        .collect()
}

/// Modelled time to run cross-shard transactions wave by wave on `workers`
/// executors, each operation costing `op_cost`.
pub fn cross_makespan(txs: &[Arc<Transaction>], workers: usize, op_cost: u64) -> u64 {
    let waves = cross_waves(txs);
    let mut per_wave: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (t, w) in txs.iter().zip(&waves) {
        let c = t.procedure.op_count() as u64 * op_cost;
        let e = per_wave.entry(*w).or_default();
        e.0 = e.0.max(c);
        e.1 += c;
    }
    let workers = workers.max(1) as u64;
    per_wave.values().map(|(longest, total)| (*longest).max(total.div_ceil(workers))).sum()
}

/// Single-field corruptions of a preplayed payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tamper {
    ReadValue,
    ReadSource,
    WriteValue,
    DropWrite,
    Result,
    SwapOrder,
    DropTx,
}

impl Tamper {
    pub const ALL: [Tamper; 7] = [
        Tamper::ReadValue,
        Tamper::ReadSource,
        Tamper::WriteValue,
        Tamper::DropWrite,
        Tamper::Result,
        Tamper::SwapOrder,
        Tamper::DropTx,
    ];
}

/// Applies `kind` to the first eligible position at or after `at` (mod the
/// batch length). `None` if no position qualifies.
pub fn tamper(payload: &SinglePayload, kind: Tamper, at: usize) -> Option<SinglePayload> {
    let mut p = payload.clone();
    let len = p.result.entries.len();
    if len == 0 {
        return None;
    }
    for step in 0..len {
        let i = (at + step) % len;
        let e = &mut p.result.entries[i];
        match kind {
            Tamper::ReadValue => {
                if let Some(r) = e.reads.values_mut().next() {
                    r.value = r.value.wrapping_add(1);
                    return Some(p);
                }
            }
            Tamper::ReadSource => {
                if let Some(r) = e.reads.values_mut().next() {
                    r.source = match r.source {
                        ReadSource::Snapshot => ReadSource::Position(i as u32),
                        ReadSource::Position(_) => ReadSource::Snapshot,
                    };
                    return Some(p);
                }
            }
            Tamper::WriteValue => {
                if let Some(v) = e.writes.values_mut().next() {
                    *v = v.wrapping_add(1);
                    return Some(p);
                }
            }
            Tamper::DropWrite => {
                if let Some(k) = e.writes.keys().next().cloned() {
                    e.writes.remove(&k);
                    return Some(p);
                }
            }
            Tamper::Result => {
                e.result = e.result.wrapping_add(1);
                return Some(p);
            }
            Tamper::SwapOrder => {
                if len > 1 {
                    let j = (i + 1) % len;
                    p.result.entries.swap(i, j);
                    return Some(p);
                }
                return None;
            }
            Tamper::DropTx => {
                p.result.entries.remove(i);
                return Some(p);
            }
        }
    }
    None
}
