//! Reference serial executor. Everything else is checked against it.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{Key, Transaction, Value};
use crate::procedure::{run_to_end, Access};
use crate::schedule::{PreplayResult, ReadRecord, ReadSource, TxEffects};
use crate::state::StateView;

/// Runs `txs` one after another over `snapshot` and records what each one
/// saw, in the same shape preplay produces.
pub fn serial_schedule<'a, I>(txs: I, snapshot: &dyn StateView) -> PreplayResult
where
    I: IntoIterator<Item = &'a Transaction>,
{
    // key -> (value, position of last writer)
    let mut latest: BTreeMap<Key, (Value, u32)> = BTreeMap::new();
    let mut entries = Vec::new();
    for (pos, tx) in txs.into_iter().enumerate() {
        let mut reads: BTreeMap<Key, ReadRecord> = BTreeMap::new();
        let mut writes: BTreeMap<Key, Value> = BTreeMap::new();
        let result = run_to_end::<()>(&tx.procedure, |a| match a {
            Access::Read(k) => {
                if let Some(v) = writes.get(k) {
                    return Ok(*v);
                }
                if let Some(r) = reads.get(k) {
                    return Ok(r.value);
                }
                let rec = match latest.get(k) {
                    Some((v, p)) => ReadRecord { value: *v, source: ReadSource::Position(*p) },
                    None => ReadRecord { value: snapshot.get(k), source: ReadSource::Snapshot },
                };
                reads.insert(k.clone(), rec);
                Ok(rec.value)
            }
            Access::Write(k, v) => {
                writes.insert(k.clone(), v);
                Ok(0)
            }
        })
        .unwrap_or_default();
        for (k, v) in &writes {
            latest.insert(k.clone(), (*v, pos as u32));
        }
        entries.push(TxEffects { tx: tx.id, reads, writes, result });
    }
    PreplayResult { entries }
}

/// True when `result` lists exactly `txs` (in some order) and equals the
/// serial execution of that order.
pub fn is_serializable(result: &PreplayResult, txs: &[&Transaction], snapshot: &dyn StateView) -> bool {
    if result.len() != txs.len() {
        return false;
    }
    let by_id: BTreeMap<_, _> = txs.iter().map(|t| (t.id, *t)).collect();
    if by_id.len() != txs.len() {
        return false;
    }
    let mut ordered = Vec::with_capacity(txs.len());
    for id in result.order() {
        match by_id.get(&id) {
            Some(t) => ordered.push(*t),
            None => return false,
        }
    }
    if ordered.len() != by_id.len() {
        return false;
    }
    serial_schedule(ordered, snapshot) == *result
}
