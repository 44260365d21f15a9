//! Serial schedules produced by preplay and checked by validators.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::hash::Hasher64;
use crate::model::{Key, TxId, Value};

/// Where a recorded read got its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReadSource {
    /// The snapshot the batch ran against.
    Snapshot,
    /// The transaction at this position of the same schedule.
    Position(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadRecord {
    pub value: Value,
    pub source: ReadSource,
}

/// What one transaction observed and produced. Only the first read of each
/// key is recorded; reads after an own write are not.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TxEffects {
    pub tx: TxId,
    pub reads: BTreeMap<Key, ReadRecord>,
    pub writes: BTreeMap<Key, Value>,
    pub result: Value,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreplayResult {
    pub entries: Vec<TxEffects>,
}

impl PreplayResult {
    pub fn order(&self) -> impl Iterator<Item = TxId> + '_ {
        self.entries.iter().map(|e| e.tx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Last value written to each key, in schedule order.
    pub fn final_writes(&self) -> BTreeMap<Key, Value> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            for (k, v) in &e.writes {
                out.insert(k.clone(), *v);
            }
        }
        out
    }

    pub fn digest(&self) -> u64 {
        let mut h = Hasher64::new();
        for e in &self.entries {
            h.u64(e.tx.0).i64(e.result);
            for (k, r) in &e.reads {
                h.bytes(k.as_bytes()).i64(r.value);
                match r.source {
                    ReadSource::Snapshot => h.u64(u64::MAX),
                    ReadSource::Position(p) => h.u64(u64::from(p)),
                };
            }
            h.u64(0xffff);
            for (k, v) in &e.writes {
                h.bytes(k.as_bytes()).i64(*v);
            }
        }
        h.finish()
    }
}
