//! Shared vocabulary: keys, transactions, blocks, certificates and shard
//! ownership.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::ModelError;
use crate::hash::{hash64, Hasher64};
use crate::procedure::Procedure;
use crate::schedule::PreplayResult;

pub type Value = i64;
pub type Round = u64;
pub type Digest = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ShardId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ReplicaId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DagId(pub u64);

/// Transaction digest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TxId(pub u64);

macro_rules! display_prefixed {
    ($t:ty, $p:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($p, "{}"), self.0)
            }
        }
    };
}
display_prefixed!(ShardId, "S");
display_prefixed!(ReplicaId, "R");
display_prefixed!(DagId, "D");

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{:016x}", self.0)
    }
}

/// Opaque byte-string key, cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(Arc<[u8]>);

impl Key {
    pub fn new(bytes: &[u8]) -> Self {
        Key(Arc::from(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// The part of the key that decides its shard: everything before the
    /// first `/`. Keys sharing a prefix always live on the same shard.
    pub fn routing_prefix(&self) -> &[u8] {
        match self.0.iter().position(|b| *b == b'/') {
            Some(i) => &self.0[..i],
            None => &self.0,
        }
    }
}

impl From<&str> for Key {
    fn from(s: &str) -> Self {
        Key::new(s.as_bytes())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for chunk in self.0.utf8_chunks() {
            f.write_str(chunk.valid())?;
            for b in chunk.invalid() {
                write!(f, "\\x{b:02x}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

pub fn assign_shard(key: &Key, n: u32) -> ShardId {
    assert!(n > 0, "shard count must be positive");
    ShardId((hash64(key.routing_prefix()) % u64::from(n)) as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TxClass {
    SingleShard,
    CrossShard,
}

/// Sorted, deduplicated shard set of `keys`.
pub fn shard_set<'a, I>(keys: I, n: u32) -> Result<Vec<ShardId>, ModelError>
where
    I: IntoIterator<Item = &'a Key>,
{
    if n == 0 {
        return Err(ModelError::NoShards);
    }
    let set: BTreeSet<ShardId> = keys.into_iter().map(|k| assign_shard(k, n)).collect();
    Ok(set.into_iter().collect())
}

pub fn classify(sids: &[ShardId]) -> TxClass {
    if sids.len() == 1 {
        TxClass::SingleShard
    } else {
        TxClass::CrossShard
    }
}

/// A client request. Immutable once created; conversion to the cross-shard
/// path wraps it in a [`CrossEntry`] instead of changing it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub id: TxId,
    pub client: u32,
    pub seq: u64,
    pub procedure: Procedure,
    pub sids: Vec<ShardId>,
    /// Shard of the first key the procedure touches; clients send the
    /// transaction to this shard's proposer.
    pub home: ShardId,
    pub submitted_at: u64,
}

impl Transaction {
    pub fn new(client: u32, seq: u64, procedure: Procedure, n: u32) -> Result<Self, ModelError> {
        let keys = procedure.declared_keys();
        let mut h = Hasher64::new();
        h.u64(u64::from(client)).u64(seq);
        procedure.digest_into(&mut h);
        let id = TxId(h.finish());
        if keys.is_empty() {
            return Err(ModelError::EmptyKeySet(id));
        }
        let sids = shard_set(keys.iter(), n)?;
        let home = assign_shard(&procedure.first_key().expect("non-empty key set"), n);
        Ok(Self { id, client, seq, procedure, sids, home, submitted_at: 0 })
    }

    pub fn with_submit_time(mut self, t: u64) -> Self {
        self.submitted_at = t;
        self
    }

    pub fn class(&self) -> TxClass {
        classify(&self.sids)
    }

    pub fn touches_shard(&self, s: ShardId) -> bool {
        self.sids.binary_search(&s).is_ok()
    }
}

/// Why a single-shard transaction travelled on the cross-shard path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Conversion {
    /// Leader history already holds a conflicting cross-shard transaction.
    LeaderConflict,
    /// An earlier uncommitted leader holds a conflicting cross-shard transaction.
    PriorLeaderConflict,
    /// The leader's proposal did not arrive in time.
    LeaderTimeout,
}

impl fmt::Display for Conversion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conversion::LeaderConflict => "leader-conflict",
            Conversion::PriorLeaderConflict => "prior-leader-conflict",
            Conversion::LeaderTimeout => "leader-timeout",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossEntry {
    pub tx: Arc<Transaction>,
    pub conversion: Option<Conversion>,
}

impl CrossEntry {
    pub fn native(tx: Arc<Transaction>) -> Self {
        Self { tx, conversion: None }
    }

    pub fn converted(tx: Arc<Transaction>, why: Conversion) -> Self {
        Self { tx, conversion: Some(why) }
    }
}

/// Preplayed single-shard batch: the transactions in schedule order plus the
/// schedule itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinglePayload {
    pub txs: Vec<Arc<Transaction>>,
    pub result: PreplayResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum BlockKind {
    Normal,
    CrossOnly,
    Skip,
    Shift,
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockKind::Normal => "normal",
            BlockKind::CrossOnly => "cross-only",
            BlockKind::Skip => "skip",
            BlockKind::Shift => "shift",
        })
    }
}

/// Reference to a certified vertex of the previous round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CertRef {
    pub proposer: ShardId,
    pub digest: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub dag: DagId,
    pub round: Round,
    pub proposer: ShardId,
    pub author: ReplicaId,
    pub kind: BlockKind,
    pub single: Option<SinglePayload>,
    pub cross: Vec<CrossEntry>,
    pub parents: Vec<CertRef>,
    pub digest: Digest,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dag: DagId,
        round: Round,
        proposer: ShardId,
        author: ReplicaId,
        kind: BlockKind,
        single: Option<SinglePayload>,
        cross: Vec<CrossEntry>,
        mut parents: Vec<CertRef>,
    ) -> Self {
        parents.sort();
        let mut h = Hasher64::new();
        h.u64(dag.0).u64(round).u64(u64::from(proposer.0)).u64(u64::from(author.0));
        h.u64(kind as u64);
        if let Some(p) = &single {
            for t in &p.txs {
                h.u64(t.id.0);
            }
            h.u64(p.result.digest());
        }
        for c in &cross {
            h.u64(c.tx.id.0).u64(c.conversion.map_or(0, |k| k as u64 + 1));
        }
        for p in &parents {
            h.u64(u64::from(p.proposer.0)).u64(p.digest);
        }
        let digest = h.finish();
        Self { dag, round, proposer, author, kind, single, cross, parents, digest }
    }

    pub fn cert_ref(&self) -> CertRef {
        CertRef { proposer: self.proposer, digest: self.digest }
    }

    pub fn has_parent(&self, s: ShardId) -> bool {
        self.parents.iter().any(|p| p.proposer == s)
    }

    pub fn single_txs(&self) -> &[Arc<Transaction>] {
        self.single.as_ref().map_or(&[], |p| &p.txs)
    }

    pub fn tx_count(&self) -> usize {
        self.single_txs().len() + self.cross.len()
    }
}

/// Proof that 2f+1 replicas stored a vertex. Signatures are abstracted into
/// the voter set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub dag: DagId,
    pub round: Round,
    pub proposer: ShardId,
    pub digest: Digest,
    pub voters: BTreeSet<ReplicaId>,
}

impl Certificate {
    pub fn is_quorum(&self, f: usize) -> bool {
        self.voters.len() > 2 * f
    }
}

/// Shard to replica mapping of one DAG instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardAssignment {
    pub dag: DagId,
    owners: Vec<ReplicaId>,
}

impl ShardAssignment {
    /// Shard `i` proposed by replica `i`.
    pub fn initial(n: u32) -> Self {
        Self { dag: DagId(1), owners: (0..n).map(ReplicaId).collect() }
    }

    pub fn from_owners(dag: DagId, owners: Vec<ReplicaId>) -> Result<Self, ModelError> {
        if owners.is_empty() {
            return Err(ModelError::NoShards);
        }
        Ok(Self { dag, owners })
    }

    pub fn n(&self) -> u32 {
        self.owners.len() as u32
    }

    pub fn owner(&self, s: ShardId) -> ReplicaId {
        self.owners[s.0 as usize]
    }

    pub fn shard_of(&self, r: ReplicaId) -> Option<ShardId> {
        self.owners.iter().position(|o| *o == r).map(|i| ShardId(i as u32))
    }

    /// Every shard moves to the next replica; the DAG id increments.
    pub fn next(&self) -> Self {
        let n = self.n();
        Self { dag: DagId(self.dag.0 + 1), owners: self.owners.iter().map(|r| ReplicaId((r.0 + 1) % n)).collect() }
    }

    pub fn owners(&self) -> &[ReplicaId] {
        &self.owners
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedure::{checking, savings};

    #[test]
    fn routing_prefix_keeps_accounts_together() {
        for n in [1, 3, 4, 16] {
            for a in 0..200 {
                assert_eq!(assign_shard(&checking(a), n), assign_shard(&savings(a), n));
            }
        }
        assert_eq!(Key::from("a/b/c").routing_prefix(), b"a");
        assert_eq!(Key::from("plain").routing_prefix(), b"plain");
    }

    #[test]
    fn assignment_is_deterministic_and_in_range() {
        for a in 0..500u64 {
            let s = assign_shard(&checking(a), 7);
            assert!(s.0 < 7);
            assert_eq!(s, assign_shard(&checking(a), 7));
        }
    }

    #[test]
    fn classify_by_shard_count() {
        assert_eq!(classify(&[ShardId(2)]), TxClass::SingleShard);
        assert_eq!(classify(&[ShardId(0), ShardId(2)]), TxClass::CrossShard);
    }

    #[test]
    fn rotation_moves_every_shard() {
        let a = ShardAssignment::initial(4);
        let b = a.next();
        assert_eq!(b.dag, DagId(2));
        assert_eq!(b.owners(), &[ReplicaId(1), ReplicaId(2), ReplicaId(3), ReplicaId(0)]);
        assert_eq!(b.shard_of(ReplicaId(0)), Some(ShardId(3)));
        let mut c = a.clone();
        for _ in 0..4 {
            c = c.next();
        }
        assert_eq!(c.owners(), a.owners());
    }

    #[test]
    fn key_display_escapes_binary() {
        let k = Key::new(&[b'a', 0xff, b'b']);
        assert_eq!(alloc::format!("{k}"), "a\\xffb");
    }
}
