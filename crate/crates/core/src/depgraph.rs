//! Dependency-graph concurrency control.
//!
//! Every transaction is a node; an edge `a -> b` on key `k` means `a` must
//! come before `b` in the serial order. The graph stays acyclic: an operation
//! that would close a cycle is answered by an abort instead. A transaction
//! commits once it has finished and every predecessor has committed, so the
//! commit order is a topological order of the graph.
//!
//! The root node (the snapshot) precedes everything and its edges are never
//! stored. Committed nodes precede every live node. Only edges that are
//! actually required are added, and they are always added directly, never
//! left implied by a path, because aborts remove nodes from paths.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::CcError;
use crate::model::{Key, TxId, Value};
use crate::schedule::{PreplayResult, ReadRecord, ReadSource, TxEffects};
use crate::state::StateView;

type NodeId = u32;

/// Deliberately broken mode for mutation testing: reads add only the edge
/// from their source and ignore other writers of the key.
#[cfg(feature = "mutation")]
pub static SKIP_READ_PATHS: core::sync::atomic::AtomicBool = core::sync::atomic::AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Src {
    Root,
    Node(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxStatus {
    Executing,
    ReadyToCommit,
    Committed,
    Aborted,
}

/// Answer to an operation. `Aborted` means the caller's transaction was
/// aborted and must start over with [`DepGraph::begin`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access<T> {
    Done(T),
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalizeOutcome {
    Committed(u32),
    Waiting,
    Aborted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortCause {
    /// No serializable source exists for a read.
    ReadConflict,
    /// A first write cannot be placed after an existing reader.
    WriteConflict,
    /// A writer changed a value other transactions already read.
    StaleRead,
}

/// One abort decision and everything it removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbortEvent {
    pub trigger: TxId,
    pub cause: AbortCause,
    pub removed: BTreeSet<TxId>,
}

/// A removed transaction whose owner is not going to notice by itself: it
/// had already finished and waits for nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Requeue(pub TxId);

#[derive(Clone, Debug, Default)]
struct Record {
    first_read: Option<(Value, Src)>,
    last_write: Option<Value>,
}

#[derive(Clone, Debug)]
struct Node {
    tx: TxId,
    seq: u64,
    ready: bool,
    order: Option<u32>,
    result: Value,
    records: BTreeMap<Key, Record>,
    out: BTreeSet<(NodeId, Key)>,
    inn: BTreeSet<(NodeId, Key)>,
}

impl Node {
    fn writes(&self) -> bool {
        self.records.values().any(|r| r.last_write.is_some())
    }
}

#[derive(Clone, Debug, Default)]
struct KeyIndex {
    readers: BTreeSet<NodeId>,
    writers: BTreeSet<NodeId>,
}

/// Edge endpoint in exported graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum End {
    Root,
    Tx(TxId),
}

pub struct DepGraph<'s> {
    snapshot: &'s dyn StateView,
    nodes: BTreeMap<NodeId, Node>,
    by_tx: BTreeMap<TxId, NodeId>,
    aborted: BTreeSet<TxId>,
    keys: BTreeMap<Key, KeyIndex>,
    committed: Vec<NodeId>,
    next_id: NodeId,
    next_seq: u64,
    reexecutions: u64,
    requeue: Vec<Requeue>,
    abort_log: Vec<AbortEvent>,
}

impl<'s> DepGraph<'s> {
    pub fn new(snapshot: &'s dyn StateView) -> Self {
        Self {
            snapshot,
            nodes: BTreeMap::new(),
            by_tx: BTreeMap::new(),
            aborted: BTreeSet::new(),
            keys: BTreeMap::new(),
            committed: Vec::new(),
            next_id: 0,
            next_seq: 0,
            reexecutions: 0,
            requeue: Vec::new(),
            abort_log: Vec::new(),
        }
    }

    // ---- public operations ------------------------------------------------

    /// Registers `tx` (again, after an abort).
    pub fn begin(&mut self, tx: TxId) -> Result<(), CcError> {
        if self.by_tx.contains_key(&tx) {
            return Err(CcError::DuplicateTx(tx));
        }
        self.aborted.remove(&tx);
        let id = self.next_id;
        self.next_id += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.nodes.insert(
            id,
            Node {
                tx,
                seq,
                ready: false,
                order: None,
                result: 0,
                records: BTreeMap::new(),
                out: BTreeSet::new(),
                inn: BTreeSet::new(),
            },
        );
        self.by_tx.insert(tx, id);
        Ok(())
    }

    pub fn read(&mut self, tx: TxId, key: &Key) -> Result<Access<Value>, CcError> {
        let t = match self.executing(tx)? {
            Some(t) => t,
            None => return Ok(Access::Aborted),
        };
        if let Some(r) = self.nodes[&t].records.get(key) {
            let v = r.last_write.or(r.first_read.map(|x| x.0)).unwrap_or(0);
            return Ok(Access::Done(v));
        }
        for s in self.source_candidates(t, key) {
            let mut added = Vec::new();
            if self.place_read(t, s, key, &mut added) {
                let v = match s {
                    Src::Root => self.snapshot.get(key),
                    Src::Node(n) => self.nodes[&n].records[key].last_write.unwrap_or(0),
                };
                self.node_mut(t).records.insert(key.clone(), Record { first_read: Some((v, s)), last_write: None });
                self.keys.entry(key.clone()).or_default().readers.insert(t);
                return Ok(Access::Done(v));
            }
            self.rollback(&added);
        }
        self.conflict(t, AbortCause::ReadConflict);
        Ok(Access::Aborted)
    }

    pub fn write(&mut self, tx: TxId, key: &Key, v: Value) -> Result<Access<()>, CcError> {
        let t = match self.executing(tx)? {
            Some(t) => t,
            None => return Ok(Access::Aborted),
        };
        let prev = self.nodes[&t].records.get(key).and_then(|r| r.last_write);
        if let Some(old) = prev {
            if old != v {
                let stale: BTreeSet<NodeId> = self
                    .keys
                    .get(key)
                    .map(|ix| {
                        ix.readers
                            .iter()
                            .copied()
                            .filter(|r| self.nodes[r].records[key].first_read.map(|x| x.1) == Some(Src::Node(t)))
                            .collect()
                    })
                    .unwrap_or_default();
                if !stale.is_empty() {
                    let set = self.closure(stale);
                    self.remove(t, AbortCause::StaleRead, set);
                }
            }
            self.node_mut(t).records.get_mut(key).expect("record").last_write = Some(v);
            return Ok(Access::Done(()));
        }
        let mut added = Vec::new();
        if !self.place_write(t, key, &mut added) {
            self.rollback(&added);
            self.conflict(t, AbortCause::WriteConflict);
            return Ok(Access::Aborted);
        }
        self.node_mut(t).records.entry(key.clone()).or_default().last_write = Some(v);
        self.keys.entry(key.clone()).or_default().writers.insert(t);
        Ok(Access::Done(()))
    }

    /// Marks `tx` as finished with procedure result `result`.
    pub fn finalize(&mut self, tx: TxId, result: Value) -> Result<FinalizeOutcome, CcError> {
        let t = match self.executing(tx)? {
            Some(t) => t,
            None => return Ok(FinalizeOutcome::Aborted),
        };
        {
            let n = self.node_mut(t);
            n.ready = true;
            n.result = result;
        }
        self.commit_ready();
        Ok(match self.nodes[&t].order {
            Some(i) => FinalizeOutcome::Committed(i),
            None => FinalizeOutcome::Waiting,
        })
    }

    pub fn status(&self, tx: TxId) -> Option<TxStatus> {
        if self.aborted.contains(&tx) {
            return Some(TxStatus::Aborted);
        }
        let n = &self.nodes[self.by_tx.get(&tx)?];
        Some(if n.order.is_some() {
            TxStatus::Committed
        } else if n.ready {
            TxStatus::ReadyToCommit
        } else {
            TxStatus::Executing
        })
    }

    /// Transactions removed while waiting to commit; their owners must
    /// resubmit them.
    pub fn take_requeues(&mut self) -> Vec<Requeue> {
        core::mem::take(&mut self.requeue)
    }

    pub fn abort_log(&self) -> &[AbortEvent] {
        &self.abort_log
    }

    /// Number of transaction attempts thrown away so far.
    pub fn reexecutions(&self) -> u64 {
        self.reexecutions
    }

    pub fn committed_order(&self) -> Vec<TxId> {
        self.committed.iter().map(|n| self.nodes[n].tx).collect()
    }

    pub fn committed_count(&self) -> usize {
        self.committed.len()
    }

    pub fn live_count(&self) -> usize {
        self.nodes.len() - self.committed.len()
    }

    /// Serial schedule of the committed transactions. Fails while any
    /// transaction is still live.
    pub fn extract_schedule(&self) -> Result<PreplayResult, CcError> {
        let live = self.live_count();
        if live > 0 {
            return Err(CcError::LiveTransactions(live));
        }
        let mut entries = Vec::with_capacity(self.committed.len());
        for id in &self.committed {
            let n = &self.nodes[id];
            let mut reads = BTreeMap::new();
            let mut writes = BTreeMap::new();
            for (k, r) in &n.records {
                if let Some((v, s)) = r.first_read {
                    let source = match s {
                        Src::Root => ReadSource::Snapshot,
                        Src::Node(x) => ReadSource::Position(self.nodes[&x].order.expect("committed")),
                    };
                    reads.insert(k.clone(), ReadRecord { value: v, source });
                }
                if let Some(v) = r.last_write {
                    writes.insert(k.clone(), v);
                }
            }
            entries.push(TxEffects { tx: n.tx, reads, writes, result: n.result });
        }
        Ok(PreplayResult { entries })
    }

    /// Stored edges plus the implicit root edges (a root edge on `k` into
    /// every node that touched `k` and has no stored incoming edge on `k`).
    pub fn edges(&self) -> Vec<(End, End, Key)> {
        let mut out = Vec::new();
        for n in self.nodes.values() {
            for k in n.records.keys() {
                if !n.inn.iter().any(|(_, ek)| ek == k) {
                    out.push((End::Root, End::Tx(n.tx), k.clone()));
                }
            }
            for (to, k) in &n.out {
                out.push((End::Tx(n.tx), End::Tx(self.nodes[to].tx), k.clone()));
            }
        }
        out.sort();
        out
    }

    /// Text dump, one edge per line.
    pub fn export(&self, name: impl Fn(TxId) -> String) -> String {
        let mut s = String::new();
        for (a, b, k) in self.edges() {
            let show = |e: End| match e {
                End::Root => String::from("ROOT"),
                End::Tx(t) => name(t),
            };
            let _ = writeln!(s, "{} -> {} [{}]", show(a), show(b), k);
        }
        s
    }

    /// Full structural check; used by tests and debug assertions.
    pub fn check_invariants(&self) -> Result<(), String> {
        // edge symmetry and no edge into a committed node from a live node
        for (id, n) in &self.nodes {
            for (to, k) in &n.out {
                let m = self.nodes.get(to).ok_or("dangling edge")?;
                if !m.inn.contains(&(*id, k.clone())) {
                    return Err(alloc::format!("edge {id}->{to} missing reverse"));
                }
                if m.order.is_some() && n.order.is_none() {
                    return Err(alloc::format!("live {id} points at committed {to}"));
                }
                if let (Some(a), Some(b)) = (n.order, m.order) {
                    if a >= b {
                        return Err(alloc::format!("commit order violates edge {id}->{to}"));
                    }
                }
            }
        }
        // acyclic over live nodes
        let live: Vec<NodeId> = self.nodes.iter().filter(|(_, n)| n.order.is_none()).map(|(i, _)| *i).collect();
        let mut indeg: BTreeMap<NodeId, usize> = live.iter().map(|i| (*i, 0)).collect();
        for i in &live {
            for (to, _) in &self.nodes[i].out {
                *indeg.get_mut(to).ok_or("live edge to non-live")? += 1;
            }
        }
        let mut stack: Vec<NodeId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(i, _)| *i).collect();
        let mut seen = 0;
        while let Some(i) = stack.pop() {
            seen += 1;
            let outs: BTreeSet<NodeId> = self.nodes[&i].out.iter().map(|(t, _)| *t).collect();
            for to in outs {
                let mult = self.nodes[&i].out.iter().filter(|(t, _)| *t == to).count();
                let d = indeg.get_mut(&to).expect("live");
                *d -= mult;
                if *d == 0 {
                    stack.push(to);
                }
            }
        }
        if seen != live.len() {
            return Err(String::from("cycle among live transactions"));
        }
        // every read is still justified by its source
        for (v, n) in &self.nodes {
            for (k, r) in &n.records {
                let Some((_, src)) = r.first_read else { continue };
                let writers = self.keys.get(k).map(|ix| ix.writers.clone()).unwrap_or_default();
                for w in writers {
                    if w == *v || Src::Node(w) == src {
                        continue;
                    }
                    let ok = match src {
                        Src::Root => self.precedes(*v, w),
                        Src::Node(u) => self.precedes(w, u) || self.precedes(*v, w),
                    };
                    if !ok {
                        return Err(alloc::format!("read of {k} by {v} not protected from writer {w}"));
                    }
                }
            }
        }
        Ok(())
    }

    // ---- internals --------------------------------------------------------

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes.get_mut(&id).expect("node")
    }

    /// Node of a transaction that may still issue operations; `None` if it
    /// has been aborted.
    fn executing(&self, tx: TxId) -> Result<Option<NodeId>, CcError> {
        if self.aborted.contains(&tx) {
            return Ok(None);
        }
        let id = *self.by_tx.get(&tx).ok_or(CcError::UnknownTx(tx))?;
        if self.nodes[&id].ready {
            return Err(CcError::NotExecuting(tx));
        }
        Ok(Some(id))
    }

    fn is_live(&self, n: NodeId) -> bool {
        self.nodes[&n].order.is_none()
    }

    /// `a` is ordered before `b` (or is `b`).
    fn precedes(&self, a: NodeId, b: NodeId) -> bool {
        if a == b {
            return true;
        }
        match (self.nodes[&a].order, self.nodes[&b].order) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => {
                let mut seen = BTreeSet::new();
                let mut stack = alloc::vec![a];
                while let Some(x) = stack.pop() {
                    for (y, _) in &self.nodes[&x].out {
                        if *y == b {
                            return true;
                        }
                        if seen.insert(*y) {
                            stack.push(*y);
                        }
                    }
                }
                false
            }
        }
    }

    fn add_edge(&mut self, a: NodeId, b: NodeId, k: &Key, added: &mut Vec<(NodeId, NodeId, Key)>) {
        if self.node_mut(a).out.insert((b, k.clone())) {
            self.node_mut(b).inn.insert((a, k.clone()));
            added.push((a, b, k.clone()));
        }
    }

    fn rollback(&mut self, added: &[(NodeId, NodeId, Key)]) {
        for (a, b, k) in added.iter().rev() {
            self.node_mut(*a).out.remove(&(*b, k.clone()));
            self.node_mut(*b).inn.remove(&(*a, k.clone()));
        }
    }

    fn writers_of(&self, key: &Key, except: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .keys
            .get(key)
            .map(|ix| ix.writers.iter().copied().filter(|w| *w != except).collect())
            .unwrap_or_default();
        v.sort_by_key(|w| core::cmp::Reverse(self.nodes[w].seq));
        v
    }

    /// Sources to try for a read of `key` by `t`, best first: the latest
    /// writer, then the writers it was ordered after on `key`, then the
    /// snapshot.
    fn source_candidates(&self, t: NodeId, key: &Key) -> Vec<Src> {
        let writers = self.writers_of(key, t);
        let latest = writers
            .iter()
            .copied()
            .filter(|w| !writers.iter().any(|o| o != w && self.precedes(*w, *o)))
            .max_by_key(|w| self.nodes[w].seq);
        let mut out = Vec::new();
        if let Some(l) = latest {
            let mut seen = BTreeSet::new();
            let mut queue = alloc::collections::VecDeque::from([l]);
            seen.insert(l);
            while let Some(u) = queue.pop_front() {
                out.push(Src::Node(u));
                for p in self.write_ancestors(u, key) {
                    if seen.insert(p) {
                        queue.push_back(p);
                    }
                }
            }
        }
        out.push(Src::Root);
        out
    }

    /// Writers of `key` that `u` is directly ordered after on `key`.
    fn write_ancestors(&self, u: NodeId, key: &Key) -> Vec<NodeId> {
        let n = &self.nodes[&u];
        if n.order.is_some() {
            // older committed writers face the same constraints and lose
            return Vec::new();
        }
        let mut v: Vec<NodeId> = n
            .inn
            .iter()
            .filter(|(p, k)| k == key && self.nodes[p].records.get(key).is_some_and(|r| r.last_write.is_some()))
            .map(|(p, _)| *p)
            .collect();
        v.sort_by_key(|w| core::cmp::Reverse(self.nodes[w].seq));
        v.dedup();
        v
    }

    /// Adds the edges needed for `t` to read `key` from `s`, or reports that
    /// this would break serializability.
    fn place_read(&mut self, t: NodeId, s: Src, key: &Key, added: &mut Vec<(NodeId, NodeId, Key)>) -> bool {
        if let Src::Node(sn) = s {
            if self.is_live(sn) && self.precedes(t, sn) {
                return false;
            }
            self.add_edge(sn, t, key, added);
        }
        #[cfg(feature = "mutation")]
        if SKIP_READ_PATHS.load(core::sync::atomic::Ordering::Relaxed) {
            return true;
        }
        for w in self.writers_of(key, t) {
            if Src::Node(w) == s {
                continue;
            }
            match s {
                Src::Node(sn) if self.precedes(w, sn) => {
                    if self.is_live(w) && self.is_live(sn) {
                        self.add_edge(w, sn, key, added);
                    }
                }
                Src::Root => {
                    if !self.is_live(w) || self.precedes(w, t) {
                        return false;
                    }
                    self.add_edge(t, w, key, added);
                }
                Src::Node(sn) if self.precedes(sn, w) => {
                    if !self.is_live(w) || self.precedes(w, t) {
                        return false;
                    }
                    self.add_edge(t, w, key, added);
                }
                Src::Node(sn) => {
                    // unordered with the source
                    if self.is_live(sn) {
                        self.add_edge(w, sn, key, added);
                    } else {
                        if !self.is_live(w) || self.precedes(w, t) {
                            return false;
                        }
                        self.add_edge(t, w, key, added);
                    }
                }
            }
        }
        true
    }

    /// Adds the edges needed for `t`'s first write of `key`: every other
    /// reader of `key` must end up either before `t` or after its source.
    fn place_write(&mut self, t: NodeId, key: &Key, added: &mut Vec<(NodeId, NodeId, Key)>) -> bool {
        let mut readers: Vec<NodeId> =
            self.keys.get(key).map(|ix| ix.readers.iter().copied().filter(|r| *r != t).collect()).unwrap_or_default();
        readers.sort_by_key(|r| core::cmp::Reverse(self.nodes[r].seq));
        for r in readers {
            let src = self.nodes[&r].records[key].first_read.map(|x| x.1).unwrap_or(Src::Root);
            if self.precedes(r, t) {
                if self.is_live(r) {
                    self.add_edge(r, t, key, added);
                }
                continue;
            }
            if let Src::Node(s) = src {
                if self.precedes(t, s) {
                    self.add_edge(t, s, key, added);
                    continue;
                }
            }
            if !self.precedes(t, r) {
                self.add_edge(r, t, key, added);
                continue;
            }
            match src {
                Src::Node(s) if self.is_live(s) && !self.precedes(s, t) => {
                    self.add_edge(t, s, key, added);
                }
                _ => return false,
            }
        }
        true
    }

    /// `start` plus every live transaction that read a value written by a
    /// member, transitively. Transactions merely ordered after a member keep
    /// their reads and stay.
    fn closure(&self, start: BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let mut set = start;
        let mut stack: Vec<NodeId> = set.iter().copied().collect();
        while let Some(x) = stack.pop() {
            for (k, r) in &self.nodes[&x].records {
                if r.last_write.is_none() {
                    continue;
                }
                let Some(ix) = self.keys.get(k) else { continue };
                for y in &ix.readers {
                    let from_x = self.nodes[y].records[k].first_read.map(|f| f.1) == Some(Src::Node(x));
                    if from_x && self.is_live(*y) && set.insert(*y) {
                        stack.push(*y);
                    }
                }
            }
        }
        set
    }

    /// `t` cannot proceed. A transaction that wrote nothing takes nobody with
    /// it; otherwise everything that read its writes goes too.
    fn conflict(&mut self, t: NodeId, cause: AbortCause) {
        let set = if self.nodes[&t].writes() { self.closure(BTreeSet::from([t])) } else { BTreeSet::from([t]) };
        self.remove(t, cause, set);
    }

    fn remove(&mut self, trigger: NodeId, cause: AbortCause, set: BTreeSet<NodeId>) {
        let trigger_tx = self.nodes[&trigger].tx;
        let mut removed = BTreeSet::new();
        let mut victims: Vec<&Node> = set.iter().map(|i| &self.nodes[i]).collect();
        victims.sort_by_key(|n| n.seq);
        let mut requeue: Vec<TxId> = Vec::new();
        for n in &victims {
            removed.insert(n.tx);
            if n.ready {
                requeue.push(n.tx);
            }
        }
        for id in &set {
            let n = self.nodes.remove(id).expect("victim");
            for (to, k) in &n.out {
                if let Some(m) = self.nodes.get_mut(to) {
                    m.inn.remove(&(*id, k.clone()));
                }
            }
            for (from, k) in &n.inn {
                if let Some(m) = self.nodes.get_mut(from) {
                    m.out.remove(&(*id, k.clone()));
                }
            }
            for k in n.records.keys() {
                if let Some(ix) = self.keys.get_mut(k) {
                    ix.readers.remove(id);
                    ix.writers.remove(id);
                }
            }
            self.by_tx.remove(&n.tx);
            if !n.ready {
                self.aborted.insert(n.tx);
            }
        }
        self.reexecutions += set.len() as u64;
        self.requeue.extend(requeue.into_iter().map(Requeue));
        self.abort_log.push(AbortEvent { trigger: trigger_tx, cause, removed });
        self.commit_ready();
    }

    /// Commits every finished transaction whose predecessors have all
    /// committed, lowest sequence number first.
    fn commit_ready(&mut self) {
        loop {
            let next = self
                .nodes
                .iter()
                .filter(|(_, n)| n.ready && n.order.is_none())
                .filter(|(_, n)| n.inn.iter().all(|(p, _)| self.nodes[p].order.is_some()))
                .min_by_key(|(_, n)| n.seq)
                .map(|(i, _)| *i);
            let Some(id) = next else { break };
            let idx = self.committed.len() as u32;
            self.node_mut(id).order = Some(idx);
            self.committed.push(id);
            // Committed readers constrain nothing any more, and only the last
            // committed writer of a key can still be a read source.
            let keys: Vec<(Key, bool)> =
                self.nodes[&id].records.iter().map(|(k, r)| (k.clone(), r.last_write.is_some())).collect();
            for (k, wrote) in keys {
                let ix = self.keys.get_mut(&k).expect("indexed");
                ix.readers.remove(&id);
                if wrote {
                    let nodes = &self.nodes;
                    ix.writers.retain(|w| *w == id || nodes[w].order.is_none());
                }
            }
            // ordering-only edges out of a committed node are implied from now on
            let outs: Vec<(NodeId, Key)> = self.nodes[&id].out.iter().cloned().collect();
            for (to, k) in outs {
                let is_rf =
                    self.nodes[&to].records.get(&k).and_then(|r| r.first_read).is_some_and(|(_, s)| s == Src::Node(id));
                if !is_rf {
                    self.node_mut(id).out.remove(&(to, k.clone()));
                    self.node_mut(to).inn.remove(&(id, k));
                }
            }
        }
    }
}
