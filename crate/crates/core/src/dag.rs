//! Round-based certified DAG with a two-round leader commit rule.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::model::{Block, CertRef, DagId, Digest, ReplicaId, Round, ShardId};

/// A leader and the blocks its commit ordered, in delivery order.
#[derive(Clone, Debug)]
pub struct CommittedLeader {
    pub round: Round,
    pub leader: ShardId,
    pub blocks: Vec<Arc<Block>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NotReady {
    pub have: usize,
    pub need: usize,
}

/// Leader shard of `round`, or `None` for even rounds.
pub fn leader_of(round: Round, n: u32, offset: u64) -> Option<ShardId> {
    if round % 2 == 1 {
        Some(ShardId((((round - 1) / 2 + offset) % u64::from(n)) as u32))
    } else {
        None
    }
}

pub struct DagStore {
    pub dag: DagId,
    n: u32,
    f: usize,
    leader_offset: u64,
    vertices: BTreeMap<(Round, ShardId), Arc<Block>>,
    waiting: BTreeMap<Digest, Arc<Block>>,
    committed: BTreeSet<Digest>,
    last_leader: Option<Round>,
    order: Vec<Arc<Block>>,
    max_round: Round,
}

impl DagStore {
    pub fn new(dag: DagId, n: u32, leader_offset: u64) -> Self {
        Self {
            dag,
            n,
            f: ((n as usize).saturating_sub(1)) / 3,
            leader_offset,
            vertices: BTreeMap::new(),
            waiting: BTreeMap::new(),
            committed: BTreeSet::new(),
            last_leader: None,
            order: Vec::new(),
            max_round: 0,
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn quorum(&self) -> usize {
        2 * self.f + 1
    }

    pub fn leader_of(&self, round: Round) -> Option<ShardId> {
        leader_of(round, self.n, self.leader_offset)
    }

    pub fn get(&self, round: Round, s: ShardId) -> Option<&Arc<Block>> {
        self.vertices.get(&(round, s))
    }

    pub fn contains_ref(&self, round: Round, r: &CertRef) -> bool {
        self.get(round, r.proposer).is_some_and(|b| b.digest == r.digest)
    }

    pub fn round_blocks(&self, round: Round) -> impl Iterator<Item = &Arc<Block>> {
        self.vertices.range((round, ShardId(0))..=(round, ShardId(u32::MAX))).map(|(_, b)| b)
    }

    pub fn round_count(&self, round: Round) -> usize {
        self.round_blocks(round).count()
    }

    pub fn max_round(&self) -> Round {
        self.max_round
    }

    pub fn is_committed(&self, d: Digest) -> bool {
        self.committed.contains(&d)
    }

    pub fn last_committed_leader(&self) -> Option<Round> {
        self.last_leader
    }

    /// Committed blocks in total order.
    pub fn total_order(&self) -> &[Arc<Block>] {
        &self.order
    }

    /// Parents for a proposal in `round`: every certificate of the previous
    /// round held locally, provided there are at least 2f+1.
    pub fn parents_for(&self, round: Round) -> Result<Vec<CertRef>, NotReady> {
        if round == 0 {
            return Ok(Vec::new());
        }
        let refs: Vec<CertRef> = self.round_blocks(round - 1).map(|b| b.cert_ref()).collect();
        if refs.len() < self.quorum() {
            return Err(NotReady { have: refs.len(), need: self.quorum() });
        }
        Ok(refs)
    }

    /// True when every parent of `b` is stored.
    pub fn has_parents(&self, b: &Block) -> bool {
        b.round == 0 || b.parents.iter().all(|p| self.contains_ref(b.round - 1, p))
    }

    /// Stores a certified block. Blocks whose parents are missing wait until
    /// they arrive. Returns every block stored as a result, oldest first.
    pub fn insert_certified(&mut self, b: Arc<Block>) -> Vec<Arc<Block>> {
        if b.dag != self.dag || self.vertices.contains_key(&(b.round, b.proposer)) {
            return Vec::new();
        }
        let mut out = Vec::new();
        if !self.has_parents(&b) {
            self.waiting.insert(b.digest, b);
            return out;
        }
        self.store(b, &mut out);
        loop {
            let ready: Vec<Digest> = self.waiting.values().filter(|w| self.has_parents(w)).map(|w| w.digest).collect();
            if ready.is_empty() {
                break;
            }
            for d in ready {
                let w = self.waiting.remove(&d).expect("waiting");
                if !self.vertices.contains_key(&(w.round, w.proposer)) {
                    self.store(w, &mut out);
                }
            }
        }
        out
    }

    fn store(&mut self, b: Arc<Block>, out: &mut Vec<Arc<Block>>) {
        self.max_round = self.max_round.max(b.round);
        self.vertices.insert((b.round, b.proposer), b.clone());
        out.push(b);
    }

    /// Number of blocks of `round + 1` that reference `v`.
    pub fn references(&self, v: &Block) -> usize {
        self.round_blocks(v.round + 1).filter(|b| b.parents.contains(&v.cert_ref())).count()
    }

    /// The direct commit rule: 2f+1 blocks of the next round are stored and
    /// f+1 of them reference the leader.
    pub fn leader_finalized(&self, round: Round) -> bool {
        let Some(l) = self.leader_of(round) else { return false };
        let Some(v) = self.get(round, l) else { return false };
        self.round_count(round + 1) >= self.quorum() && self.references(v) > self.f
    }

    /// Is there a parent path from `from` down to `to`?
    pub fn path(&self, from: &Block, to: &Block) -> bool {
        if from.digest == to.digest {
            return true;
        }
        let mut frontier: BTreeSet<(Round, ShardId)> = BTreeSet::new();
        frontier.insert((from.round, from.proposer));
        let mut round = from.round;
        while round > to.round {
            let mut next = BTreeSet::new();
            for key in &frontier {
                if let Some(b) = self.vertices.get(key) {
                    for p in &b.parents {
                        next.insert((round - 1, p.proposer));
                    }
                }
            }
            round -= 1;
            frontier = next;
        }
        frontier.contains(&(to.round, to.proposer))
    }

    /// Uncommitted part of `v`'s causal history, ordered by (round, proposer).
    pub fn uncommitted_history(&self, v: &Block) -> Vec<Arc<Block>> {
        self.history_where(v, |b| !self.committed.contains(&b.digest))
    }

    /// Causal history of `v` (inclusive), restricted to blocks satisfying
    /// `keep`; traversal does not continue below excluded blocks.
    pub fn history_where(&self, v: &Block, keep: impl Fn(&Block) -> bool) -> Vec<Arc<Block>> {
        let mut seen: BTreeSet<(Round, ShardId)> = BTreeSet::new();
        let mut stack: Vec<(Round, ShardId)> = Vec::new();
        let mut out: Vec<Arc<Block>> = Vec::new();
        if keep(v) {
            if let Some(b) = self.get(v.round, v.proposer).filter(|b| b.digest == v.digest) {
                out.push(b.clone());
            }
            if v.round > 0 {
                for p in &v.parents {
                    if seen.insert((v.round - 1, p.proposer)) {
                        stack.push((v.round - 1, p.proposer));
                    }
                }
            }
        }
        while let Some(key) = stack.pop() {
            let Some(b) = self.vertices.get(&key) else { continue };
            if !keep(b) {
                continue;
            }
            out.push(b.clone());
            if b.round > 0 {
                for p in &b.parents {
                    if seen.insert((b.round - 1, p.proposer)) {
                        stack.push((b.round - 1, p.proposer));
                    }
                }
            }
        }
        out.sort_by_key(|b| (b.round, b.proposer));
        out
    }

    /// Commits every leader that can be committed now, earlier leaders first.
    pub fn try_commit(&mut self) -> Vec<CommittedLeader> {
        let mut out = Vec::new();
        let mut r = match self.last_leader {
            Some(l) => l + 2,
            None => 1,
        };
        while r < self.max_round {
            if self.leader_finalized(r) {
                let l = self.leader_of(r).expect("odd round");
                let head = self.get(r, l).expect("finalized leader").clone();
                let mut chain = alloc::vec![head.clone()];
                let mut cur = head;
                let mut q = r;
                while q >= 3 && self.last_leader.is_none_or(|last| q - 2 > last) {
                    q -= 2;
                    let ql = self.leader_of(q).expect("odd round");
                    if let Some(u) = self.get(q, ql).cloned() {
                        if self.path(&cur, &u) {
                            chain.push(u.clone());
                            cur = u;
                        }
                    }
                }
                for v in chain.into_iter().rev() {
                    let blocks = self.uncommitted_history(&v);
                    for b in &blocks {
                        self.committed.insert(b.digest);
                        self.order.push(b.clone());
                    }
                    out.push(CommittedLeader { round: v.round, leader: v.proposer, blocks });
                }
                self.last_leader = Some(r);
            }
            r += 2;
        }
        out
    }

    /// One line per stored block: `round proposer kind parents...`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for ((round, p), b) in &self.vertices {
            let _ = write!(s, "{round} {p} {}", b.kind);
            for x in &b.parents {
                let _ = write!(s, " {}", x.proposer);
            }
            if self.committed.contains(&b.digest) {
                s.push_str(" *");
            }
            s.push('\n');
        }
        s
    }
}

/// Tracks which vertices this replica already voted for.
#[derive(Clone, Debug, Default)]
pub struct VoteBook {
    voted: BTreeSet<(DagId, Round, ShardId)>,
}

impl VoteBook {
    /// True the first time a (dag, round, proposer) slot is seen.
    pub fn vote(&mut self, b: &Block) -> bool {
        self.voted.insert((b.dag, b.round, b.proposer))
    }
}

/// Collects votes for this replica's own proposals.
#[derive(Clone, Debug, Default)]
pub struct VoteCollector {
    votes: BTreeMap<Digest, BTreeSet<ReplicaId>>,
    done: BTreeSet<Digest>,
}

impl VoteCollector {
    /// Adds a vote; returns the voter set exactly once, when it reaches
    /// `quorum` distinct voters.
    pub fn add(&mut self, digest: Digest, voter: ReplicaId, quorum: usize) -> Option<BTreeSet<ReplicaId>> {
        if self.done.contains(&digest) {
            return None;
        }
        let set = self.votes.entry(digest).or_default();
        set.insert(voter);
        if set.len() >= quorum {
            self.done.insert(digest);
            return self.votes.remove(&digest);
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockKind, ReplicaId};

    fn block(round: Round, s: u32, parents: &[&Arc<Block>]) -> Arc<Block> {
        Arc::new(Block::new(
            DagId(1),
            round,
            ShardId(s),
            ReplicaId(s),
            BlockKind::Normal,
            None,
            Vec::new(),
            parents.iter().map(|p| p.cert_ref()).collect(),
        ))
    }

    /// Full rounds 0..rounds where every block references every block of
    /// the previous round.
    fn full(n: u32, rounds: Round) -> (DagStore, Vec<Vec<Arc<Block>>>) {
        let mut d = DagStore::new(DagId(1), n, 0);
        let mut all: Vec<Vec<Arc<Block>>> = Vec::new();
        for r in 0..rounds {
            let prev: Vec<&Arc<Block>> = all.last().map(|v| v.iter().collect()).unwrap_or_default();
            let row: Vec<_> = (0..n).map(|s| block(r, s, &prev)).collect();
            for b in &row {
                d.insert_certified(b.clone());
            }
            all.push(row);
        }
        (d, all)
    }

    #[test]
    fn leaders_round_robin_on_odd_rounds() {
        assert_eq!(leader_of(1, 4, 0), Some(ShardId(0)));
        assert_eq!(leader_of(3, 4, 0), Some(ShardId(1)));
        assert_eq!(leader_of(5, 4, 0), Some(ShardId(2)));
        assert_eq!(leader_of(2, 4, 0), None);
        assert_eq!(leader_of(1, 4, 3), Some(ShardId(3)));
    }

    #[test]
    fn parents_need_a_quorum() {
        let mut d = DagStore::new(DagId(1), 4, 0);
        assert_eq!(d.parents_for(0), Ok(Vec::new()));
        let r0: Vec<_> = (0..4).map(|s| block(0, s, &[])).collect();
        d.insert_certified(r0[0].clone());
        d.insert_certified(r0[1].clone());
        assert_eq!(d.parents_for(1), Err(NotReady { have: 2, need: 3 }));
        d.insert_certified(r0[2].clone());
        assert_eq!(d.parents_for(1).unwrap().len(), 3);
    }

    #[test]
    fn blocks_wait_for_parents() {
        let mut d = DagStore::new(DagId(1), 4, 0);
        let r0: Vec<_> = (0..4).map(|s| block(0, s, &[])).collect();
        let b = block(1, 0, &[&r0[0], &r0[1], &r0[2]]);
        assert!(d.insert_certified(b.clone()).is_empty());
        d.insert_certified(r0[0].clone());
        d.insert_certified(r0[1].clone());
        let got = d.insert_certified(r0[2].clone());
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].digest, b.digest);
    }

    #[test]
    fn leader_commits_with_next_round_support() {
        let (mut d, _) = full(4, 3);
        let c = d.try_commit();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].round, 1);
        // rounds 0 (4 blocks) and the leader itself
        assert_eq!(c[0].blocks.len(), 5);
        assert!(d.try_commit().is_empty());
    }

    #[test]
    fn weakly_referenced_leader_is_committed_by_a_later_one() {
        let n = 4;
        let mut d = DagStore::new(DagId(1), n, 0);
        let r0: Vec<_> = (0..n).map(|s| block(0, s, &[])).collect();
        r0.iter().for_each(|b| {
            d.insert_certified(b.clone());
        });
        let r0p: Vec<_> = r0.iter().collect();
        let r1: Vec<_> = (0..n).map(|s| block(1, s, &r0p)).collect();
        r1.iter().for_each(|b| {
            d.insert_certified(b.clone());
        });
        // only shard 1 references the round-1 leader (shard 0)
        let without: Vec<_> = r1[1..].iter().collect();
        let with: Vec<_> = r1.iter().collect();
        let r2: Vec<_> = (0..n).map(|s| block(2, s, if s == 1 { &with } else { &without })).collect();
        r2.iter().for_each(|b| {
            d.insert_certified(b.clone());
        });
        assert!(d.try_commit().is_empty());
        let r2p: Vec<_> = r2.iter().collect();
        let r3: Vec<_> = (0..n).map(|s| block(3, s, &r2p)).collect();
        r3.iter().for_each(|b| {
            d.insert_certified(b.clone());
        });
        let r3p: Vec<_> = r3.iter().collect();
        let r4: Vec<_> = (0..n).map(|s| block(4, s, &r3p)).collect();
        r4.iter().for_each(|b| {
            d.insert_certified(b.clone());
        });
        let c = d.try_commit();
        assert_eq!(c.iter().map(|l| l.round).collect::<Vec<_>>(), [1, 3]);
        assert_eq!(c[0].blocks.last().unwrap().digest, r1[0].digest);
    }

    #[test]
    fn total_order_is_round_ordered_per_proposer() {
        let (mut d, _) = full(4, 12);
        d.try_commit();
        let mut last: BTreeMap<ShardId, Round> = BTreeMap::new();
        for b in d.total_order() {
            if let Some(r) = last.insert(b.proposer, b.round) {
                assert!(r < b.round);
            }
        }
        assert!(d.total_order().len() >= 36);
    }

    #[test]
    fn votes_certify_at_quorum_once() {
        let mut c = VoteCollector::default();
        assert!(c.add(7, ReplicaId(0), 3).is_none());
        assert!(c.add(7, ReplicaId(0), 3).is_none());
        assert!(c.add(7, ReplicaId(1), 3).is_none());
        assert_eq!(c.add(7, ReplicaId(2), 3).map(|s| s.len()), Some(3));
        assert!(c.add(7, ReplicaId(3), 3).is_none());
        let mut v = VoteBook::default();
        let b = block(0, 0, &[]);
        assert!(v.vote(&b));
        assert!(!v.vote(&b));
    }
}
