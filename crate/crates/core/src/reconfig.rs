//! Shift blocks: deciding when to end a DAG instance and where it ends.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::dag::{CommittedLeader, DagStore};
use crate::model::{Block, BlockKind, Round, ShardId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftReason {
    /// A shard produced no block in the last `k` rounds.
    Silent(ShardId),
    /// This replica proposed `k_rotate` rounds in the current DAG.
    Period,
    /// f+1 shards sent Shift blocks in the previous round.
    Echo,
}

/// Per-DAG bookkeeping for the Shift conditions of one replica.
#[derive(Clone, Debug)]
pub struct ShiftTracker {
    pub k: u64,
    pub k_rotate: u64,
    n: u32,
    f: usize,
    sent: bool,
    proposed: u64,
    seen: BTreeMap<ShardId, BTreeSet<Round>>,
    shifts: BTreeMap<Round, BTreeSet<ShardId>>,
}

impl ShiftTracker {
    pub fn new(n: u32, k: u64, k_rotate: u64) -> Self {
        Self {
            k,
            k_rotate,
            n,
            f: (n as usize).saturating_sub(1) / 3,
            sent: false,
            proposed: 0,
            seen: BTreeMap::new(),
            shifts: BTreeMap::new(),
        }
    }

    /// Records a block of the current DAG received from any shard (own
    /// blocks included).
    pub fn observe(&mut self, b: &Block) {
        self.seen.entry(b.proposer).or_default().insert(b.round);
        if b.kind == BlockKind::Shift {
            self.shifts.entry(b.round).or_default().insert(b.proposer);
        }
    }

    pub fn record_proposal(&mut self) {
        self.proposed += 1;
    }

    pub fn shift_sent(&self) -> bool {
        self.sent
    }

    /// Whether the proposal for `round` must be a Shift block. Marks the
    /// Shift as sent when it returns a reason.
    pub fn check(&mut self, own: ShardId, round: Round) -> Option<ShiftReason> {
        if self.sent {
            return None;
        }
        let echo = round >= 1 && self.shifts.get(&(round - 1)).is_some_and(|s| s.len() > self.f);
        let reason = if echo {
            Some(ShiftReason::Echo)
        } else if self.proposed >= self.k_rotate {
            Some(ShiftReason::Period)
        } else {
            self.silent_shard(own, round).map(ShiftReason::Silent)
        };
        if reason.is_some() {
            self.sent = true;
        }
        reason
    }

    fn silent_shard(&self, own: ShardId, round: Round) -> Option<ShardId> {
        if self.k == 0 || round < self.k {
            return None;
        }
        (0..self.n)
            .map(ShardId)
            .filter(|s| *s != own)
            .find(|s| self.seen.get(s).is_none_or(|rs| rs.range(round - self.k..round).next().is_none()))
    }
}

/// Finds the first committed leader whose causal history holds Shift blocks
/// from 2f+1 distinct shards.
#[derive(Clone, Debug, Default)]
pub struct EndingDetector {
    shifts: Vec<Arc<Block>>,
    pub ending: Option<Round>,
}

impl EndingDetector {
    /// Feeds one committed leader; returns the ending round the first time
    /// it is decided.
    pub fn on_commit(&mut self, leader: &CommittedLeader, dag: &DagStore) -> Option<Round> {
        if self.ending.is_some() {
            return None;
        }
        for b in &leader.blocks {
            if b.kind == BlockKind::Shift {
                self.shifts.push(b.clone());
            }
        }
        let head = dag.get(leader.round, leader.leader)?;
        let distinct: BTreeSet<ShardId> =
            self.shifts.iter().filter(|s| dag.path(head, s)).map(|s| s.proposer).collect();
        if distinct.len() > 2 * ((dag.n() as usize - 1) / 3) {
            self.ending = Some(leader.round);
            return self.ending;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DagId, ReplicaId};

    fn blk(round: Round, s: u32, kind: BlockKind) -> Block {
        Block::new(DagId(1), round, ShardId(s), ReplicaId(s), kind, None, Vec::new(), Vec::new())
    }

    #[test]
    fn silence_for_k_rounds_triggers_shift_once() {
        let mut t = ShiftTracker::new(4, 2, 100);
        for r in 0..2 {
            for s in 0..4 {
                t.observe(&blk(r, s, BlockKind::Normal));
            }
        }
        for r in 2..4 {
            for s in 1..4 {
                t.observe(&blk(r, s, BlockKind::Normal));
            }
        }
        assert_eq!(t.check(ShardId(1), 3), None);
        assert_eq!(t.check(ShardId(1), 4), Some(ShiftReason::Silent(ShardId(0))));
        assert_eq!(t.check(ShardId(1), 5), None);
    }

    #[test]
    fn echo_needs_f_plus_one_shifts() {
        let mut t = ShiftTracker::new(4, 0, 100);
        t.observe(&blk(4, 1, BlockKind::Shift));
        assert_eq!(t.check(ShardId(3), 5), None);
        t.observe(&blk(4, 2, BlockKind::Shift));
        assert_eq!(t.check(ShardId(3), 5), Some(ShiftReason::Echo));
    }

    #[test]
    fn period_counts_own_proposals() {
        let mut t = ShiftTracker::new(4, 0, 6);
        for _ in 0..5 {
            t.record_proposal();
        }
        assert_eq!(t.check(ShardId(0), 5), None);
        t.record_proposal();
        assert_eq!(t.check(ShardId(0), 6), Some(ShiftReason::Period));
    }
}
