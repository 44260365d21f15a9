//! Deterministic concurrent executor.
//!
//! `W` virtual executors share one [`DepGraph`]. Each executor has a clock;
//! the executor with the smallest clock performs its next operation, and
//! every read or write costs `op_cost` time units. The schedule is a pure
//! function of the batch, the snapshot and the configuration, so preplay is
//! reproducible while still producing the conflicts real parallel execution
//! would.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::depgraph::{Access, DepGraph, FinalizeOutcome};
use crate::error::PreplayError;
use crate::model::{assign_shard, ShardId, Transaction};
use crate::procedure::{Cursor, Step};
use crate::schedule::PreplayResult;
use crate::state::StateView;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub workers: usize,
    pub op_cost: u64,
    /// After this many aborts a transaction runs with every other executor idle.
    pub exclusive_after: u32,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self { workers: 8, op_cost: 1, exclusive_after: 10 }
    }
}

/// Restricts a batch to one shard.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShardScope {
    pub shard: ShardId,
    pub n: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PreplayStats {
    pub reexecutions: u64,
    /// Time at which the last executor went idle.
    pub makespan: u64,
    pub exclusive_runs: u64,
}

#[derive(Clone, Debug)]
struct Job {
    tx: usize,
    cursor: Cursor,
}

#[derive(Clone, Debug, Default)]
struct Worker {
    clock: u64,
    job: Option<Job>,
}

struct Engine<'a, 's> {
    txs: &'a [Arc<Transaction>],
    index: BTreeMap<crate::model::TxId, usize>,
    graph: DepGraph<'s>,
    cfg: ExecutorConfig,
    scope: Option<ShardScope>,
    queue: VecDeque<(usize, u64)>,
    workers: Vec<Worker>,
    aborts: Vec<u32>,
    exclusive: Option<usize>,
    exclusive_runs: u64,
}

impl<'a, 's> Engine<'a, 's> {
    fn new(
        txs: &'a [Arc<Transaction>],
        snapshot: &'s dyn StateView,
        cfg: ExecutorConfig,
        scope: Option<ShardScope>,
    ) -> Result<Self, PreplayError> {
        let mut index = BTreeMap::new();
        for (i, t) in txs.iter().enumerate() {
            if index.insert(t.id, i).is_some() {
                return Err(PreplayError::DuplicateTx(t.id));
            }
        }
        Ok(Self {
            txs,
            index,
            graph: DepGraph::new(snapshot),
            cfg: ExecutorConfig { workers: cfg.workers.max(1), ..cfg },
            scope,
            queue: (0..txs.len()).map(|i| (i, 0)).collect(),
            workers: alloc::vec![Worker::default(); cfg.workers.max(1)],
            aborts: alloc::vec![0; txs.len()],
            exclusive: None,
            exclusive_runs: 0,
        })
    }

    fn others_idle(&self, w: usize) -> bool {
        self.workers.iter().enumerate().all(|(i, x)| i == w || x.job.is_none())
    }

    fn can_act(&self, w: usize) -> bool {
        let worker = &self.workers[w];
        match self.exclusive {
            Some(e) if e == w => self.others_idle(w),
            Some(_) => worker.job.is_some(),
            None => worker.job.is_some() || !self.queue.is_empty(),
        }
    }

    fn pick(&self) -> Option<usize> {
        (0..self.workers.len()).filter(|w| self.can_act(*w)).min_by_key(|w| (self.workers[*w].clock, *w))
    }

    fn requeue(&mut self, tx: usize, at: u64) {
        self.aborts[tx] += 1;
        self.queue.push_back((tx, at));
    }

    fn collect_requeues(&mut self, at: u64) {
        for r in self.graph.take_requeues() {
            let i = self.index[&r.0];
            self.requeue(i, at);
        }
    }

    /// One action of executor `w`: start a transaction or run its next step.
    fn act(&mut self, w: usize) -> Result<(), PreplayError> {
        if self.workers[w].job.is_none() {
            if self.exclusive == Some(w) {
                let latest = self.workers.iter().map(|x| x.clock).max().unwrap_or(0);
                self.workers[w].clock = latest;
            }
            let (tx, ready_at) = self.queue.pop_front().expect("can_act checked the queue");
            if self.exclusive.is_none() && self.aborts[tx] >= self.cfg.exclusive_after {
                // wait for everyone else to drain, then run it alone
                self.exclusive = Some(w);
                self.exclusive_runs += 1;
                self.queue.push_front((tx, ready_at));
                return Ok(());
            }
            let worker = &mut self.workers[w];
            worker.clock = worker.clock.max(ready_at);
            worker.job = Some(Job { tx, cursor: Cursor::new() });
            self.graph.begin(self.txs[tx].id)?;
        }
        let job = self.workers[w].job.as_mut().expect("job");
        let tx = &self.txs[job.tx];
        let step = tx.procedure.next_step(&job.cursor);
        if let (Some(scope), Step::Read(k) | Step::Write(k, _)) = (self.scope, &step) {
            if assign_shard(k, scope.n) != scope.shard {
                return Err(PreplayError::Misrouted { tx: tx.id, key: k.clone(), shard: scope.shard });
            }
        }
        let aborted = match step {
            Step::Read(k) => {
                self.workers[w].clock += self.cfg.op_cost;
                match self.graph.read(tx.id, &k)? {
                    Access::Done(v) => {
                        self.workers[w].job.as_mut().expect("job").cursor.read_done(v);
                        false
                    }
                    Access::Aborted => true,
                }
            }
            Step::Write(k, v) => {
                self.workers[w].clock += self.cfg.op_cost;
                match self.graph.write(tx.id, &k, v)? {
                    Access::Done(()) => {
                        self.workers[w].job.as_mut().expect("job").cursor.write_done();
                        false
                    }
                    Access::Aborted => true,
                }
            }
            Step::Done(r) => match self.graph.finalize(tx.id, r)? {
                FinalizeOutcome::Aborted => true,
                FinalizeOutcome::Committed(_) | FinalizeOutcome::Waiting => {
                    self.workers[w].job = None;
                    if self.exclusive == Some(w) {
                        self.exclusive = None;
                    }
                    false
                }
            },
        };
        let now = self.workers[w].clock;
        if aborted {
            let job = self.workers[w].job.take().expect("job");
            self.requeue(job.tx, now);
        }
        self.collect_requeues(now);
        Ok(())
    }

    fn finish(self) -> Result<(PreplayResult, PreplayStats), PreplayError> {
        let result = self.graph.extract_schedule()?;
        debug_assert_eq!(result.len(), self.txs.len());
        Ok((
            result,
            PreplayStats {
                reexecutions: self.graph.reexecutions(),
                makespan: self.workers.iter().map(|w| w.clock).max().unwrap_or(0),
                exclusive_runs: self.exclusive_runs,
            },
        ))
    }
}

/// Preplays `batch` against `snapshot` and returns an equivalent serial
/// schedule.
pub fn preplay(
    batch: &[Arc<Transaction>],
    snapshot: &dyn StateView,
    cfg: ExecutorConfig,
    scope: Option<ShardScope>,
) -> Result<(PreplayResult, PreplayStats), PreplayError> {
    let mut e = Engine::new(batch, snapshot, cfg, scope)?;
    while let Some(w) = e.pick() {
        e.act(w)?;
    }
    e.finish()
}

/// Like [`preplay`], but the first actions are taken by the executors named
/// in `script`, in that order. Once the script runs out the normal policy
/// finishes the batch.
pub fn preplay_scripted(
    batch: &[Arc<Transaction>],
    snapshot: &dyn StateView,
    cfg: ExecutorConfig,
    script: &[usize],
) -> Result<(PreplayResult, PreplayStats), PreplayError> {
    let mut e = Engine::new(batch, snapshot, cfg, None)?;
    for (step, w) in script.iter().enumerate() {
        if *w >= e.workers.len() || !e.can_act(*w) {
            return Err(PreplayError::ScheduleStall { step, worker: *w });
        }
        e.act(*w)?;
    }
    while let Some(w) = e.pick() {
        e.act(w)?;
    }
    e.finish()
}

/// Transactions of `batch` in the order preplay committed them.
pub fn committed_txs(batch: &[Arc<Transaction>], result: &PreplayResult) -> Vec<Arc<Transaction>> {
    let by_id: BTreeMap<_, _> = batch.iter().map(|t| (t.id, t.clone())).collect();
    result.order().filter_map(|id| by_id.get(&id).cloned()).collect()
}

/// Distinct transactions in `batch`, keeping the first occurrence.
pub fn dedup_batch(batch: &[Arc<Transaction>]) -> Vec<Arc<Transaction>> {
    let mut seen = BTreeSet::new();
    batch.iter().filter(|t| seen.insert(t.id)).cloned().collect()
}
