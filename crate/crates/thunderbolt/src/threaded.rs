//! Concurrent executor on real OS threads.
//!
//! Same dependency graph as the deterministic executor, shared behind one
//! mutex. Each operation takes the lock once; the optional per-operation
//! delay runs outside it so threads interleave even on a single core.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use thunderbolt_core::depgraph::{Access, DepGraph, FinalizeOutcome};
use thunderbolt_core::procedure::{Cursor, Step};
use thunderbolt_core::{CcError, PreplayResult, StateView, Transaction, TxId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThreadConfig {
    pub workers: usize,
    /// Simulated work after every read or write.
    pub op_delay: Duration,
    /// After this many aborts a transaction runs with the lock held
    /// throughout.
    pub exclusive_after: u32,
    /// Seeds randomized backoff where an executor uses it.
    pub seed: u64,
}

impl Default for ThreadConfig {
    fn default() -> Self {
        Self { workers: 8, op_delay: Duration::ZERO, exclusive_after: 10, seed: 1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ThreadStats {
    pub reexecutions: u64,
    pub elapsed: Duration,
}

pub(crate) fn pause(d: Duration) {
    if d.is_zero() {
        thread::yield_now();
    } else {
        thread::sleep(d);
    }
}

struct Shared<'s> {
    graph: DepGraph<'s>,
    queue: VecDeque<usize>,
    aborts: Vec<u32>,
    failed: Option<CcError>,
}

enum Op {
    Next,
    Aborted,
    Finished,
}

impl Shared<'_> {
    fn requeue(&mut self, i: usize) {
        self.aborts[i] += 1;
        self.queue.push_back(i);
    }

    fn step(
        &mut self,
        txs: &[Arc<Transaction>],
        index: &HashMap<TxId, usize>,
        i: usize,
        cursor: &mut Cursor,
    ) -> Result<Op, CcError> {
        let id = txs[i].id;
        let op = match txs[i].procedure.next_step(cursor) {
            Step::Read(k) => match self.graph.read(id, &k)? {
                Access::Done(v) => {
                    cursor.read_done(v);
                    Op::Next
                }
                Access::Aborted => Op::Aborted,
            },
            Step::Write(k, v) => match self.graph.write(id, &k, v)? {
                Access::Done(()) => {
                    cursor.write_done();
                    Op::Next
                }
                Access::Aborted => Op::Aborted,
            },
            Step::Done(r) => match self.graph.finalize(id, r)? {
                FinalizeOutcome::Aborted => Op::Aborted,
                _ => Op::Finished,
            },
        };
        if let Op::Aborted = op {
            self.requeue(i);
        }
        for r in self.graph.take_requeues() {
            self.requeue(index[&r.0]);
        }
        Ok(op)
    }
}

/// Preplays `batch` on `cfg.workers` threads and returns the equivalent
/// serial schedule.
pub fn ce_execute(
    batch: &[Arc<Transaction>],
    snapshot: &dyn StateView,
    cfg: &ThreadConfig,
) -> Result<(PreplayResult, ThreadStats), CcError> {
    let start = Instant::now();
    let mut index = HashMap::new();
    for (i, t) in batch.iter().enumerate() {
        if index.insert(t.id, i).is_some() {
            return Err(CcError::DuplicateTx(t.id));
        }
    }
    let total = batch.len();
    let shared = Mutex::new(Shared {
        graph: DepGraph::new(snapshot),
        queue: (0..total).collect(),
        aborts: vec![0; total],
        failed: None,
    });
    let worker = || loop {
        let picked = {
            let mut g = shared.lock().expect("executor lock");
            if g.failed.is_some() || g.graph.committed_count() == total {
                return;
            }
            match g.queue.pop_front() {
                Some(i) => match g.graph.begin(batch[i].id) {
                    Ok(()) => Some((i, g.aborts[i] >= cfg.exclusive_after)),
                    Err(e) => {
                        g.failed = Some(e);
                        return;
                    }
                },
                None => None,
            }
        };
        let Some((i, exclusive)) = picked else {
            pause(cfg.op_delay);
            continue;
        };
        let mut cursor = Cursor::new();
        if exclusive {
            let mut g = shared.lock().expect("executor lock");
            loop {
                match g.step(batch, &index, i, &mut cursor) {
                    Ok(Op::Next) => {}
                    Ok(_) => break,
                    Err(e) => {
                        g.failed = Some(e);
                        return;
                    }
                }
            }
            continue;
        }
        loop {
            let op = {
                let mut g = shared.lock().expect("executor lock");
                match g.step(batch, &index, i, &mut cursor) {
                    Ok(op) => op,
                    Err(e) => {
                        g.failed = Some(e);
                        return;
                    }
                }
            };
            match op {
                Op::Next => pause(cfg.op_delay),
                Op::Aborted | Op::Finished => break,
            }
        }
    };
    thread::scope(|s| {
        for _ in 0..cfg.workers.max(1) {
            s.spawn(worker);
        }
    });
    let g = shared.into_inner().expect("executor lock");
    if let Some(e) = g.failed {
        return Err(e);
    }
    let result = g.graph.extract_schedule()?;
    Ok((result, ThreadStats { reexecutions: g.graph.reexecutions(), elapsed: start.elapsed() }))
}
