//! Comparison executors on real threads: optimistic concurrency control
//! with a central verifier, and two-phase locking without waiting.
//!
//! Both buffer writes and install them at commit, so the commit order is a
//! serial order the oracle can replay.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thunderbolt_core::oracle::serial_schedule;
use thunderbolt_core::procedure::{Cursor, Step};
use thunderbolt_core::{Key, StateView, Transaction, TxId, Value};

use crate::threaded::{pause, ThreadConfig};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BaselineOutcome {
    /// Commit order.
    pub order: Vec<TxId>,
    pub results: HashMap<TxId, Value>,
    /// Final value of every written key.
    pub writes: BTreeMap<Key, Value>,
    pub reexecutions: u64,
    pub elapsed: Duration,
}

/// Replays the commit order serially and compares results and final
/// writes.
pub fn verify(out: &BaselineOutcome, batch: &[Arc<Transaction>], snapshot: &dyn StateView) -> Result<(), String> {
    let by_id: HashMap<TxId, &Transaction> = batch.iter().map(|t| (t.id, &**t)).collect();
    if out.order.len() != batch.len() || out.order.iter().collect::<BTreeSet<_>>().len() != batch.len() {
        return Err(format!("committed {} of {} transactions", out.order.len(), batch.len()));
    }
    let ordered = out.order.iter().map(|id| by_id.get(id).copied().ok_or(format!("unknown transaction {id}")));
    let ordered: Vec<&Transaction> = ordered.collect::<Result<_, _>>()?;
    let serial = serial_schedule(ordered, snapshot);
    for e in &serial.entries {
        if out.results.get(&e.tx) != Some(&e.result) {
            return Err(format!("result of {} differs from serial replay", e.tx));
        }
    }
    if serial.final_writes() != out.writes {
        return Err("final writes differ from serial replay".into());
    }
    Ok(())
}

fn run_workers(cfg: &ThreadConfig, work: impl Fn(usize) + Sync) {
    thread::scope(|s| {
        for w in 0..cfg.workers.max(1) {
            let work = &work;
            s.spawn(move || work(w));
        }
    });
}

#[derive(Default)]
struct Committed {
    versions: HashMap<Key, (Value, u64)>,
    order: Vec<TxId>,
    results: HashMap<TxId, Value>,
}

/// Optimistic execution: reads record the version they saw, writes stay
/// local, and a central verifier commits a transaction only if every version
/// it read is still current. Otherwise the transaction runs again.
pub fn occ_execute(batch: &[Arc<Transaction>], snapshot: &dyn StateView, cfg: &ThreadConfig) -> BaselineOutcome {
    let start = Instant::now();
    let store = Mutex::new(Committed::default());
    let next = AtomicUsize::new(0);
    let reexec = AtomicUsize::new(0);
    run_workers(cfg, |_| loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(tx) = batch.get(i) else { return };
        loop {
            let mut cursor = Cursor::new();
            let mut seen: BTreeMap<Key, u64> = BTreeMap::new();
            let mut local: BTreeMap<Key, Value> = BTreeMap::new();
            let result = loop {
                match tx.procedure.next_step(&cursor) {
                    Step::Read(k) => {
                        let v = match local.get(&k) {
                            Some(v) => *v,
                            None => {
                                let g = store.lock().expect("store lock");
                                let (v, ver) = g.versions.get(&k).copied().unwrap_or_else(|| (snapshot.get(&k), 0));
                                drop(g);
                                seen.entry(k).or_insert(ver);
                                v
                            }
                        };
                        cursor.read_done(v);
                    }
                    Step::Write(k, v) => {
                        local.insert(k, v);
                        cursor.write_done();
                    }
                    Step::Done(r) => break r,
                }
                pause(cfg.op_delay);
            };
            let mut g = store.lock().expect("store lock");
            let current = |k: &Key| g.versions.get(k).map_or(0, |x| x.1);
            if seen.iter().all(|(k, ver)| current(k) == *ver) {
                for (k, v) in local {
                    let e = g.versions.entry(k).or_insert((0, 0));
                    *e = (v, e.1 + 1);
                }
                g.order.push(tx.id);
                g.results.insert(tx.id, result);
                break;
            }
            drop(g);
            reexec.fetch_add(1, Ordering::Relaxed);
        }
    });
    finish(store.into_inner().expect("store lock"), reexec.into_inner(), start)
}

fn finish(c: Committed, reexec: usize, start: Instant) -> BaselineOutcome {
    BaselineOutcome {
        order: c.order,
        results: c.results,
        writes: c.versions.into_iter().map(|(k, (v, _))| (k, v)).collect(),
        reexecutions: reexec as u64,
        elapsed: start.elapsed(),
    }
}

#[derive(Default)]
struct LockState {
    shared: BTreeSet<usize>,
    exclusive: Option<usize>,
}

#[derive(Default)]
struct LockTable {
    locks: HashMap<Key, LockState>,
    committed: Committed,
}

impl LockTable {
    /// Takes a shared or exclusive lock for `owner`, or reports a conflict.
    fn acquire(&mut self, owner: usize, k: &Key, exclusive: bool) -> bool {
        let l = self.locks.entry(k.clone()).or_default();
        match l.exclusive {
            Some(o) if o == owner => true,
            Some(_) => false,
            None if !exclusive => {
                l.shared.insert(owner);
                true
            }
            None => {
                if l.shared.iter().any(|o| *o != owner) {
                    return false;
                }
                l.shared.remove(&owner);
                l.exclusive = Some(owner);
                true
            }
        }
    }

    fn release(&mut self, owner: usize, held: &BTreeSet<Key>) {
        for k in held {
            if let Some(l) = self.locks.get_mut(k) {
                l.shared.remove(&owner);
                if l.exclusive == Some(owner) {
                    l.exclusive = None;
                }
                if l.shared.is_empty() && l.exclusive.is_none() {
                    self.locks.remove(k);
                }
            }
        }
    }
}

/// Smallest upper bound of the first backoff. The bound is at least one
/// operation delay and doubles per retry, up to 64 times.
const BACKOFF_BASE: Duration = Duration::from_micros(20);

/// Two-phase locking where any lock conflict releases everything and
/// retries after a short randomized backoff. Commit order is the order in
/// which transactions release their locks.
pub fn tpl_nowait_execute(batch: &[Arc<Transaction>], snapshot: &dyn StateView, cfg: &ThreadConfig) -> BaselineOutcome {
    let start = Instant::now();
    let table = Mutex::new(LockTable::default());
    let next = AtomicUsize::new(0);
    let reexec = AtomicUsize::new(0);
    run_workers(cfg, |w| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (w as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(tx) = batch.get(i) else { return };
            let mut attempt = 0u32;
            'retry: loop {
                let mut cursor = Cursor::new();
                let mut held: BTreeSet<Key> = BTreeSet::new();
                let mut local: BTreeMap<Key, Value> = BTreeMap::new();
                let conflict = loop {
                    let step = tx.procedure.next_step(&cursor);
                    let mut g = table.lock().expect("lock table");
                    match step {
                        Step::Read(k) => {
                            if !g.acquire(i, &k, false) {
                                break true;
                            }
                            held.insert(k.clone());
                            let v = local.get(&k).copied().unwrap_or_else(|| {
                                g.committed.versions.get(&k).map_or_else(|| snapshot.get(&k), |x| x.0)
                            });
                            cursor.read_done(v);
                        }
                        Step::Write(k, v) => {
                            if !g.acquire(i, &k, true) {
                                break true;
                            }
                            held.insert(k.clone());
                            local.insert(k, v);
                            cursor.write_done();
                        }
                        Step::Done(r) => {
                            for (k, v) in std::mem::take(&mut local) {
                                let e = g.committed.versions.entry(k).or_insert((0, 0));
                                *e = (v, e.1 + 1);
                            }
                            g.committed.order.push(tx.id);
                            g.committed.results.insert(tx.id, r);
                            g.release(i, &held);
                            break 'retry;
                        }
                    }
                    drop(g);
                    pause(cfg.op_delay);
                };
                debug_assert!(conflict);
                table.lock().expect("lock table").release(i, &held);
                reexec.fetch_add(1, Ordering::Relaxed);
                let cap = BACKOFF_BASE.max(cfg.op_delay) * (1u32 << attempt.min(6));
                thread::sleep(Duration::from_nanos(rng.random_range(0..=cap.as_nanos() as u64)));
                attempt += 1;
            }
        }
    });
    let t = table.into_inner().expect("lock table");
    finish(t.committed, reexec.into_inner(), start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use thunderbolt_core::procedure::{Procedure, ScriptOp, WriteExpr};
    use thunderbolt_core::workload::{generate, initial_state, SmallBankSpec};
    use thunderbolt_core::State;

    fn script(client: u32, ops: Vec<ScriptOp>) -> Arc<Transaction> {
        Arc::new(Transaction::new(client, 1, Procedure::Script(ops), 1).unwrap())
    }

    fn rmw(client: u32, key: &str) -> Arc<Transaction> {
        script(client, vec![ScriptOp::Read(Key::from(key)), ScriptOp::Write(Key::from(key), WriteExpr::ReadsPlus(1))])
    }

    fn slow(workers: usize) -> ThreadConfig {
        ThreadConfig { workers, op_delay: Duration::from_millis(5), ..Default::default() }
    }

    #[test]
    fn disjoint_keys_never_conflict() {
        let batch: Vec<_> = (0..6).map(|i| rmw(i, &format!("k{i}"))).collect();
        let s = State::new();
        for out in [occ_execute(&batch, &s, &slow(6)), tpl_nowait_execute(&batch, &s, &slow(6))] {
            assert_eq!(out.reexecutions, 0);
            verify(&out, &batch, &s).unwrap();
        }
    }

    #[test]
    fn concurrent_read_modify_write_conflicts() {
        let batch = vec![rmw(0, "x"), rmw(1, "x")];
        let s = State::new();
        let occ = occ_execute(&batch, &s, &slow(2));
        assert!(occ.reexecutions >= 1);
        verify(&occ, &batch, &s).unwrap();
        assert_eq!(occ.writes[&Key::from("x")], 2);
        let tpl = tpl_nowait_execute(&batch, &s, &slow(2));
        assert!(tpl.reexecutions >= 1);
        verify(&tpl, &batch, &s).unwrap();
    }

    #[test]
    fn single_worker_never_retries() {
        let spec = SmallBankSpec { accounts: 4, count: 40, seed: 2, ..Default::default() };
        let batch: Vec<_> = generate(&spec).into_iter().map(Arc::new).collect();
        let s = initial_state(4);
        let cfg = ThreadConfig { workers: 1, ..Default::default() };
        for out in [occ_execute(&batch, &s, &cfg), tpl_nowait_execute(&batch, &s, &cfg)] {
            assert_eq!(out.reexecutions, 0);
            verify(&out, &batch, &s).unwrap();
        }
    }

    #[test]
    fn contended_batches_stay_serializable() {
        let spec = SmallBankSpec { accounts: 10, count: 80, seed: 6, ..Default::default() };
        let batch: Vec<_> = generate(&spec).into_iter().map(Arc::new).collect();
        let s = initial_state(10);
        let cfg = ThreadConfig { workers: 8, op_delay: Duration::from_micros(50), ..Default::default() };
        verify(&occ_execute(&batch, &s, &cfg), &batch, &s).unwrap();
        verify(&tpl_nowait_execute(&batch, &s, &cfg), &batch, &s).unwrap();
    }

    #[test]
    fn verify_catches_a_wrong_result() {
        let batch = vec![rmw(0, "x")];
        let s = State::new();
        let mut out = occ_execute(&batch, &s, &slow(1));
        out.results.insert(batch[0].id, 42);
        assert!(verify(&out, &batch, &s).is_err());
    }
}
