//! Multi-threaded validation and cross-shard execution.

use std::collections::BTreeMap;
use std::thread;

use thunderbolt_core::executor::ShardScope;
use thunderbolt_core::shard::ExecBackend;
use thunderbolt_core::validate::{
    check_position, check_structure, cross_waves, run_cross, CrossOutcome, InvalidReason, WriteIndex,
};
use thunderbolt_core::{CrossEntry, SinglePayload, State};

/// Validates payload positions on `threads` threads and runs each wave of
/// shard-disjoint cross-shard transactions in parallel. Results equal the
/// serial backend's.
#[derive(Clone, Copy, Debug)]
pub struct ParallelBackend {
    pub threads: usize,
}

impl ExecBackend for ParallelBackend {
    fn validate(&self, payload: &SinglePayload, scope: ShardScope, base: &State) -> Result<(), InvalidReason> {
        check_structure(payload)?;
        let index = WriteIndex::new(&payload.result.entries);
        let len = payload.txs.len();
        let chunk = len.div_ceil(self.threads.max(1)).max(1);
        // the first failing position wins, as in sequential validation
        let first = thread::scope(|s| {
            let handles: Vec<_> = (0..len)
                .step_by(chunk)
                .map(|lo| {
                    let index = &index;
                    s.spawn(move || {
                        (lo..(lo + chunk).min(len))
                            .try_for_each(|i| check_position(payload, index, i, Some(scope), base))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("validator thread")).find(|r| r.is_err())
        });
        first.unwrap_or(Ok(()))
    }

    fn run_cross(&self, entries: &[CrossEntry], n: u32, state: &mut State) -> Vec<CrossOutcome> {
        let txs: Vec<_> = entries.iter().map(|e| e.tx.clone()).collect();
        let mut waves: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, w) in cross_waves(&txs).into_iter().enumerate() {
            waves.entry(w).or_default().push(i);
        }
        let mut out: Vec<Option<CrossOutcome>> = vec![None; entries.len()];
        for members in waves.values() {
            let view: &State = state;
            let results: Vec<CrossOutcome> = thread::scope(|s| {
                let per = members.len().div_ceil(self.threads.max(1)).max(1);
                let handles: Vec<_> = members
                    .chunks(per)
                    .map(|part| {
                        s.spawn(move || part.iter().map(|i| run_cross(&entries[*i].tx, n, view)).collect::<Vec<_>>())
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("cross thread")).collect()
            });
            for (i, r) in members.iter().zip(results) {
                if let CrossOutcome::Applied { writes, .. } = &r {
                    state.apply(writes);
                }
                out[*i] = Some(r);
            }
        }
        out.into_iter().map(|r| r.expect("every entry belongs to a wave")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use thunderbolt_core::executor::{committed_txs, preplay, ExecutorConfig};
    use thunderbolt_core::shard::SerialBackend;
    use thunderbolt_core::validate::{tamper, Tamper};
    use thunderbolt_core::workload::{generate, initial_state, SmallBankSpec};
    use thunderbolt_core::ShardId;

    fn workload(shards: u32, cross: f64, seed: u64) -> (State, Vec<Arc<thunderbolt_core::Transaction>>) {
        let spec = SmallBankSpec { accounts: 60, count: 80, cross_pct: cross, shards, seed, ..Default::default() };
        (initial_state(60), generate(&spec).into_iter().map(Arc::new).collect())
    }

    #[test]
    fn cross_execution_matches_serial() {
        for seed in 0..5 {
            let (s, txs) = workload(4, 100.0, seed);
            let entries: Vec<_> = txs.into_iter().map(CrossEntry::native).collect();
            let (mut a, mut b) = (s.clone(), s);
            let pa = ParallelBackend { threads: 3 }.run_cross(&entries, 4, &mut a);
            let pb = SerialBackend.run_cross(&entries, 4, &mut b);
            assert_eq!(pa, pb);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn validation_agrees_with_serial() {
        let (s, txs) = workload(4, 0.0, 3);
        let scope = ShardScope { shard: ShardId(0), n: 4 };
        let mine: Vec<_> = txs.into_iter().filter(|t| t.sids == [ShardId(0)]).collect();
        let cfg = ExecutorConfig { workers: 4, op_cost: 1, exclusive_after: 10 };
        let (res, _) = preplay(&mine, &s, cfg, Some(scope)).unwrap();
        let payload = SinglePayload { txs: committed_txs(&mine, &res), result: res };
        let par = ParallelBackend { threads: 4 };
        assert_eq!(par.validate(&payload, scope, &s), Ok(()));
        for kind in Tamper::ALL {
            for at in [0, payload.txs.len() / 2] {
                if let Some(bad) = tamper(&payload, kind, at) {
                    let serial = SerialBackend.validate(&bad, scope, &s);
                    assert!(serial.is_err());
                    assert_eq!(par.validate(&bad, scope, &s), serial);
                }
            }
        }
    }
}
