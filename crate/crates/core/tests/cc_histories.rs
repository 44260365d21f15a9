//! Dependency-graph behaviour on small hand-built histories.

use std::collections::BTreeSet;
use std::sync::Arc;

use thunderbolt_core::depgraph::{AbortCause, Access, DepGraph, End, FinalizeOutcome, TxStatus};
use thunderbolt_core::executor::{preplay_scripted, ExecutorConfig};
use thunderbolt_core::procedure::{ScriptOp, WriteExpr};
use thunderbolt_core::{Key, Procedure, State, Transaction, TxId};

fn k(s: &str) -> Key {
    Key::from(s)
}

fn t(i: u64) -> TxId {
    TxId(i)
}

fn edge(a: Option<u64>, b: u64, key: &str) -> (End, End, Key) {
    (a.map_or(End::Root, |a| End::Tx(t(a))), End::Tx(t(b)), k(key))
}

fn sorted(mut v: Vec<(End, End, Key)>) -> Vec<(End, End, Key)> {
    v.sort();
    v
}

fn read(g: &mut DepGraph<'_>, tx: u64, key: &str) -> i64 {
    match g.read(t(tx), &k(key)).unwrap() {
        Access::Done(v) => v,
        Access::Aborted => panic!("T{tx} aborted on read of {key}"),
    }
}

fn write(g: &mut DepGraph<'_>, tx: u64, key: &str, v: i64) {
    assert_eq!(g.write(t(tx), &k(key), v).unwrap(), Access::Done(()), "T{tx} write {key}");
}

#[test]
fn first_write_follows_the_read_frontier() {
    let snap = State::from_iter([(k("A"), 1)]);
    let mut g = DepGraph::new(&snap);
    for i in 1..=4 {
        g.begin(t(i)).unwrap();
    }
    assert_eq!(read(&mut g, 1, "A"), 1);
    assert_eq!(read(&mut g, 2, "A"), 1);
    write(&mut g, 4, "A", 3);
    assert_eq!(
        g.edges(),
        sorted(vec![edge(None, 1, "A"), edge(None, 2, "A"), edge(Some(1), 4, "A"), edge(Some(2), 4, "A")])
    );
    g.check_invariants().unwrap();
}

#[test]
fn read_takes_latest_write_and_orders_other_writers() {
    let snap = State::default();
    let mut g = DepGraph::new(&snap);
    for i in 1..=4 {
        g.begin(t(i)).unwrap();
    }
    write(&mut g, 1, "A", 1);
    write(&mut g, 2, "A", 2);
    write(&mut g, 3, "A", 3);
    assert_eq!(read(&mut g, 4, "A"), 3);
    let want = vec![
        edge(None, 1, "A"),
        edge(None, 2, "A"),
        edge(Some(1), 3, "A"),
        edge(Some(2), 3, "A"),
        edge(Some(3), 4, "A"),
    ];
    assert_eq!(g.edges(), sorted(want.clone()));

    // A second read of the same key is answered from the node's own record.
    write(&mut g, 3, "B", 0);
    assert_eq!(read(&mut g, 4, "A"), 3);
    let mut with_b = want;
    with_b.push(edge(None, 3, "B"));
    assert_eq!(g.edges(), sorted(with_b));
    g.check_invariants().unwrap();
}

#[test]
fn cycle_is_avoided_by_reading_an_ancestor() {
    let snap = State::from_iter([(k("A"), 10), (k("B"), 20)]);
    let mut g = DepGraph::new(&snap);
    g.begin(t(1)).unwrap();
    g.begin(t(3)).unwrap();
    assert_eq!(read(&mut g, 1, "A"), 10);
    write(&mut g, 3, "A", 11);
    write(&mut g, 3, "B", 7);
    // Reading B from T3 would close T1 -> T3 -> T1; the root value is used.
    assert_eq!(read(&mut g, 1, "B"), 20);
    assert_eq!(
        g.edges(),
        sorted(vec![edge(None, 1, "A"), edge(None, 1, "B"), edge(Some(1), 3, "A"), edge(Some(1), 3, "B")])
    );
    assert!(g.abort_log().is_empty());
    assert_eq!(g.status(t(3)), Some(TxStatus::Executing));
    g.check_invariants().unwrap();
}

#[test]
fn unresolvable_read_aborts_only_the_reader() {
    let snap = State::from_iter([(k("A"), 10), (k("B"), 20), (k("C"), 30)]);
    let mut g = DepGraph::new(&snap);
    for i in 1..=3 {
        g.begin(t(i)).unwrap();
    }
    write(&mut g, 2, "B", 5);
    write(&mut g, 2, "C", 1);
    assert_eq!(read(&mut g, 1, "A"), 10);
    write(&mut g, 3, "A", 11);
    assert_eq!(read(&mut g, 1, "C"), 1);
    write(&mut g, 3, "B", 9);
    // T3 is the latest writer of B but T1 precedes it; the root is no
    // option either since T2 -> T1 forces T2's B first.
    assert_eq!(g.read(t(1), &k("B")).unwrap(), Access::Aborted);
    let ev = g.abort_log().last().unwrap();
    assert_eq!(ev.trigger, t(1));
    assert_eq!(ev.cause, AbortCause::ReadConflict);
    assert_eq!(ev.removed, BTreeSet::from([t(1)]));
    assert_eq!(g.status(t(2)), Some(TxStatus::Executing));
    assert_eq!(g.status(t(3)), Some(TxStatus::Executing));
    g.check_invariants().unwrap();
}

#[test]
fn rewrite_cascades_through_dependents() {
    let snap = State::default();
    let mut g = DepGraph::new(&snap);
    for i in 1..=3 {
        g.begin(t(i)).unwrap();
    }
    write(&mut g, 1, "A", 1);
    assert_eq!(read(&mut g, 2, "A"), 1);
    write(&mut g, 2, "X", 4);
    assert_eq!(read(&mut g, 3, "X"), 4);
    write(&mut g, 1, "A", 2);
    let ev = g.abort_log().last().unwrap();
    assert_eq!(ev.trigger, t(1));
    assert_eq!(ev.cause, AbortCause::StaleRead);
    assert_eq!(ev.removed, BTreeSet::from([t(2), t(3)]));
    assert_eq!(g.status(t(1)), Some(TxStatus::Executing));
    assert_eq!(g.read(t(2), &k("A")).unwrap(), Access::Aborted);
    assert_eq!(g.edges(), vec![edge(None, 1, "A")]);
    g.check_invariants().unwrap();
}

#[test]
fn rewrite_with_same_value_keeps_readers() {
    let snap = State::default();
    let mut g = DepGraph::new(&snap);
    g.begin(t(1)).unwrap();
    g.begin(t(2)).unwrap();
    write(&mut g, 1, "A", 1);
    assert_eq!(read(&mut g, 2, "A"), 1);
    write(&mut g, 1, "A", 1);
    assert!(g.abort_log().is_empty());
}

fn table_txs() -> Vec<Arc<Transaction>> {
    let d = || k("D");
    let procs = [
        vec![ScriptOp::Write(d(), WriteExpr::Const(3)), ScriptOp::Write(d(), WriteExpr::Const(5))],
        vec![ScriptOp::Read(d()), ScriptOp::Write(d(), WriteExpr::ReadsPlus(-3))],
        vec![ScriptOp::Read(d())],
    ];
    procs
        .into_iter()
        .enumerate()
        .map(|(i, ops)| Arc::new(Transaction::new(0, i as u64, Procedure::Script(ops), 1).unwrap()))
        .collect()
}

/// The interleaving step by step against the graph: T1 writes D=3, T2 and
/// T3 read it, T3 finishes, T1 rewrites D=5 (aborting T2 and T3), T3 reruns
/// and both commit, then T2 notices its abort and reruns.
#[test]
fn three_transaction_interleaving_by_hand() {
    let snap = State::from_iter([(k("D"), 3)]);
    let mut g = DepGraph::new(&snap);
    let (t1, t2, t3) = (1, 2, 3);
    g.begin(t(t1)).unwrap();
    write(&mut g, t1, "D", 3);
    g.begin(t(t2)).unwrap();
    assert_eq!(read(&mut g, t2, "D"), 3);
    g.begin(t(t3)).unwrap();
    assert_eq!(read(&mut g, t3, "D"), 3);
    assert_eq!(g.edges(), sorted(vec![edge(None, t1, "D"), edge(Some(t1), t2, "D"), edge(Some(t1), t3, "D")]));
    assert_eq!(g.finalize(t(t3), 3).unwrap(), FinalizeOutcome::Waiting);
    write(&mut g, t1, "D", 5);
    let ev = g.abort_log().last().unwrap().clone();
    assert_eq!(ev.removed, BTreeSet::from([t(t2), t(t3)]));
    assert_eq!(g.take_requeues().len(), 1);
    g.begin(t(t3)).unwrap();
    assert_eq!(read(&mut g, t3, "D"), 5);
    assert_eq!(g.finalize(t(t1), 0).unwrap(), FinalizeOutcome::Committed(0));
    assert_eq!(g.finalize(t(t3), 5).unwrap(), FinalizeOutcome::Committed(1));
    assert_eq!(g.write(t(t2), &k("D"), 0).unwrap(), Access::Aborted);
    g.begin(t(t2)).unwrap();
    assert_eq!(read(&mut g, t2, "D"), 5);
    write(&mut g, t2, "D", 2);
    assert_eq!(g.finalize(t(t2), 0).unwrap(), FinalizeOutcome::Committed(2));
    assert_eq!(g.committed_order(), vec![t(t1), t(t3), t(t2)]);
    assert_eq!(g.reexecutions(), 2);
    assert_eq!(g.edges(), sorted(vec![edge(None, t1, "D"), edge(Some(t1), t2, "D"), edge(Some(t1), t3, "D")]));
    g.check_invariants().unwrap();
}

#[test]
fn three_transaction_interleaving_on_executors() {
    let batch = table_txs();
    let snap = State::from_iter([(k("D"), 3)]);
    let cfg = ExecutorConfig { workers: 3, op_cost: 1, exclusive_after: 10 };
    let script = [0, 1, 2, 2, 0, 2, 0, 2, 1, 1, 1, 1];
    let (res, stats) = preplay_scripted(&batch, &snap, cfg, &script).unwrap();
    let order: Vec<TxId> = res.order().collect();
    assert_eq!(order, vec![batch[0].id, batch[2].id, batch[1].id]);
    assert_eq!(res.final_writes().get(&k("D")), Some(&2));
    assert_eq!(stats.reexecutions, 2);
    assert!(thunderbolt_core::oracle::is_serializable(
        &res,
        &batch.iter().map(|t| t.as_ref()).collect::<Vec<_>>(),
        &snap
    ));
}
