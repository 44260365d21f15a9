//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs without the libtest harness so the lines
//! always reach the output.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thunderbolt::bench::{mean, reexec_trial, simulate, ReexecSetup};
use thunderbolt::config::{ProtocolArg, RunConfig};
use thunderbolt::fuzz::fuzz;
use thunderbolt_core::check::{
    censorship_case, pair_case, pair_variants, rotation_check, safety_case, validation_trials, Adversary, PairOrder,
};
use thunderbolt_core::depgraph::{AbortCause, Access, DepGraph, End, FinalizeOutcome};
use thunderbolt_core::executor::{preplay_scripted, ExecutorConfig};
use thunderbolt_core::oracle::is_serializable;
use thunderbolt_core::procedure::{ScriptOp, WriteExpr};
use thunderbolt_core::scenario::{conversion_script, rotation_config, rotation_workload, run_rule_script};
use thunderbolt_core::shard::ConflictPolicy;
use thunderbolt_core::{Key, Procedure, State, Transaction, TxId};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn k(s: &str) -> Key {
    Key::from(s)
}

fn t(i: u64) -> TxId {
    TxId(i)
}

fn edge(a: Option<u64>, b: u64, key: &str) -> (End, End, Key) {
    (a.map_or(End::Root, |a| End::Tx(t(a))), End::Tx(t(b)), k(key))
}

fn edges(mut v: Vec<(End, End, Key)>) -> Vec<(End, End, Key)> {
    v.sort();
    v
}

fn rd(g: &mut DepGraph<'_>, tx: u64, key: &str) -> Result<i64, String> {
    match g.read(t(tx), &k(key)).map_err(|e| e.to_string())? {
        Access::Done(v) => Ok(v),
        Access::Aborted => Err(format!("T{tx} aborted reading {key}")),
    }
}

fn wr(g: &mut DepGraph<'_>, tx: u64, key: &str, v: i64) -> Result<(), String> {
    match g.write(t(tx), &k(key), v).map_err(|e| e.to_string())? {
        Access::Done(()) => Ok(()),
        Access::Aborted => Err(format!("T{tx} aborted writing {key}")),
    }
}

fn fuzzing() -> Outcome {
    let start = Instant::now();
    let checked = fuzz(0, 1000, &[1, 2, 4]).map_err(|f| format!("seed {} W={}: {}", f.seed, f.workers, f.reason))?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(120), format!("took {took:?}"))?;
    Ok(format!("{checked} batches, 0 failures, {took:.1?}"))
}

fn table_txs() -> Vec<Arc<Transaction>> {
    let procs = [
        vec![ScriptOp::Write(k("D"), WriteExpr::Const(3)), ScriptOp::Write(k("D"), WriteExpr::Const(5))],
        vec![ScriptOp::Read(k("D")), ScriptOp::Write(k("D"), WriteExpr::ReadsPlus(-3))],
        vec![ScriptOp::Read(k("D"))],
    ];
    procs
        .into_iter()
        .enumerate()
        .map(|(i, ops)| Arc::new(Transaction::new(0, i as u64, Procedure::Script(ops), 1).unwrap()))
        .collect()
}

/// T1 writes D=3 then D=5; T2 reads D and writes D-3; T3 reads D. T2 and T3
/// read T1's first value, the rewrite at step 5 aborts both, and the final
/// serial order is T1, T3, T2 with D=2.
fn three_transaction_table() -> Outcome {
    let snap = State::from_iter([(k("D"), 3)]);
    let mut g = DepGraph::new(&snap);
    g.begin(t(1)).map_err(|e| e.to_string())?;
    wr(&mut g, 1, "D", 3)?;
    g.begin(t(2)).map_err(|e| e.to_string())?;
    ensure(rd(&mut g, 2, "D")? == 3, "T2 should read 3")?;
    g.begin(t(3)).map_err(|e| e.to_string())?;
    ensure(rd(&mut g, 3, "D")? == 3, "T3 should read 3")?;
    ensure(
        g.edges() == edges(vec![edge(None, 1, "D"), edge(Some(1), 2, "D"), edge(Some(1), 3, "D")]),
        "dependencies after the reads",
    )?;
    ensure(g.finalize(t(3), 3) == Ok(FinalizeOutcome::Waiting), "T3 waits for T1")?;
    wr(&mut g, 1, "D", 5)?;
    let ev = g.abort_log().last().cloned().ok_or("no abort at the rewrite")?;
    ensure(ev.removed == BTreeSet::from([t(2), t(3)]), format!("abort set {:?}", ev.removed))?;
    ensure(ev.cause == AbortCause::StaleRead, "abort cause")?;
    g.take_requeues();
    g.begin(t(3)).map_err(|e| e.to_string())?;
    ensure(rd(&mut g, 3, "D")? == 5, "T3 rerun reads 5")?;
    ensure(g.finalize(t(1), 0) == Ok(FinalizeOutcome::Committed(0)), "T1 commits first")?;
    ensure(g.finalize(t(3), 5) == Ok(FinalizeOutcome::Committed(1)), "T3 commits second")?;
    ensure(g.write(t(2), &k("D"), 0) == Ok(Access::Aborted), "T2 learns of its abort")?;
    g.begin(t(2)).map_err(|e| e.to_string())?;
    ensure(rd(&mut g, 2, "D")? == 5, "T2 rerun reads 5")?;
    wr(&mut g, 2, "D", 2)?;
    ensure(g.finalize(t(2), 0) == Ok(FinalizeOutcome::Committed(2)), "T2 commits last")?;
    ensure(g.committed_order() == vec![t(1), t(3), t(2)], "order")?;
    ensure(g.reexecutions() == 2, format!("re-executions {}", g.reexecutions()))?;

    // the same interleaving driven through the executor
    let batch = table_txs();
    let cfg = ExecutorConfig { workers: 3, op_cost: 1, exclusive_after: 10 };
    let (res, stats) =
        preplay_scripted(&batch, &snap, cfg, &[0, 1, 2, 2, 0, 2, 0, 2, 1, 1, 1, 1]).map_err(|e| e.to_string())?;
    let order: Vec<TxId> = res.order().collect();
    ensure(order == vec![batch[0].id, batch[2].id, batch[1].id], "executor order")?;
    ensure(res.final_writes().get(&k("D")) == Some(&2), "executor final D")?;
    ensure(stats.reexecutions == 2, "executor re-executions")?;
    let refs: Vec<&Transaction> = batch.iter().map(|t| &**t).collect();
    ensure(is_serializable(&res, &refs, &snap), "executor schedule replays")?;
    Ok("abort {T2,T3} at step 5, 2 re-executions, order [T1,T3,T2], D=2".into())
}

fn graph_shapes() -> Outcome {
    // a first write attaches after every reader on the frontier
    let snap = State::from_iter([(k("A"), 1)]);
    let mut g = DepGraph::new(&snap);
    for i in 1..=4 {
        g.begin(t(i)).unwrap();
    }
    rd(&mut g, 1, "A")?;
    rd(&mut g, 2, "A")?;
    wr(&mut g, 4, "A", 3)?;
    ensure(
        g.edges() == edges(vec![edge(None, 1, "A"), edge(None, 2, "A"), edge(Some(1), 4, "A"), edge(Some(2), 4, "A")]),
        "frontier write edges",
    )?;

    // a read takes the latest write and orders the other writers before it
    let snap = State::default();
    let mut g = DepGraph::new(&snap);
    for i in 1..=4 {
        g.begin(t(i)).unwrap();
    }
    wr(&mut g, 1, "A", 1)?;
    wr(&mut g, 2, "A", 2)?;
    wr(&mut g, 3, "A", 3)?;
    ensure(rd(&mut g, 4, "A")? == 3, "latest write")?;
    ensure(
        g.edges()
            == edges(vec![
                edge(None, 1, "A"),
                edge(None, 2, "A"),
                edge(Some(1), 3, "A"),
                edge(Some(2), 3, "A"),
                edge(Some(3), 4, "A"),
            ]),
        "path edges",
    )?;
    ensure(rd(&mut g, 4, "A")? == 3, "repeat read")?;

    // a cycle is avoided by reading from an ancestor
    let snap = State::from_iter([(k("A"), 10), (k("B"), 20), (k("C"), 30)]);
    let mut g = DepGraph::new(&snap);
    g.begin(t(1)).unwrap();
    g.begin(t(3)).unwrap();
    rd(&mut g, 1, "A")?;
    wr(&mut g, 3, "A", 11)?;
    wr(&mut g, 3, "B", 7)?;
    ensure(rd(&mut g, 1, "B")? == 20, "ancestor read")?;
    ensure(g.abort_log().is_empty(), "no abort when an ancestor works")?;

    // ...and when no ancestor works, only the reader aborts
    let mut g = DepGraph::new(&snap);
    for i in 1..=3 {
        g.begin(t(i)).unwrap();
    }
    wr(&mut g, 2, "B", 5)?;
    wr(&mut g, 2, "C", 1)?;
    rd(&mut g, 1, "A")?;
    wr(&mut g, 3, "A", 11)?;
    rd(&mut g, 1, "C")?;
    wr(&mut g, 3, "B", 9)?;
    ensure(g.read(t(1), &k("B")) == Ok(Access::Aborted), "reader aborts")?;
    let ev = g.abort_log().last().cloned().ok_or("no abort")?;
    ensure(ev.removed == BTreeSet::from([t(1)]) && ev.cause == AbortCause::ReadConflict, "singleton abort")?;

    // a rewrite cascades through everything that read it
    let snap = State::default();
    let mut g = DepGraph::new(&snap);
    for i in 1..=3 {
        g.begin(t(i)).unwrap();
    }
    wr(&mut g, 1, "A", 1)?;
    rd(&mut g, 2, "A")?;
    wr(&mut g, 2, "X", 4)?;
    rd(&mut g, 3, "X")?;
    wr(&mut g, 1, "A", 2)?;
    let ev = g.abort_log().last().cloned().ok_or("no abort")?;
    ensure(ev.removed == BTreeSet::from([t(2), t(3)]), "cascade set")?;
    ensure(g.edges() == vec![edge(None, 1, "A")], "graph after cascade")?;
    Ok("frontier write, latest-write paths, ancestor read, singleton abort, cascade {T2,T3}".into())
}

fn dag_safety() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for seed in 0..25u64 {
        for n in [4, 7] {
            for adv in Adversary::ALL {
                safety_case(seed, n, adv).map_err(|e| format!("seed {seed} n={n} {adv:?}: {e}"))?;
                runs += 1;
            }
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(300), format!("took {took:?}"))?;
    Ok(format!("{runs} runs, 0 violations, {took:.1?}"))
}

fn pair_order() -> Outcome {
    let variants = pair_variants();
    let mut orders = BTreeSet::new();
    for v in &variants {
        let o = pair_case(*v).map_err(|e| format!("{v:?}: {e}"))?;
        orders.insert(matches!(o.order, PairOrder::SingleFirst));
    }
    ensure(orders.len() == 2, "only one order was ever produced")?;
    Ok(format!("{} timing variants, 0 disagreements, both orders reached", variants.len()))
}

const CONVERT_LOG: [&str; 18] = [
    "COMMIT leader=1 blocks=5",
    "r3 s2 CONVERT S10 leader-conflict",
    "r4 s2 CONVERT S13 prior-leader-conflict",
    "r4 s3 CONVERT S14 prior-leader-conflict",
    "COMMIT leader=3 blocks=8",
    "CROSS C0",
    "r5 s2 PREPLAY S17",
    "r6 s3 CONVERT S22 prior-leader-conflict",
    "COMMIT leader=5 blocks=7",
    "SINGLE S17",
    "CROSS S10 leader-conflict",
    "CROSS S13 prior-leader-conflict",
    "CROSS S14 prior-leader-conflict",
    "DEFER C2 missing=s0",
    "r7 s1 CONVERT S4 leader-timeout",
    "COMMIT leader=7 blocks=9",
    "CROSS C2",
    "CROSS S22 prior-leader-conflict",
];

const SKIP_LOG: [&str; 16] = [
    "COMMIT leader=1 blocks=5",
    "r3 s2 SKIP blocking=[3] deferred=[]",
    "r4 s2 SKIP blocking=[3] deferred=[]",
    "r4 s3 SKIP blocking=[3] deferred=[]",
    "COMMIT leader=3 blocks=8",
    "CROSS C0",
    "r5 s2 PREPLAY S10 S13 S17",
    "r5 s3 PREPLAY S14",
    "r6 s3 PREPLAY S22",
    "COMMIT leader=5 blocks=7",
    "SINGLE S10 S13 S17",
    "r7 s1 CONVERT S4 leader-timeout",
    "COMMIT leader=7 blocks=9",
    "SINGLE S14",
    "SINGLE S22",
    "CROSS C2",
];

fn rule_logs() -> Outcome {
    let got = run_rule_script(&conversion_script(ConflictPolicy::Convert));
    ensure(got == CONVERT_LOG, format!("conversion log differs: {got:#?}"))?;
    let got = run_rule_script(&conversion_script(ConflictPolicy::SkipUntilFinalized));
    ensure(got == SKIP_LOG, format!("skip log differs: {got:#?}"))?;
    Ok("conversion and skip-recovery logs match exactly".into())
}

fn reconfiguration() -> Outcome {
    for seed in 1..=5 {
        rotation_check(seed).map_err(|e| format!("rotation seed {seed}: {e}"))?;
    }
    for seed in 0..50 {
        let r = censorship_case(seed).map_err(|e| format!("censorship seed {seed}: {e}"))?;
        ensure(r.reconfigs > 0, format!("censorship seed {seed}: no rotation"))?;
    }
    Ok("rotation events exact for 5 seeds; 50 censorship runs safe and live".into())
}

fn validation() -> Outcome {
    let t = validation_trials(500, 11);
    ensure(t.honest == 500 && t.honest_valid == 500, format!("honest {}/{}", t.honest_valid, t.honest))?;
    ensure(t.tampered == 500 && t.tampered_invalid == 500, format!("tampered {}/{}", t.tampered_invalid, t.tampered))?;
    Ok("500/500 honest valid, 500/500 tampered invalid".into())
}

const REPS: u64 = 20;

fn reexec_comparison() -> Outcome {
    let mut setup = ReexecSetup::default();
    setup.threads.op_delay = Duration::from_micros(100);
    let samples = (1..=REPS)
        .map(|s| reexec_trial(&setup, s))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(|e| format!("{e:#}"))?;
    let ce = mean(samples.iter().map(|s| s.ce as f64));
    let occ = mean(samples.iter().map(|s| s.occ as f64));
    let tpl = mean(samples.iter().map(|s| s.tpl as f64));
    let line = format!("mean re-executions over {REPS} batches: CE {ce:.1}, OCC {occ:.1}, 2PL-No-Wait {tpl:.1}");
    ensure(ce <= occ && ce <= 0.7 * tpl, line.clone())?;
    Ok(line)
}

fn base(seed: u64) -> RunConfig {
    RunConfig { txs: 10_000, cross_pct: 10.0, seed, ..Default::default() }
}

fn mean_tps(cfgs: impl Iterator<Item = RunConfig>) -> Result<f64, String> {
    let v = cfgs.map(|c| simulate(&c).map(|r| r.tps).map_err(|e| format!("{e:#}"))).collect::<Result<Vec<_>, _>>()?;
    Ok(mean(v))
}

fn speedup() -> Outcome {
    let mut parts = Vec::new();
    for n in [4, 8] {
        let tb = mean_tps((1..=REPS).map(|s| RunConfig { replicas: n, ..base(s) }))?;
        let ts = mean_tps((1..=REPS).map(|s| RunConfig { replicas: n, protocol: ProtocolArg::TuskSerial, ..base(s) }))?;
        parts.push(format!("n={n}: {tb:.0} vs {ts:.0} tps"));
        ensure(tb > ts, parts.join("; "))?;
    }
    Ok(parts.join("; "))
}

fn cross_sweep() -> Outcome {
    let points = [0.0, 25.0, 50.0, 75.0, 100.0];
    let mut means = Vec::new();
    for p in points {
        means.push(mean_tps((1..=REPS).map(|s| RunConfig { cross_pct: p, ..base(s) }))?);
    }
    let line = points.iter().zip(&means).map(|(p, m)| format!("{p}%: {m:.0}")).collect::<Vec<_>>().join(", ");
    // five percent of slack for run-to-run noise
    ensure(means.windows(2).all(|w| w[1] <= w[0] * 1.05), format!("not non-increasing: {line}"))?;
    ensure(means[points.len() - 1] > 0.0, "no throughput at 100%")?;
    Ok(line)
}

fn rotation_cost() -> Outcome {
    let fast = mean_tps((1..=REPS).map(|s| RunConfig { k_rotate: 10, ..base(s) }))?;
    let slow = mean_tps((1..=REPS).map(|s| RunConfig { k_rotate: 1000, ..base(s) }))?;
    let line = format!("K'=10: {fast:.0} tps, K'=1000: {slow:.0} tps");
    ensure(fast < slow, line.clone())?;
    Ok(line)
}

fn determinism() -> Outcome {
    let a = simulate(&RunConfig { adversary: thunderbolt::config::AdversaryArg::Crash, k_rotate: 12, ..base(5) })
        .map_err(|e| e.to_string())?;
    let b = simulate(&RunConfig { adversary: thunderbolt::config::AdversaryArg::Crash, k_rotate: 12, ..base(5) })
        .map_err(|e| e.to_string())?;
    ensure(a.render() == b.render(), "workload runs differ")?;
    let (g, w) = rotation_workload(9);
    let x = thunderbolt_core::sim::run(rotation_config(9), g.clone(), w.clone()).map_err(|e| e.to_string())?;
    let y = thunderbolt_core::sim::run(rotation_config(9), g, w).map_err(|e| e.to_string())?;
    ensure(x.render() == y.render(), "rotation runs differ")?;
    Ok(format!("identical reports ({} and {} bytes)", a.render().len(), x.render().len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("1 serializability fuzzing", fuzzing),
        ("2 three-transaction table", three_transaction_table),
        ("3 dependency graph shapes", graph_shapes),
        ("4 DAG safety", dag_safety),
        ("5 cross/single ordering", pair_order),
        ("6 rule-firing logs", rule_logs),
        ("7 reconfiguration", reconfiguration),
        ("8 validation", validation),
        ("9a re-executions", reexec_comparison),
        ("9b speedup over serial", speedup),
        ("9c cross-shard sweep", cross_sweep),
        ("9d rotation cost", rotation_cost),
    ];
    let mut failed = 0;
    let mut run = |name: &str, f: fn() -> Outcome| {
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match r {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{:.1?}]", start.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{:.1?}]", start.elapsed());
            }
        }
    };
    for (name, f) in criteria {
        run(name, f);
    }
    run("10 determinism", determinism);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
