//! Randomized checks shared by the test suites and the command line.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::executor::{committed_txs, preplay, ExecutorConfig, ShardScope};
use crate::model::{BlockKind, DagId, Key, ReplicaId, Round, ShardId, SinglePayload, Transaction};
use crate::oracle::is_serializable;
use crate::procedure::Procedure;
use crate::replica::Misbehavior;
use crate::shard::ConflictPolicy;
use crate::sim::{Fault, ReplicaReport, RunReport, SimConfig};
use crate::state::State;
use crate::validate::{tamper, validate_payload, Tamper};
use crate::workload::{generate, initial_state, random_scripts, SmallBankSpec};

/// A batch the executor scheduled non-serializably (or failed on).
#[derive(Clone, Debug)]
pub struct FuzzFailure {
    pub seed: u64,
    pub workers: usize,
    pub snapshot: State,
    pub batch: Vec<Arc<Transaction>>,
    pub reason: String,
}

/// Batch and snapshot for one fuzz seed: at most 8 transactions over at
/// most 4 keys.
pub fn fuzz_input(seed: u64) -> (State, Vec<Arc<Transaction>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = random_scripts(&mut rng, 8, 4);
    let snapshot = (0..4).map(|i| (Key::from(format!("k{i}").as_str()), rng.random_range(-20..20))).collect();
    (snapshot, batch)
}

/// Preplays `batch` on `workers` executors and replays the schedule
/// serially.
pub fn check_batch(batch: &[Arc<Transaction>], snapshot: &State, workers: usize) -> Result<(), String> {
    let cfg = ExecutorConfig { workers, op_cost: 1, exclusive_after: 10 };
    let (res, _) = preplay(batch, snapshot, cfg, None).map_err(|e| format!("{e}"))?;
    if res.len() != batch.len() {
        return Err(format!("{} of {} transactions committed", res.len(), batch.len()));
    }
    let refs: Vec<&Transaction> = batch.iter().map(|t| t.as_ref()).collect();
    if !is_serializable(&res, &refs, snapshot) {
        return Err(String::from("schedule differs from serial replay"));
    }
    Ok(())
}

pub fn fuzz_case(seed: u64, workers: usize) -> Result<(), FuzzFailure> {
    let (snapshot, batch) = fuzz_input(seed);
    check_batch(&batch, &snapshot, workers).map_err(|reason| FuzzFailure { seed, workers, snapshot, batch, reason })
}

/// Drops transactions one at a time while the failure persists.
pub fn minimize(mut f: FuzzFailure) -> FuzzFailure {
    let mut i = 0;
    while i < f.batch.len() && f.batch.len() > 1 {
        let mut smaller = f.batch.clone();
        smaller.remove(i);
        match check_batch(&smaller, &f.snapshot, f.workers) {
            Err(reason) => {
                f.batch = smaller;
                f.reason = reason;
            }
            Ok(()) => i += 1,
        }
    }
    f
}

/// Outcome counts of the validation trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValidationTally {
    pub honest: usize,
    pub honest_valid: usize,
    pub tampered: usize,
    pub tampered_invalid: usize,
}

/// Preplays `count` single-shard SmallBank batches, validates each, then
/// validates one single-field corruption of each.
pub fn validation_trials(count: usize, seed: u64) -> ValidationTally {
    let n = 4;
    let shard = ShardId(0);
    let base = initial_state(200);
    let mut tally = ValidationTally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let spec = SmallBankSpec {
            accounts: 200,
            count: 120,
            shards: n,
            seed: seed.wrapping_mul(7919).wrapping_add(i as u64),
            ..SmallBankSpec::default()
        };
        let batch: Vec<Arc<Transaction>> =
            generate(&spec).into_iter().filter(|t| t.sids == [shard]).take(30).map(Arc::new).collect();
        let workers = 1 + i % 8;
        let scope = ShardScope { shard, n };
        let cfg = ExecutorConfig { workers, ..ExecutorConfig::default() };
        let Ok((result, _)) = preplay(&batch, &base, cfg, Some(scope)) else { continue };
        let payload = SinglePayload { txs: committed_txs(&batch, &result), result };
        tally.honest += 1;
        if validate_payload(&payload, Some(scope), &base).is_ok() {
            tally.honest_valid += 1;
        }
        let kind = Tamper::ALL[i % Tamper::ALL.len()];
        if let Some(bad) = tamper(&payload, kind, rng.random_range(0..payload.txs.len().max(1))) {
            tally.tampered += 1;
            if validate_payload(&bad, Some(scope), &base).is_err() {
                tally.tampered_invalid += 1;
            }
        }
    }
    tally
}

/// Network adversaries of the safety sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adversary {
    None,
    Crash,
    Delay,
    Halt,
}

impl Adversary {
    pub const ALL: [Adversary; 4] = [Adversary::None, Adversary::Crash, Adversary::Delay, Adversary::Halt];
}

/// A small run with up to f replicas under `adv`, chosen from `seed`.
pub fn adversarial_config(seed: u64, n: u32, adv: Adversary) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5afe);
    let mut cfg = SimConfig {
        seed,
        horizon: 3_000_000,
        client_timeout: 400_000,
        submit_interval: Some(300),
        ..SimConfig::default()
    };
    cfg.protocol.n = n;
    cfg.protocol.batch = 16;
    cfg.protocol.k = 4;
    cfg.protocol.k_rotate = 40;
    let f = cfg.f();
    let faulty = if adv == Adversary::None { 0 } else { rng.random_range(1..=f) };
    let mut ids: Vec<u32> = (0..n).collect();
    for i in 0..faulty as usize {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
        let r = ReplicaId(ids[i]);
        let fault = match adv {
            Adversary::None => unreachable!(),
            Adversary::Crash => Fault::Crash { at: rng.random_range(0..60_000) },
            Adversary::Delay => Fault::Delay { extra: rng.random_range(2_000..20_000) },
            Adversary::Halt => {
                Fault::HaltProposals { dag: None, from_round: rng.random_range(1..8), except: Vec::new() }
            }
        };
        cfg.faults.push((r, fault));
    }
    cfg
}

/// Runs one adversarial configuration over a small SmallBank workload and
/// checks agreement among honest replicas.
pub fn safety_case(seed: u64, n: u32, adv: Adversary) -> Result<RunReport, String> {
    let cfg = adversarial_config(seed, n, adv);
    let spec = SmallBankSpec { accounts: 100, count: 60, shards: n, cross_pct: 20.0, seed, ..SmallBankSpec::default() };
    let report = crate::sim::run(cfg, initial_state(spec.accounts), generate(&spec)).map_err(|e| format!("{e}"))?;
    report.check_agreement()?;
    Ok(report)
}

/// One timing variant of the conflicting single/cross pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairVariant {
    pub single_at: u64,
    pub cross_at: u64,
    pub round_timeout: u64,
    pub policy: ConflictPolicy,
    pub seed: u64,
}

/// Grid of submission offsets, timeouts (including ones short enough to
/// fire spuriously), both policies and a few delay seeds.
pub fn pair_variants() -> Vec<PairVariant> {
    let offsets = [0u64, 2_000, 5_000, 9_000, 14_000, 20_000, 30_000, 45_000];
    let mut out = Vec::new();
    for &single_at in &offsets {
        for &cross_at in &offsets {
            for round_timeout in [300, 2_000, 8_000] {
                for policy in [ConflictPolicy::Convert, ConflictPolicy::SkipUntilFinalized] {
                    for seed in 0..2 {
                        out.push(PairVariant { single_at, cross_at, round_timeout, policy, seed });
                    }
                }
            }
        }
    }
    out
}

/// Which of the pair each honest replica applied first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairOrder {
    SingleFirst,
    CrossFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairOutcome {
    pub order: PairOrder,
    /// Transactions converted to the cross-shard path, over honest replicas.
    pub converted: u64,
    pub skips: u64,
}

/// Runs one variant; `Err` if honest replicas disagree or the pair did not
/// commit.
pub fn pair_case(v: PairVariant) -> Result<PairOutcome, String> {
    let n = 4;
    let a = (0..).find(|x| crate::workload::account_shard(*x, n) == ShardId(1)).expect("account");
    let a2 = (a + 1..).find(|x| crate::workload::account_shard(*x, n) == ShardId(1)).expect("account");
    let b = (0..).find(|x| crate::workload::account_shard(*x, n) == ShardId(2)).expect("account");
    let single = Transaction::new(1, 0, Procedure::SendPayment { from: a, to: a2, amount: 7 }, n)
        .expect("keys")
        .with_submit_time(v.single_at);
    let cross = Transaction::new(2, 0, Procedure::SendPayment { from: b, to: a, amount: 5 }, n)
        .expect("keys")
        .with_submit_time(v.cross_at);
    let mut cfg = SimConfig {
        seed: v.seed,
        horizon: 2_000_000,
        client_timeout: 300_000,
        submit_interval: None,
        ..SimConfig::default()
    };
    cfg.protocol.n = n;
    cfg.protocol.round_timeout = v.round_timeout;
    cfg.protocol.policy = v.policy;
    let ids = (single.id, cross.id);
    let report = crate::sim::Simulation::new(cfg, initial_state(8), alloc::vec![single, cross])
        .map_err(|e| format!("{e}"))?
        .run();
    report.check_agreement()?;
    if report.committed != 2 {
        return Err(format!("{} of 2 committed", report.committed));
    }
    let mut seen = None;
    for r in report.honest() {
        let pos = |t| r.applied.iter().position(|x| *x == t);
        let (Some(s), Some(c)) = (pos(ids.0), pos(ids.1)) else { continue };
        let o = if s < c { PairOrder::SingleFirst } else { PairOrder::CrossFirst };
        if seen.is_some_and(|p| p != o) {
            return Err(format!("replica {} applied the pair in the other order", r.id.0));
        }
        seen = Some(o);
    }
    let order = seen.ok_or_else(|| String::from("no replica applied both"))?;
    Ok(PairOutcome {
        order,
        converted: report.honest().map(|r| r.converted).sum(),
        skips: report.honest().map(|r| r.skips).sum(),
    })
}

/// Reconfiguration lines (`SHIFT`, `ENDING`, `NEWDAG`) of one replica's log
/// without timestamps.
pub fn reconfig_events(r: &ReplicaReport) -> Vec<String> {
    r.log
        .iter()
        .filter_map(|l| l.split_once(' ').map(|(_, rest)| rest))
        .filter(|l| l.starts_with("SHIFT") || l.starts_with("ENDING") || l.starts_with("NEWDAG"))
        .map(String::from)
        .collect()
}

/// Checks the rotation scenario event by event for one seed.
pub fn rotation_check(seed: u64) -> Result<RunReport, String> {
    let (genesis, workload) = crate::scenario::rotation_workload(seed);
    let report =
        crate::sim::run(crate::scenario::rotation_config(seed), genesis, workload).map_err(|e| format!("{e}"))?;
    report.check_agreement()?;
    if report.committed != report.submitted {
        return Err(format!("{} of {} committed", report.committed, report.submitted));
    }
    for r in report.honest() {
        let ev = reconfig_events(r);
        let shard = r.id.0;
        let own_shift = if shard == 3 {
            String::from("SHIFT dag=1 round=5 shard=3 reason=echo")
        } else {
            format!("SHIFT dag=1 round=4 shard={shard} reason=silent:0")
        };
        let dag2_shard = (shard + 3) % 4;
        let want = [
            own_shift,
            String::from("ENDING dag=1 round=7"),
            String::from("NEWDAG id=2 ending=7 assignment=[1, 2, 3, 0]"),
            format!("SHIFT dag=2 round=6 shard={dag2_shard} reason=period"),
            String::from("ENDING dag=2 round=7"),
        ];
        if ev.len() < want.len() || ev[..want.len()] != want {
            return Err(format!("replica {} events {:?}", r.id.0, ev));
        }
        // keeps proposing after its own Shift and never skips a round
        for dag in [DagId(1), DagId(2)] {
            let rounds: Vec<Round> = r.proposed.iter().filter(|p| p.0 == dag).map(|p| p.1).collect();
            if rounds.iter().enumerate().any(|(i, x)| *x != i as Round) {
                return Err(format!("replica {} proposal rounds {rounds:?} in {dag}", r.id.0));
            }
            let shift = r.proposed.iter().find(|p| p.0 == dag && p.2 == BlockKind::Shift).map(|p| p.1);
            match shift {
                Some(s) if rounds.last().is_some_and(|l| *l > s) => {}
                _ => return Err(format!("replica {} stopped proposing after its shift in {dag}", r.id.0)),
            }
        }
    }
    Ok(report)
}

/// A censoring replica under periodic rotation: every transaction must still
/// commit exactly once.
pub fn censorship_case(seed: u64) -> Result<RunReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xce45);
    let n = if rng.random_bool(0.5) { 4 } else { 7 };
    let mut cfg = SimConfig {
        seed,
        horizon: 4_000_000,
        client_timeout: 150_000,
        submit_interval: Some(500),
        ..SimConfig::default()
    };
    cfg.protocol.n = n;
    cfg.protocol.batch = 16;
    cfg.protocol.k = 3;
    cfg.protocol.k_rotate = rng.random_range(6..20);
    let f = cfg.f();
    let mut ids: Vec<u32> = (0..n).collect();
    for i in 0..f as usize {
        let j = rng.random_range(i..ids.len());
        ids.swap(i, j);
        cfg.faults.push((ReplicaId(ids[i]), Fault::Behave(Misbehavior::Censor(None))));
    }
    let spec = SmallBankSpec { accounts: 100, count: 50, shards: n, cross_pct: 20.0, seed, ..SmallBankSpec::default() };
    let report = crate::sim::run(cfg, initial_state(spec.accounts), generate(&spec)).map_err(|e| format!("{e}"))?;
    report.check_agreement()?;
    if report.committed != report.submitted {
        return Err(format!("{} of {} committed", report.committed, report.submitted));
    }
    Ok(report)
}
