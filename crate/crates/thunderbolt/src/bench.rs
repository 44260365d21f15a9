//! Drivers for the comparisons: re-executions of the three concurrent
//! executors on one batch, and modelled throughput of whole runs.

use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Result};
use thunderbolt_core::oracle::is_serializable;
use thunderbolt_core::sim::{RunReport, Simulation};
use thunderbolt_core::workload::{generate, initial_state, SmallBankSpec};
use thunderbolt_core::Transaction;

use crate::backend::ParallelBackend;
use crate::baselines::{occ_execute, tpl_nowait_execute, verify};
use crate::config::RunConfig;
use crate::threaded::{ce_execute, ThreadConfig};

/// Re-executions of each executor on the same batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ReexecSample {
    pub ce: u64,
    pub occ: u64,
    pub tpl: u64,
}

#[derive(Clone, Copy, Debug)]
pub struct ReexecSetup {
    pub accounts: u64,
    pub theta: f64,
    pub p_read: f64,
    pub batch: usize,
    pub threads: ThreadConfig,
}

impl Default for ReexecSetup {
    fn default() -> Self {
        Self {
            accounts: 10_000,
            theta: 0.85,
            p_read: 0.5,
            batch: 300,
            threads: ThreadConfig { workers: 16, op_delay: Duration::from_micros(200), ..Default::default() },
        }
    }
}

/// Runs one batch through all three executors and checks each outcome
/// against serial replay.
pub fn reexec_trial(setup: &ReexecSetup, seed: u64) -> Result<ReexecSample> {
    let spec = SmallBankSpec {
        accounts: setup.accounts,
        theta: setup.theta,
        p_read: setup.p_read,
        count: setup.batch,
        seed,
        ..Default::default()
    };
    let batch: Vec<Arc<Transaction>> = generate(&spec).into_iter().map(Arc::new).collect();
    let snap = initial_state(setup.accounts);
    let threads = ThreadConfig { seed, ..setup.threads };
    let (res, ce) = ce_execute(&batch, &snap, &threads)?;
    let refs: Vec<&Transaction> = batch.iter().map(|t| &**t).collect();
    if !is_serializable(&res, &refs, &snap) {
        return Err(anyhow!("threaded executor produced a non-serializable schedule (seed {seed})"));
    }
    let occ = occ_execute(&batch, &snap, &threads);
    verify(&occ, &batch, &snap).map_err(|e| anyhow!("optimistic executor: {e}"))?;
    let tpl = tpl_nowait_execute(&batch, &snap, &threads);
    verify(&tpl, &batch, &snap).map_err(|e| anyhow!("locking executor: {e}"))?;
    Ok(ReexecSample { ce: ce.reexecutions, occ: occ.reexecutions, tpl: tpl.reexecutions })
}

/// Runs the simulation described by `cfg`.
pub fn simulate(cfg: &RunConfig) -> Result<RunReport> {
    cfg.check()?;
    let txs = match &cfg.workload {
        Some(path) => crate::workload_io::load(&std::fs::read_to_string(path)?, cfg.replicas)?,
        None => generate(&cfg.spec()),
    };
    let threads = cfg.executors;
    let parallel = cfg.parallel_exec;
    let sim = Simulation::with_backends(cfg.sim(), initial_state(cfg.accounts), txs, |_| {
        parallel.then(|| Box::new(ParallelBackend { threads }) as Box<_>)
    })?;
    Ok(sim.run())
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}
