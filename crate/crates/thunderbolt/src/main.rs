use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use thunderbolt::bench::{mean, reexec_trial, simulate, ReexecSetup};
use thunderbolt::config::{AdversaryArg, PolicyArg, ProtocolArg, RunConfig};
use thunderbolt::report::{write_artifacts, write_rows, Format, MetricsRow};
use thunderbolt::scenario::{run_scenario, Scenario};

#[derive(Parser)]
#[command(name = "thunderbolt", version, about = "Sharded DAG protocol simulator and benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a replica group, or replay a scripted scenario.
    Run(RunArgs),
    /// Check random batches of the concurrent executor against serial replay.
    Fuzz(FuzzArgs),
    /// Compare re-executions of the three concurrent executors on real threads.
    Reexec(ReexecArgs),
    /// Write the generated workload as a line-oriented file.
    Workload {
        #[command(flatten)]
        flags: RunFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run settings; each flag overrides the configuration file.
#[derive(Args, Default)]
struct RunFlags {
    /// TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long)]
    replicas: Option<u32>,
    /// Tolerated faults; must equal (replicas - 1) / 3.
    #[arg(long)]
    faults: Option<u32>,
    #[arg(long, value_enum)]
    adversary: Option<AdversaryArg>,
    #[arg(long)]
    executors: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    pr: Option<f64>,
    #[arg(long)]
    cross_pct: Option<f64>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    k_rotate: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    txs: Option<usize>,
    #[arg(long)]
    accounts: Option<u64>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long)]
    parallel_exec: bool,
    /// Replay this workload file instead of generating one.
    #[arg(long)]
    workload: Option<PathBuf>,
}

macro_rules! overlay {
    ($flags:expr, $cfg:expr, $($f:ident),*) => {
        $(if let Some(v) = $flags.$f.clone() { $cfg.$f = v; })*
    };
}

impl RunFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        overlay!(
            self, c, protocol, replicas, adversary, executors, batch, theta, pr, cross_pct, k, k_rotate, seed, txs,
            accounts, policy
        );
        if self.faults.is_some() {
            c.faults = self.faults;
        }
        if self.workload.is_some() {
            c.workload = self.workload.clone();
        }
        c.parallel_exec |= self.parallel_exec;
        c.check()?;
        Ok(c)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: RunFlags,
    /// Replay a scripted scenario instead of a workload.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    /// Directory for metrics, per-replica logs and the full report.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct FuzzArgs {
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4])]
    workers: Vec<usize>,
    /// Write the minimized failing batch here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Disable read path enforcement in the concurrency controller.
    #[cfg(feature = "mutation")]
    #[arg(long)]
    inject_bug: bool,
}

#[derive(Args)]
struct ReexecArgs {
    #[arg(long, default_value_t = 20)]
    reps: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    workers: usize,
    #[arg(long, default_value_t = 300)]
    batch: usize,
    #[arg(long, default_value_t = 0.85)]
    theta: f64,
    #[arg(long, default_value_t = 0.5)]
    pr: f64,
    /// Work per read or write, outside any shared lock.
    #[arg(long, default_value_t = 200)]
    op_delay_us: u64,
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let cfg = a.flags.resolve()?;
    if let Some(s) = a.scenario {
        let lines = run_scenario(s, cfg.seed)?;
        let text = lines.join("\n") + "\n";
        match &a.out {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("scenario.log"), &text)?;
            }
            None => print!("{text}"),
        }
        return Ok(ExitCode::SUCCESS);
    }
    let report = simulate(&cfg)?;
    let row = MetricsRow::new(&cfg, &report);
    match &a.out {
        Some(dir) => write_artifacts(dir, &row, &report, a.format)?,
        None => write_rows(std::io::stdout().lock(), &[row], a.format)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_fuzz(a: FuzzArgs) -> Result<ExitCode> {
    #[cfg(feature = "mutation")]
    thunderbolt_core::depgraph::SKIP_READ_PATHS.store(a.inject_bug, std::sync::atomic::Ordering::Relaxed);
    match thunderbolt::fuzz::fuzz(a.seed, a.count, &a.workers) {
        Ok(n) => {
            println!("{n} batches passed");
            Ok(ExitCode::SUCCESS)
        }
        Err(f) => {
            let w = thunderbolt::fuzz::witness(&f);
            eprint!("{w}");
            if let Some(p) = &a.out {
                std::fs::write(p, &w).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_reexec(a: ReexecArgs) -> Result<ExitCode> {
    let mut setup = ReexecSetup { batch: a.batch, theta: a.theta, p_read: a.pr, ..Default::default() };
    setup.threads.workers = a.workers;
    setup.threads.op_delay = Duration::from_micros(a.op_delay_us);
    let samples = (a.seed..a.seed + a.reps).map(|s| reexec_trial(&setup, s)).collect::<Result<Vec<_>>>()?;
    println!("executor,mean_reexec");
    println!("ce,{:.2}", mean(samples.iter().map(|s| s.ce as f64)));
    println!("occ,{:.2}", mean(samples.iter().map(|s| s.occ as f64)));
    println!("2pl-no-wait,{:.2}", mean(samples.iter().map(|s| s.tpl as f64)));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Fuzz(a) => cmd_fuzz(a),
        Cmd::Reexec(a) => cmd_reexec(a),
        Cmd::Workload { flags, out } => (|| {
            let cfg = flags.resolve()?;
            let txs = thunderbolt_core::workload::generate(&cfg.spec());
            std::fs::write(&out, thunderbolt::workload_io::dump(&txs)?)?;
            Ok(ExitCode::SUCCESS)
        })(),
    };
    r.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
