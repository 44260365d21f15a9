//! Metrics rows and run artifacts.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use thunderbolt_core::sim::RunReport;

use crate::config::{ProtocolArg, RunConfig};

pub const CSV_HEADER: &str =
    "protocol,replicas,f,executors,batch,theta,pr,cross_pct,k,k_rotate,seed,committed,tps,avg_latency_s,reexec,reconfigs";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub protocol: &'static str,
    pub replicas: u32,
    pub f: u32,
    pub executors: usize,
    pub batch: usize,
    pub theta: f64,
    pub pr: f64,
    pub cross_pct: f64,
    pub k: u64,
    pub k_rotate: u64,
    pub seed: u64,
    pub committed: usize,
    pub tps: f64,
    pub avg_latency_s: f64,
    pub reexec: u64,
    pub reconfigs: u64,
}

impl MetricsRow {
    pub fn new(cfg: &RunConfig, r: &RunReport) -> Self {
        Self {
            protocol: match cfg.protocol {
                ProtocolArg::Thunderbolt => "thunderbolt",
                ProtocolArg::TuskSerial => "tusk-serial",
            },
            replicas: cfg.replicas,
            f: cfg.f(),
            executors: cfg.executors,
            batch: cfg.batch,
            theta: cfg.theta,
            pr: cfg.pr,
            cross_pct: cfg.cross_pct,
            k: cfg.k,
            k_rotate: cfg.k_rotate,
            seed: cfg.seed,
            committed: r.committed,
            tps: r.tps,
            avg_latency_s: r.avg_latency_s,
            reexec: r.reexec,
            reconfigs: r.reconfigs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

/// Writes `rows` with a header (CSV) or one object per line (JSONL).
pub fn write_rows(out: impl Write, rows: &[MetricsRow], format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut out = out;
            for r in rows {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Writes the metrics file, one log per replica and the full report text.
pub fn write_artifacts(dir: &Path, row: &MetricsRow, report: &RunReport, format: Format) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = match format {
        Format::Csv => "metrics.csv",
        Format::Jsonl => "metrics.jsonl",
    };
    write_rows(std::fs::File::create(dir.join(name))?, std::slice::from_ref(row), format)?;
    for r in &report.replicas {
        std::fs::write(dir.join(format!("replica-{}.log", r.id.0)), r.log.join("\n") + "\n")?;
    }
    std::fs::write(dir.join("report.txt"), report.render())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> MetricsRow {
        MetricsRow::new(&RunConfig::default(), &RunReport { committed: 3, tps: 1.5, ..Default::default() })
    }

    #[test]
    fn csv_header_is_stable() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[row()], Format::Csv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("thunderbolt,4,1,8,300,0.85,0.5,0.0,2,"));
    }

    #[test]
    fn jsonl_has_one_object_per_row() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[row(), row()], Format::Jsonl).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["committed"], 3);
        assert_eq!(v["protocol"], "thunderbolt");
    }
}
