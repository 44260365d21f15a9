//! Seeded fuzzing of the concurrent executor against serial replay.

use std::fmt::Write as _;

use thunderbolt_core::check::{fuzz_case, minimize, FuzzFailure};

/// Seeds `start..start + count`, each at every worker count. Stops at the
/// first failure and returns it minimized.
pub fn fuzz(start: u64, count: u64, workers: &[usize]) -> Result<u64, Box<FuzzFailure>> {
    let mut checked = 0;
    for seed in start..start + count {
        for w in workers {
            fuzz_case(seed, *w).map_err(|f| Box::new(minimize(f)))?;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Human-readable reproduction of a failure; the batch uses the workload
/// file format.
pub fn witness(f: &FuzzFailure) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# seed {} workers {}: {}", f.seed, f.workers, f.reason);
    let _ = writeln!(s, "# reproduce with: fuzz --seed {} --count 1 --workers {}", f.seed, f.workers);
    for (k, v) in f.snapshot.iter() {
        let _ = writeln!(s, "# snapshot {k}={v}");
    }
    for t in &f.batch {
        match crate::workload_io::format_tx(t) {
            Ok(line) => s.push_str(&line),
            Err(_) => {
                let _ = write!(s, "# {t:?}");
            }
        }
        s.push('\n');
    }
    s
}
