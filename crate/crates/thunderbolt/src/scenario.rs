//! Named scripted scenarios with golden event logs.

use anyhow::{anyhow, Result};
use thunderbolt_core::check::{reconfig_events, rotation_check};
use thunderbolt_core::scenario::{conversion_script, run_rule_script};
use thunderbolt_core::shard::ConflictPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    /// Conflicting single-shard transactions converted to the cross-shard path.
    #[value(alias = "fig3")]
    Conversion,
    /// Skip blocks while conflicting leaders are pending, then preplay again.
    #[value(alias = "fig4")]
    SkipRecovery,
    /// A halted, censoring shard proposer rotated out by shift blocks.
    #[value(alias = "fig5")]
    Rotation,
}

/// Event log of `scenario`, one line per event. For rotation, each honest
/// replica's reconfiguration events are listed under its name.
pub fn run_scenario(scenario: Scenario, seed: u64) -> Result<Vec<String>> {
    Ok(match scenario {
        Scenario::Conversion => run_rule_script(&conversion_script(ConflictPolicy::Convert)),
        Scenario::SkipRecovery => run_rule_script(&conversion_script(ConflictPolicy::SkipUntilFinalized)),
        Scenario::Rotation => {
            let report = rotation_check(seed).map_err(|e| anyhow!("rotation scenario failed: {e}"))?;
            let mut out = Vec::new();
            for r in report.honest() {
                out.push(format!("replica {}", r.id.0));
                out.extend(reconfig_events(r).into_iter().map(|l| format!("  {l}")));
            }
            out.push(format!("committed {}/{}", report.committed, report.submitted));
            out
        }
    })
}
