//! Line-oriented workload files, one transaction per line:
//!
//! ```text
//! <client> <seq> <submitted_at> pay <from> <to> <amount>
//! <client> <seq> <submitted_at> bal <account>
//! <client> <seq> <submitted_at> script r:<key> w:<key>=<v> w:<key>=+<v>
//! ```
//!
//! `w:<key>=+<v>` writes the sum of all earlier reads plus `v`. Blank lines
//! and lines starting with `#` are ignored. Keys may not contain whitespace
//! or `=`.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use thunderbolt_core::procedure::{Procedure, ScriptOp, WriteExpr};
use thunderbolt_core::{Key, Transaction};

pub fn format_tx(t: &Transaction) -> Result<String> {
    let mut s = format!("{} {} {} ", t.client, t.seq, t.submitted_at);
    match &t.procedure {
        Procedure::SendPayment { from, to, amount } => write!(s, "pay {from} {to} {amount}")?,
        Procedure::GetBalance { account } => write!(s, "bal {account}")?,
        Procedure::Script(ops) => {
            s.push_str("script");
            for op in ops {
                let (ScriptOp::Read(k) | ScriptOp::Write(k, _)) = op;
                let text = k.to_string();
                if text.is_empty()
                    || text.contains(|c: char| c.is_whitespace() || c == '=')
                    || text.as_bytes() != k.as_bytes()
                {
                    bail!("key {text:?} cannot be written to a workload file");
                }
                match op {
                    ScriptOp::Read(_) => write!(s, " r:{text}")?,
                    ScriptOp::Write(_, WriteExpr::Const(v)) => write!(s, " w:{text}={v}")?,
                    ScriptOp::Write(_, WriteExpr::ReadsPlus(v)) => write!(s, " w:{text}=+{v}")?,
                }
            }
        }
    }
    Ok(s)
}

pub fn dump(txs: &[Transaction]) -> Result<String> {
    let mut out = String::new();
    for t in txs {
        out.push_str(&format_tx(t)?);
        out.push('\n');
    }
    Ok(out)
}

fn parse_line(line: &str, n: u32) -> Result<Transaction> {
    let mut it = line.split_whitespace();
    let mut field = |what: &str| it.next().ok_or_else(|| anyhow!("missing {what}"));
    let client: u32 = field("client")?.parse()?;
    let seq: u64 = field("seq")?.parse()?;
    let at: u64 = field("submit time")?.parse()?;
    let kind = field("procedure")?.to_owned();
    let rest: Vec<&str> = it.collect();
    let num = |i: usize| -> Result<i64> { Ok(rest.get(i).ok_or_else(|| anyhow!("missing argument {i}"))?.parse()?) };
    let procedure = match kind.as_str() {
        "pay" if rest.len() == 3 => {
            Procedure::SendPayment { from: num(0)? as u64, to: num(1)? as u64, amount: num(2)? }
        }
        "bal" if rest.len() == 1 => Procedure::GetBalance { account: num(0)? as u64 },
        "script" => Procedure::Script(rest.iter().map(|op| parse_op(op)).collect::<Result<_>>()?),
        other => bail!("unknown procedure {other:?} or wrong argument count"),
    };
    Ok(Transaction::new(client, seq, procedure, n).map_err(|e| anyhow!("{e}"))?.with_submit_time(at))
}

fn parse_op(op: &str) -> Result<ScriptOp> {
    if let Some(k) = op.strip_prefix("r:") {
        return Ok(ScriptOp::Read(Key::from(k)));
    }
    let body = op.strip_prefix("w:").ok_or_else(|| anyhow!("bad script op {op:?}"))?;
    let (k, v) = body.split_once('=').ok_or_else(|| anyhow!("write without value: {op:?}"))?;
    let expr = match v.strip_prefix('+') {
        Some(d) => WriteExpr::ReadsPlus(d.parse()?),
        None => WriteExpr::Const(v.parse()?),
    };
    Ok(ScriptOp::Write(Key::from(k), expr))
}

/// Parses a workload file for `n` shards.
pub fn load(text: &str, n: u32) -> Result<Vec<Transaction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_line(l, n).with_context(|| format!("line {}", i + 1)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use thunderbolt_core::workload::{generate, SmallBankSpec};

    #[test]
    fn smallbank_round_trip() {
        let spec = SmallBankSpec { count: 200, shards: 4, cross_pct: 30.0, ..Default::default() };
        let txs: Vec<_> =
            generate(&spec).into_iter().enumerate().map(|(i, t)| t.with_submit_time(i as u64 * 7)).collect();
        let back = load(&dump(&txs).unwrap(), 4).unwrap();
        assert_eq!(back, txs);
    }

    #[test]
    fn script_round_trip() {
        let text = "# comment\n3 9 100 script r:k0 w:k1=-4 w:k2=+7\n\n";
        let txs = load(text, 2).unwrap();
        assert_eq!(txs.len(), 1);
        assert_eq!(dump(&txs).unwrap(), "3 9 100 script r:k0 w:k1=-4 w:k2=+7\n");
    }

    #[test]
    fn rejects_garbage() {
        assert!(load("1 2 3 pay 1 2", 1).is_err());
        assert!(load("1 2 x bal 4", 1).is_err());
        assert!(load("1 2 3 script q:k", 1).is_err());
        let err = load("1 1 0 bal 1\n1 2 0 fly", 1).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
    }
}
