//! Deterministic stored procedures, run as step machines so the same code
//! drives preplay, validation, cross-shard execution and the serial oracle.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::hash::Hasher64;
use crate::model::{Key, Value};

pub type AccountId = u64;

pub fn checking(a: AccountId) -> Key {
    Key::from(format!("acct_{a}").as_str())
}

pub fn savings(a: AccountId) -> Key {
    Key::from(format!("acct_{a}/sav").as_str())
}

/// Value written by a script step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WriteExpr {
    Const(Value),
    /// Sum of every value read so far in this attempt, plus the constant.
    ReadsPlus(Value),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptOp {
    Read(Key),
    Write(Key, WriteExpr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Procedure {
    /// Moves `amount` between checking accounts. Result: payer balance after.
    SendPayment { from: AccountId, to: AccountId, amount: Value },
    /// Result: checking plus savings.
    GetBalance { account: AccountId },
    /// Straight-line program over arbitrary keys. Result: sum of reads.
    Script(Vec<ScriptOp>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Read(Key),
    Write(Key, Value),
    Done(Value),
}

/// Progress of one attempt of a procedure.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Cursor {
    pc: usize,
    reads: Vec<Value>,
}

impl Cursor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn read_done(&mut self, v: Value) {
        self.reads.push(v);
        self.pc += 1;
    }

    pub fn write_done(&mut self) {
        self.pc += 1;
    }

    pub fn ops_done(&self) -> usize {
        self.pc
    }
}

fn sum(vs: &[Value]) -> Value {
    vs.iter().fold(0, |a, b| a.wrapping_add(*b))
}

impl Procedure {
    pub fn next_step(&self, c: &Cursor) -> Step {
        match self {
            Procedure::SendPayment { from, to, amount } => match c.pc {
                0 => Step::Read(checking(*from)),
                1 => Step::Read(checking(*to)),
                2 => Step::Write(checking(*from), c.reads[0].wrapping_sub(*amount)),
                3 => Step::Write(checking(*to), c.reads[1].wrapping_add(*amount)),
                _ => Step::Done(c.reads[0].wrapping_sub(*amount)),
            },
            Procedure::GetBalance { account } => match c.pc {
                0 => Step::Read(checking(*account)),
                1 => Step::Read(savings(*account)),
                _ => Step::Done(c.reads[0].wrapping_add(c.reads[1])),
            },
            Procedure::Script(ops) => match ops.get(c.pc) {
                Some(ScriptOp::Read(k)) => Step::Read(k.clone()),
                Some(ScriptOp::Write(k, WriteExpr::Const(v))) => Step::Write(k.clone(), *v),
                Some(ScriptOp::Write(k, WriteExpr::ReadsPlus(v))) => {
                    Step::Write(k.clone(), sum(&c.reads).wrapping_add(*v))
                }
                None => Step::Done(sum(&c.reads)),
            },
        }
    }

    /// Keys the procedure may touch. Routing and conflict checks use this set.
    pub fn declared_keys(&self) -> BTreeSet<Key> {
        match self {
            Procedure::SendPayment { from, to, .. } => [checking(*from), checking(*to)].into(),
            Procedure::GetBalance { account } => [checking(*account), savings(*account)].into(),
            Procedure::Script(ops) => ops
                .iter()
                .map(|op| match op {
                    ScriptOp::Read(k) | ScriptOp::Write(k, _) => k.clone(),
                })
                .collect(),
        }
    }

    pub fn first_key(&self) -> Option<Key> {
        match self {
            Procedure::SendPayment { from, .. } => Some(checking(*from)),
            Procedure::GetBalance { account } => Some(checking(*account)),
            Procedure::Script(ops) => ops.first().map(|op| match op {
                ScriptOp::Read(k) | ScriptOp::Write(k, _) => k.clone(),
            }),
        }
    }

    pub fn op_count(&self) -> usize {
        match self {
            Procedure::SendPayment { .. } => 4,
            Procedure::GetBalance { .. } => 2,
            Procedure::Script(ops) => ops.len(),
        }
    }

    pub fn is_read_only(&self) -> bool {
        match self {
            Procedure::SendPayment { .. } => false,
            Procedure::GetBalance { .. } => true,
            Procedure::Script(ops) => ops.iter().all(|o| matches!(o, ScriptOp::Read(_))),
        }
    }

    pub(crate) fn digest_into(&self, h: &mut Hasher64) {
        match self {
            Procedure::SendPayment { from, to, amount } => {
                h.u64(1).u64(*from).u64(*to).i64(*amount);
            }
            Procedure::GetBalance { account } => {
                h.u64(2).u64(*account);
            }
            Procedure::Script(ops) => {
                h.u64(3).u64(ops.len() as u64);
                for op in ops {
                    match op {
                        ScriptOp::Read(k) => {
                            h.u64(0).u64(k.as_bytes().len() as u64).bytes(k.as_bytes());
                        }
                        ScriptOp::Write(k, e) => {
                            h.u64(1).u64(k.as_bytes().len() as u64).bytes(k.as_bytes());
                            match e {
                                WriteExpr::Const(v) => h.u64(0).i64(*v),
                                WriteExpr::ReadsPlus(v) => h.u64(1).i64(*v),
                            };
                        }
                    }
                }
            }
        }
    }
}

/// A key access requested by a running procedure.
pub enum Access<'a> {
    Read(&'a Key),
    Write(&'a Key, Value),
}

/// Runs `p` to completion. `io` answers reads (the returned value is fed
/// back) and acknowledges writes (its return value is ignored). Stops at the
/// first error.
pub fn run_to_end<E>(p: &Procedure, mut io: impl FnMut(Access<'_>) -> Result<Value, E>) -> Result<Value, E> {
    let mut c = Cursor::new();
    loop {
        match p.next_step(&c) {
            Step::Read(k) => {
                let v = io(Access::Read(&k))?;
                c.read_done(v);
            }
            Step::Write(k, v) => {
                io(Access::Write(&k, v))?;
                c.write_done();
            }
            Step::Done(r) => return Ok(r),
        }
    }
}
