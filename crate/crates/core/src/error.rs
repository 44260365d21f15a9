use core::fmt;

use crate::model::{Key, ShardId, TxId};

/// Errors raised while building model values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelError {
    NoShards,
    EmptyKeySet(TxId),
    ShardOutOfRange { shard: ShardId, n: u32 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NoShards => write!(f, "shard count must be positive"),
            ModelError::EmptyKeySet(tx) => write!(f, "transaction {tx} declares no keys"),
            ModelError::ShardOutOfRange { shard, n } => {
                write!(f, "shard {shard} out of range for {n} shards")
            }
        }
    }
}

/// Misuse of the concurrency controller API.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CcError {
    DuplicateTx(TxId),
    UnknownTx(TxId),
    NotExecuting(TxId),
    LiveTransactions(usize),
}

impl fmt::Display for CcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CcError::DuplicateTx(t) => write!(f, "transaction {t} already registered"),
            CcError::UnknownTx(t) => write!(f, "transaction {t} is not registered"),
            CcError::NotExecuting(t) => write!(f, "transaction {t} is not executing"),
            CcError::LiveTransactions(n) => {
                write!(f, "{n} transactions have neither committed nor aborted")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PreplayError {
    Misrouted { tx: TxId, key: Key, shard: ShardId },
    DuplicateTx(TxId),
    ScheduleStall { step: usize, worker: usize },
    Cc(CcError),
}

impl From<CcError> for PreplayError {
    fn from(e: CcError) -> Self {
        PreplayError::Cc(e)
    }
}

impl fmt::Display for PreplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreplayError::Misrouted { tx, key, shard } => {
                write!(f, "transaction {tx} touches {key} outside shard {shard}")
            }
            PreplayError::DuplicateTx(t) => write!(f, "transaction {t} appears twice in batch"),
            PreplayError::ScheduleStall { step, worker } => {
                write!(f, "schedule step {step}: executor {worker} has nothing to run")
            }
            PreplayError::Cc(e) => write!(f, "concurrency control: {e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimError {
    InvalidConfig(&'static str),
    Model(ModelError),
}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::Model(e)
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            SimError::Model(e) => e.fmt(f),
        }
    }
}

impl core::error::Error for ModelError {}
impl core::error::Error for CcError {}
impl core::error::Error for PreplayError {}
impl core::error::Error for SimError {}
