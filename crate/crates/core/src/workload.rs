//! SmallBank-style transaction generation and random script batches.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::model::{assign_shard, Key, ShardId, Transaction, Value};
use crate::procedure::{checking, savings, AccountId, Procedure, ScriptOp, WriteExpr};
use crate::state::State;

pub const INITIAL_BALANCE: Value = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SmallBankSpec {
    pub accounts: u64,
    pub theta: f64,
    /// Probability of a read-only GetBalance.
    pub p_read: f64,
    /// Percentage of SendPayments whose accounts live on different shards.
    pub cross_pct: f64,
    pub count: usize,
    pub seed: u64,
    pub shards: u32,
    /// Number of distinct clients the transactions are spread over.
    pub clients: u32,
}

impl Default for SmallBankSpec {
    fn default() -> Self {
        Self {
            accounts: 10_000,
            theta: 0.85,
            p_read: 0.5,
            cross_pct: 0.0,
            count: 1000,
            seed: 1,
            shards: 1,
            clients: 16,
        }
    }
}

impl SmallBankSpec {
    pub fn check(&self) -> Result<(), &'static str> {
        if self.accounts < 2 {
            return Err("need at least two accounts");
        }
        if !(0.0..=1.0).contains(&self.p_read) {
            return Err("read probability must lie in [0, 1]");
        }
        if !(0.0..=100.0).contains(&self.cross_pct) {
            return Err("cross percentage must lie in [0, 100]");
        }
        if self.theta.is_nan() || self.theta < 0.0 {
            return Err("skew must be non-negative");
        }
        if self.shards == 0 {
            return Err("need at least one shard");
        }
        Ok(())
    }
}

/// Zipf-distributed account picker; `theta == 0` is uniform.
pub struct AccountPicker {
    zipf: Zipf<f64>,
    /// Rank order is scrambled so hot accounts spread over shards.
    perm_mul: u64,
    n: u64,
}

impl AccountPicker {
    pub fn new(n: u64, theta: f64) -> Self {
        let zipf = Zipf::new(n as f64, theta).expect("valid zipf parameters");
        // an odd multiplier coprime with n gives a bijection on 0..n
        let mut perm_mul = 0x9e37_79b9u64 % n.max(2);
        while gcd(perm_mul, n) != 1 {
            perm_mul += 1;
        }
        Self { zipf, perm_mul, n }
    }

    pub fn pick(&self, rng: &mut impl Rng) -> AccountId {
        let rank = self.zipf.sample(rng) as u64 - 1;
        (rank.wrapping_mul(self.perm_mul)) % self.n
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn generate(spec: &SmallBankSpec) -> Vec<Transaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let picker = AccountPicker::new(spec.accounts, spec.theta);
    let shard = |a: AccountId| assign_shard(&checking(a), spec.shards);
    let mut out = Vec::with_capacity(spec.count);
    let mut seqs: BTreeMap<u32, u64> = BTreeMap::new();
    for i in 0..spec.count {
        let client = (i as u32) % spec.clients.max(1);
        let seq = {
            let s = seqs.entry(client).or_default();
            *s += 1;
            *s
        };
        let proc = if rng.random_bool(spec.p_read) {
            Procedure::GetBalance { account: picker.pick(&mut rng) }
        } else {
            let from = picker.pick(&mut rng);
            let want_cross = spec.shards > 1 && rng.random_bool(spec.cross_pct / 100.0);
            let mut to = picker.pick(&mut rng);
            let mut tries = 0;
            while tries < 10_000 && (to == from || (shard(to) != shard(from)) != want_cross) {
                to = picker.pick(&mut rng);
                tries += 1;
            }
            if to == from || (shard(to) != shard(from)) != want_cross {
                to = (0..spec.accounts)
                    .map(|d| (from + 1 + d) % spec.accounts)
                    .find(|a| *a != from && (shard(*a) != shard(from)) == want_cross)
                    .unwrap_or((from + 1) % spec.accounts);
            }
            let amount = rng.random_range(1..=100);
            Procedure::SendPayment { from, to, amount }
        };
        out.push(Transaction::new(client, seq, proc, spec.shards).expect("non-empty key set"));
    }
    out
}

/// Every account's checking and savings at the initial balance.
pub fn initial_state(accounts: u64) -> State {
    (0..accounts).flat_map(|a| [(checking(a), INITIAL_BALANCE), (savings(a), INITIAL_BALANCE)]).collect()
}

/// Random straight-line scripts over a small key space, for fuzzing the
/// concurrency controller.
pub fn random_scripts(rng: &mut impl Rng, max_txs: usize, max_keys: usize) -> Vec<Arc<Transaction>> {
    let keys: Vec<Key> = (0..max_keys.max(1)).map(|i| Key::from(alloc::format!("k{i}").as_str())).collect();
    let n = rng.random_range(1..=max_txs.max(1));
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=4);
            let ops = (0..len)
                .map(|_| {
                    let k = keys[rng.random_range(0..keys.len())].clone();
                    if rng.random_bool(0.5) {
                        ScriptOp::Read(k)
                    } else if rng.random_bool(0.5) {
                        ScriptOp::Write(k, WriteExpr::Const(rng.random_range(-50..50)))
                    } else {
                        ScriptOp::Write(k, WriteExpr::ReadsPlus(rng.random_range(-50..50)))
                    }
                })
                .collect();
            Arc::new(Transaction::new(0, i as u64, Procedure::Script(ops), 1).expect("non-empty"))
        })
        .collect()
}

/// Shards touched by a SmallBank account.
pub fn account_shard(a: AccountId, n: u32) -> ShardId {
    assign_shard(&checking(a), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TxClass;

    #[test]
    fn deterministic_under_seed() {
        let s = SmallBankSpec { count: 200, shards: 4, cross_pct: 30.0, ..Default::default() };
        assert_eq!(generate(&s), generate(&s));
        let t = SmallBankSpec { seed: 2, ..s.clone() };
        assert_ne!(generate(&s), generate(&t));
    }

    #[test]
    fn all_reads_when_p_read_is_one() {
        let s = SmallBankSpec { count: 300, p_read: 1.0, ..Default::default() };
        assert!(generate(&s).iter().all(|t| t.procedure.is_read_only()));
    }

    #[test]
    fn cross_percentage_controls_classes() {
        let s = SmallBankSpec { count: 500, shards: 4, p_read: 0.0, cross_pct: 0.0, ..Default::default() };
        assert!(generate(&s).iter().all(|t| t.class() == TxClass::SingleShard));
        let s = SmallBankSpec { cross_pct: 100.0, ..s };
        assert!(generate(&s).iter().all(|t| t.class() == TxClass::CrossShard));
    }

    #[test]
    fn picker_is_a_bijection_of_ranks() {
        let p = AccountPicker::new(10, 0.0);
        let mut hit = [false; 10];
        for r in 0..10u64 {
            hit[((r * p.perm_mul) % 10) as usize] = true;
        }
        assert!(hit.iter().all(|h| *h));
    }
}
