//! Every executor's commit order must replay serially to the same results.

use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thunderbolt::baselines::{occ_execute, tpl_nowait_execute, verify};
use thunderbolt::threaded::{ce_execute, ThreadConfig};
use thunderbolt::workload_io::{dump, load};
use thunderbolt_core::oracle::is_serializable;
use thunderbolt_core::workload::{generate, random_scripts, SmallBankSpec};
use thunderbolt_core::{State, Transaction};

fn batch(seed: u64) -> Vec<Arc<Transaction>> {
    random_scripts(&mut ChaCha8Rng::seed_from_u64(seed), 12, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn threaded_executors_are_serializable(seed in any::<u64>(), workers in 1usize..6) {
        let b = batch(seed);
        let snap = State::default();
        let cfg = ThreadConfig { workers, op_delay: Duration::from_micros(5), seed, ..Default::default() };
        let (res, _) = ce_execute(&b, &snap, &cfg).unwrap();
        let txs: Vec<&Transaction> = b.iter().map(|t| &**t).collect();
        prop_assert!(is_serializable(&res, &txs, &snap));
        prop_assert_eq!(verify(&occ_execute(&b, &snap, &cfg), &b, &snap), Ok(()));
        prop_assert_eq!(verify(&tpl_nowait_execute(&b, &snap, &cfg), &b, &snap), Ok(()));
    }

    #[test]
    fn workload_file_round_trips(seed in any::<u64>(), shards in 1u32..9, cross in 0.0f64..100.0) {
        let spec = SmallBankSpec { count: 60, seed, shards, cross_pct: cross, ..Default::default() };
        let txs: Vec<_> = generate(&spec).into_iter().map(|t| t.with_submit_time(seed % 1000)).collect();
        prop_assert_eq!(load(&dump(&txs).unwrap(), shards).unwrap(), txs);
    }

    #[test]
    fn script_file_round_trips(seed in any::<u64>()) {
        let txs: Vec<Transaction> = batch(seed).iter().map(|t| (**t).clone()).collect();
        prop_assert_eq!(load(&dump(&txs).unwrap(), 1).unwrap(), txs);
    }
}
