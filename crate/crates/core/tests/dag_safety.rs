use thunderbolt_core::check::{safety_case, Adversary};

#[test]
fn honest_replicas_agree_under_adversaries() {
    let mut runs = 0;
    let mut committed = 0;
    for seed in 0..25u64 {
        for n in [4, 7] {
            for adv in Adversary::ALL {
                let rep = safety_case(seed, n, adv).unwrap_or_else(|e| panic!("seed {seed} n {n} {adv:?}: {e}"));
                committed += rep.committed;
                runs += 1;
            }
        }
    }
    assert_eq!(runs, 200);
    assert!(committed > 0);
}
