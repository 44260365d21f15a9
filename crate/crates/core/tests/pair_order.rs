use thunderbolt_core::check::{pair_case, pair_variants, PairOrder};

#[test]
fn conflicting_pair_is_applied_in_one_order_everywhere() {
    let (mut single_first, mut cross_first, mut converted, mut skipped) = (0, 0, 0, 0);
    for v in pair_variants() {
        let o = pair_case(v).unwrap_or_else(|e| panic!("{v:?}: {e}"));
        match o.order {
            PairOrder::SingleFirst => single_first += 1,
            PairOrder::CrossFirst => cross_first += 1,
        }
        converted += usize::from(o.converted > 0);
        skipped += usize::from(o.skips > 0);
    }
    // the grid must reach both orders and both conflict paths
    assert!(single_first > 0 && cross_first > 0);
    assert!(converted > 0 && skipped > 0);
}
