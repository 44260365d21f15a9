use thunderbolt_core::check::validation_trials;

#[test]
fn honest_batches_pass_and_tampered_ones_fail() {
    let t = validation_trials(200, 3);
    assert_eq!(t.honest, 200);
    assert_eq!(t.honest_valid, t.honest);
    assert_eq!(t.tampered, 200);
    assert_eq!(t.tampered_invalid, t.tampered);
}
