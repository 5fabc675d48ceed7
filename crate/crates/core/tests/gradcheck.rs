use skd_core::harness::gradcheck::suite;

#[test]
fn every_operation_passes_a_hundred_random_cases() {
    let entries = suite(100, 2024).unwrap();
    assert!(entries.len() >= 14);
    for e in entries {
        assert_eq!(e.cases, 100, "{}", e.name);
        assert!(e.passed(), "{}: {} failures, max rel err {:e}", e.name, e.failures, e.max_rel_error);
    }
}
