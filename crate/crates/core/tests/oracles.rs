mod oracle;

use std::time::Instant;

#[test]
fn trackers_match_brute_force_recount() {
    let start = Instant::now();
    let r = oracle::tracker_oracle(250, 1).unwrap();
    assert_eq!(r.cases, 250);
    assert!(r.lookups > 10 * r.cases, "too few lookups: {}", r.lookups);
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn trackers_match_brute_force_recount_other_seeds() {
    for seed in 2..6 {
        oracle::tracker_oracle(50, seed).unwrap();
    }
}

#[test]
fn sessions_match_pairwise_definition() {
    assert_eq!(oracle::session_oracle(300, 1).unwrap(), 300);
}
