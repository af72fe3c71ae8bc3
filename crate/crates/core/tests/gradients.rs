mod common;

use common::{gradient_check, jet_check};

#[test]
fn reverse_mode_matches_finite_differences() {
    for i in 0..20 {
        let e = gradient_check(i);
        assert!(e <= 1e-5, "config {i}: relative error {e:e}");
    }
}

#[test]
fn jets_match_finite_differences() {
    for i in 0..20 {
        let e = jet_check(i);
        assert!(e <= 1e-4, "config {i}: relative error {e:e}");
    }
}
