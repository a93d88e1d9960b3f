//! Finite-difference checks of the full network under both objectives.

mod support;

use support::{check, dense_loss, sparse_loss, LossFn};

fn assert_passes(loss: LossFn) {
    for seed in 0..2 {
        let r = check(loss, seed, 6);
        assert!(r.failures.is_empty(), "seed {seed}: {:?}", r.failures);
        assert!(
            r.passed(),
            "seed {seed}: {} of {} entries needed a smaller step",
            r.refined,
            r.checked
        );
    }
}

#[test]
fn dense_objective_through_full_network() {
    assert_passes(dense_loss);
}

#[test]
fn sparse_objective_with_reprojection_through_full_network() {
    assert_passes(sparse_loss);
}
