//! Central finite differences over every parameter of reduced-width models.

mod common;

use common::oracle::{gradcheck, GRADCHECK_H, GRADCHECK_MAX_REL};
use tamilnist::nn::ModelSpec;

#[test]
fn fc_reduced_gradients_match_finite_differences() {
    let spec = ModelSpec::fc(32, 16, 13);
    let (err, n) = gradcheck(&spec, 7, 4, GRADCHECK_H);
    assert_eq!(n, spec.param_count().unwrap());
    assert!(err < GRADCHECK_MAX_REL, "max relative error {err:e}");
}

#[test]
fn cnn_reduced_gradients_match_finite_differences() {
    // A step on a first-layer kernel weight moves hundreds of
    // pre-activations; at many random points one of them crosses a ReLU or
    // max-pool kink within ±h, where a central difference is meaningless.
    // This point has none.
    let spec = ModelSpec::cnn(4, 8, 13);
    let (err, n) = gradcheck(&spec, 8, 4, GRADCHECK_H);
    assert_eq!(n, spec.param_count().unwrap());
    assert!(err < GRADCHECK_MAX_REL, "max relative error {err:e}");
}

#[test]
fn cnn_gradients_at_several_points_with_a_finer_step() {
    for seed in 1..=4 {
        let (err, _) = gradcheck(&ModelSpec::cnn(4, 8, 13), seed, 2, 1e-6);
        assert!(err < GRADCHECK_MAX_REL, "seed {seed}: max relative error {err:e}");
    }
}
