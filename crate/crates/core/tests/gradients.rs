mod common;

use common::*;

const TOL: f64 = 1e-6;

fn assert_all(name: &str, seeds: std::ops::Range<u64>, check: fn(u64) -> f64) {
    for seed in seeds {
        let err = check(seed);
        assert!(err < TOL, "{name} seed {seed}: relative error {err:e}");
    }
}

#[test]
fn dense_layer_matches_finite_differences() {
    assert_all("dense", 0..25, check_dense);
}

#[test]
fn conv_layer_matches_finite_differences() {
    assert_all("conv", 0..25, check_conv);
}

#[test]
fn pooling_relu_and_dropout_match_finite_differences() {
    assert_all("gap", 0..20, check_gap);
    assert_all("relu", 0..20, check_relu);
    assert_all("dropout", 0..20, check_dropout);
}

#[test]
fn sll_logit_gradient_matches_finite_differences() {
    assert_all("sll", 0..150, check_sll);
}

#[test]
fn whole_network_matches_finite_differences() {
    assert_all("model", 0..5, check_model);
}
