mod common;

use common::checks;

#[test]
fn every_layer_matches_finite_differences() {
    checks::gradients();
}
