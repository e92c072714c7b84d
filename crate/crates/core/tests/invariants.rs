//! Element-level oracles and structural invariants of the discretization.

mod common;

use common::*;
use proptest::prelude::*;

#[test]
fn assembled_operators_match_element_oracle() {
    assert!(operator_oracle_error([0.0, 0.0], [1.0, 1.0], 1, 1) < 1e-12);
    assert!(operator_oracle_error([0.3, -0.1], [2.0, 0.7], 2, 3) < 1e-12);
}

#[test]
fn rt0_reproduces_its_own_fields_and_commutes_with_divergence() {
    assert!(rt0_exactness_error() < 1e-12);
}

#[test]
fn p0_projection_is_the_cell_average() {
    assert!(p0_exactness_error() < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn korn_type_bound(n in 1usize..4, coeffs in prop::collection::vec(-1.0f64..1.0, 32)) {
        let (strain, div) = korn_pair(n, |i| coeffs[i % coeffs.len()] * (1.0 + i as f64).sqrt());
        prop_assert!(strain + 1e-12 >= div, "{strain} < {div}");
    }
}

#[test]
fn sweep_and_trace_outputs_are_reproducible() {
    assert_eq!(reproducible_outputs(), reproducible_outputs());
}
