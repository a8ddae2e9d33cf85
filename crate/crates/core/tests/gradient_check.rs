mod common;

use common::gradients::{self, Worst};

const TOL: f64 = 1e-6;

fn assert_within(w: Worst) {
    assert!(w.checked > 0);
    assert!(w.error < TOL, "rel err {} at {}", w.error, w.at);
}

#[test]
fn conv_layer_matches_finite_differences() {
    assert_within(gradients::conv_layer());
}

#[test]
fn dense_layer_matches_finite_differences() {
    assert_within(gradients::dense_layer());
}

#[test]
fn lstm_cell_bptt_over_five_steps_matches_finite_differences() {
    assert_within(gradients::lstm_cell_bptt());
}

#[test]
fn loss_matches_finite_differences_away_from_kinks() {
    assert_within(gradients::loss());
}

#[test]
fn whole_models_match_finite_differences() {
    assert_within(gradients::whole_models());
}
