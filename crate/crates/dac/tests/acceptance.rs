//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line
//! with the pinned tolerance and timing (visible with `-- --nocapture`).
//!
//! The long directional-exploration comparison (criterion 10) runs 10
//! paired 50k-step maze seeds and dominates the wall time; everything else
//! completes in seconds.

use dac::verify::{self, SuiteResult};

fn report(criterion: &str, max_millis: u128, result: &SuiteResult) {
    println!(
        "{} criterion {criterion}: {result}",
        if result.passed { "PASS" } else { "FAIL" }
    );
    assert!(result.passed, "criterion {criterion} failed: {}", result.detail);
    assert!(
        result.millis <= max_millis,
        "criterion {criterion} exceeded its runtime budget: {} ms > {max_millis} ms",
        result.millis
    );
}

#[test]
fn criterion_01_entropy_decomposition() {
    report("1", 1_000, &verify::suite_entropy_decomposition());
}

#[test]
fn criterion_02_ratio_form_and_log_identities() {
    report("2", 1_000, &verify::suite_ratio_identities());
}

#[test]
fn criterion_03_ratio_learning_optimum() {
    report("3", 10_000, &verify::suite_ratio_learning(false));
    // Mutation smoke test: a sign flip in the ascent must be caught.
    report("3m", 10_000, &verify::suite_mutation_ratio_sign());
}

#[test]
fn criterion_04_tabular_diverse_policy_iteration() {
    report("4", 120_000, &verify::suite_tabular_dpi());
}

#[test]
fn criterion_05_gradient_equivalence() {
    report("5", 10_000, &verify::suite_theorem2());
}

#[test]
fn criterion_06_one_step_toy_example() {
    report("6", 5_000, &verify::suite_toy_example());
}

#[test]
fn criterion_07_sac_reduction_at_alpha_one() {
    report("7", 5_000, &verify::suite_sac_reduction());
}

#[test]
fn criterion_08_gradient_integrity() {
    report("8", 120_000, &verify::suite_gradient_integrity());
}

#[test]
fn criterion_09_alpha_adaptation() {
    report("9", 10_000, &verify::suite_alpha_adaptation());
}

#[test]
fn criterion_10_directional_exploration() {
    // 10 paired seeds, 50k steps, one-sided sign test at 0.05. The budget
    // is 30 minutes per seed; parallel workers keep the wall time far
    // below that.
    report(
        "10",
        30 * 60 * 1000 * 10,
        &verify::suite_maze_directional(10, 50_000, 2),
    );
}

#[test]
fn criterion_11_clip_contract() {
    report("11", 60_000, &verify::suite_clip_contract(false));
    // Mutation smoke test: removing the clip must be caught.
    report("11m", 60_000, &verify::suite_mutation_clip_removed());
}

#[test]
fn criterion_12_determinism() {
    report("12", 60_000, &verify::suite_determinism());
}

#[test]
fn evaluation_route_cross_checks() {
    report("aux-routes", 60_000, &verify::suite_evaluation_routes());
    report("aux-value-target", 60_000, &verify::suite_value_target_identity());
}
