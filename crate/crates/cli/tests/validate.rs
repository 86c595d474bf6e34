use oppcomp_cli::validate::{run_validation, ClosedForms, GridSpec, Quantity};

#[test]
fn small_grid_passes_gated_checks() {
    let spec = GridSpec { points: 6, trials: 200_000, seed: 3, approx_points: 2, ..GridSpec::default() };
    let r = run_validation(&spec, &ClosedForms::default());
    for s in &r.summary {
        eprintln!("{s:?}");
    }
    assert!(r.sanity.max_case_sum_error < 1e-12);
    assert!(r.sanity.max_pmf_sum_error < 1e-9);
    assert!(r.sanity.case_probabilities_in_range);
    assert!(r.passed, "{:#?}", r.checks.iter().filter(|c| c.gated && !c.within_gate).collect::<Vec<_>>());
    assert!(!r.quantity(Quantity::BCase3).unwrap().gated);
}

#[test]
fn broken_formula_is_caught() {
    let mut forms = ClosedForms::default();
    forms.theta_2c = |l, s| 1.1 * oppcomp::model::expected_theta_case2c(l, s);
    let spec = GridSpec { points: 4, trials: 100_000, seed: 5, approx_points: 0, ..GridSpec::default() };
    let r = run_validation(&spec, &forms);
    assert!(!r.passed);
    assert_eq!(r.exit_code(), 1);
    assert!(r.quantity(Quantity::Theta2C).unwrap().outside_gate > 0);
}
