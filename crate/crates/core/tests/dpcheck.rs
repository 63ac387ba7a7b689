use ddlab_core::dpcheck::{
    all_sizes, bonferroni_threshold, combinations, verify_closure, verify_dp, verify_normalization,
    verify_poisson_identity, ClosureMode, MatrixGenerator, SizeLaw, Verdict, MIN_DP_TRIALS,
};
use ddlab_core::{Matrix, MeasureSpec, Spectrum};

fn rank_one(d: usize) -> Matrix {
    let u = Matrix::from_fn(d, 1, |i, _| 1.0 + i as f64);
    let v = Matrix::from_fn(1, d, |_, j| if j % 2 == 0 { 1.0 } else { -0.5 });
    u * v
}

fn rank_two(d: usize) -> Matrix {
    let u = Matrix::from_fn(d, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let v = Matrix::from_fn(1, d, |_, j| j as f64 + 1.0);
    rank_one(d) + u * v
}

fn measure(eigs: &[f64]) -> MeasureSpec {
    MeasureSpec::gaussian(Spectrum::new(eigs.to_vec()).unwrap())
}

#[test]
fn minor_enumeration() {
    assert_eq!(combinations(4, 2).len(), 6);
    assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
    assert_eq!(all_sizes(3), vec![1, 2, 3]);
    assert!(bonferroni_threshold(19, 0.01) > bonferroni_threshold(1, 0.01));
    assert!((bonferroni_threshold(1, 0.01) - 2.5758293035489).abs() < 1e-9);
}

#[test]
fn short_runs_are_rejected() {
    let g = MatrixGenerator::gaussian_entries(2);
    assert!(verify_dp(&g, &[1, 2], MIN_DP_TRIALS - 1, 1).is_err());
}

#[test]
fn fixed_generator_is_trivially_consistent() {
    let a = Matrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, -1.0, 3.0, 1.0, 0.5, 0.0, 1.0]);
    let r = verify_dp(&MatrixGenerator::fixed(a.clone()).unwrap(), &all_sizes(3), MIN_DP_TRIALS, 3).unwrap();
    assert_eq!(r.verdict, Verdict::Consistent);
    assert!(r.records.iter().all(|m| m.z == 0.0));
    assert_eq!(r.records.len(), 9 + 9 + 1);
    assert!((r.full_minor(3).unwrap().mc_mean - a.determinant()).abs() < 1e-12);

    let both = verify_closure(
        &MatrixGenerator::fixed(a.clone()).unwrap(),
        &MatrixGenerator::fixed(a).unwrap(),
        ClosureMode::Sum,
        MIN_DP_TRIALS,
        3,
    )
    .unwrap();
    assert_eq!(both.verdict, Verdict::Consistent);
    assert!(both.note.is_some());
}

#[test]
fn gaussian_entries_are_consistent() {
    let r = verify_dp(&MatrixGenerator::gaussian_entries(3), &all_sizes(3), 100_000, 5).unwrap();
    assert_eq!(r.verdict, Verdict::Consistent, "max |z| {}", r.max_abs_z);
    let csv = r.to_csv();
    assert!(csv.starts_with("I,J,size,mc_mean,mc_se,det_of_mean,z\n"));
    assert_eq!(csv.lines().count(), 1 + 19);
    assert!(csv.contains("\n1 2 3,1 2 3,3,"));
}

#[test]
fn false_alarms_are_rare_across_seeds() {
    let g = MatrixGenerator::gaussian_entries(3);
    let violations = (0..20)
        .filter(|s| verify_dp(&g, &all_sizes(3), MIN_DP_TRIALS, 1000 + s).unwrap().verdict == Verdict::Violated)
        .count();
    assert!(violations <= 1, "{violations} false alarms in 20 runs");
}

#[test]
fn rank_two_scaling_is_detected() {
    let g = MatrixGenerator::scaled(rank_two(3), vec![0.0, 2.0]).unwrap();
    let r = verify_dp(&g, &[2], 100_000, 7).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    assert!(r.max_abs_z > 5.0, "{}", r.max_abs_z);
    // E[s^2] / E[s]^2 = 2 on every non-vanishing 2x2 minor.
    for m in r.records.iter().filter(|m| m.det_of_mean.abs() > 0.5) {
        let ratio = m.mc_mean / m.det_of_mean;
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }
}

#[test]
fn rank_one_scaling_is_consistent() {
    let g = MatrixGenerator::scaled(rank_one(3), vec![0.0, 2.0]).unwrap();
    let r = verify_dp(&g, &all_sizes(3), 50_000, 9).unwrap();
    assert_eq!(r.verdict, Verdict::Consistent, "max |z| {}", r.max_abs_z);
}

#[test]
fn closure_checks() {
    let sum = verify_closure(
        &MatrixGenerator::scaled(rank_one(3), vec![0.0, 2.0]).unwrap(),
        &MatrixGenerator::gaussian_entries(3),
        ClosureMode::Sum,
        50_000,
        13,
    )
    .unwrap();
    assert_eq!(sum.verdict, Verdict::Consistent, "max |z| {}", sum.max_abs_z);
    let product = verify_closure(
        &MatrixGenerator::gaussian_entries(2),
        &MatrixGenerator::gaussian_entries(2),
        ClosureMode::Product,
        50_000,
        24,
    )
    .unwrap();
    assert_eq!(product.verdict, Verdict::Consistent, "max |z| {}", product.max_abs_z);
    assert!(verify_closure(
        &MatrixGenerator::gaussian_entries(2),
        &MatrixGenerator::gaussian_entries(3),
        ClosureMode::Sum,
        MIN_DP_TRIALS,
        1
    )
    .is_err());
}

#[test]
fn poisson_gram_scalar_case() {
    let r = verify_poisson_identity(&measure(&[1.0]), SizeLaw::Poisson(2.0), 50_000, 15).unwrap();
    assert_eq!(r.target, Some(2.0));
    assert_eq!(r.verdict, Verdict::Consistent);
    let full = r.full_minor(1).unwrap();
    assert!(((full.mc_mean - 2.0) / full.mc_se).abs() < 3.0);
}

#[test]
fn poisson_gram_matches_scaled_covariance() {
    let r = verify_poisson_identity(&measure(&[1.0, 1.0]), SizeLaw::Poisson(3.0), 100_000, 16).unwrap();
    assert_eq!(r.target, Some(9.0));
    let full = r.full_minor(2).unwrap();
    assert!(((full.mc_mean - 9.0) / full.mc_se).abs() < 3.0, "{full:?}");
    assert_eq!(r.verdict, Verdict::Consistent);
}

#[test]
fn fixed_size_gram_loses_a_falling_factorial() {
    let r = verify_poisson_identity(&measure(&[1.0, 1.0]), SizeLaw::Fixed(2), 100_000, 17).unwrap();
    assert_eq!(r.verdict, Verdict::Violated);
    let full = r.full_minor(2).unwrap();
    let ratio = full.mc_mean / full.det_of_mean;
    assert!((ratio - 0.5).abs() < 0.03, "{ratio}");
}

#[test]
fn normalization_targets() {
    let (est, target) = verify_normalization(&measure(&[2.5]), 0.7, 100_000, 18).unwrap();
    assert!((target - (-0.7f64).exp() * (1.0 + 0.7 * 2.5)).abs() < 1e-14);
    assert!(est.z_score(target).abs() < 3.0);

    let (est, target) = verify_normalization(&measure(&[1.0, 2.0]), 1.0, 200_000, 19).unwrap();
    assert!((target - 6.0 * (-1f64).exp()).abs() < 1e-14);
    assert!(est.z_score(target).abs() < 3.0, "{} +- {}", est.mean, est.std_error);

    let (est, _) = verify_normalization(&measure(&[1.0, 2.0]), 1e-12, 1_000, 20).unwrap();
    assert_eq!(est.mean, 1.0);
}
