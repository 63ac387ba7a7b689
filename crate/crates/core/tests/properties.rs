use ddlab_core::covariance::{elem_sym_polys, random_orthogonal, scale_trace_inverse};
use ddlab_core::linalg::{min_norm_solve, projection_complement, pseudo_determinant, pseudo_inverse, RowSpace};
use ddlab_core::montecarlo::trial_rng;
use ddlab_core::surrogate::{bias_factors, solve_lambda, surrogate_size_pmf};
use ddlab_core::{
    make_profile, surrogate_mse, surrogate_params, EntryLaw, Matrix, ProfileKind, RegressionProblem,
    Spectrum, Vector,
};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

/// Dense matrices plus rank-deficient products `A B` with a thin inner dimension.
fn any_matrix() -> impl Strategy<Value = Matrix> {
    let dense = (1usize..7, 1usize..7).prop_flat_map(|(r, c)| matrix(r, c));
    let low_rank = (2usize..7, 2usize..7, 1usize..3)
        .prop_flat_map(|(r, c, k)| (matrix(r, k), matrix(k, c)))
        .prop_map(|(a, b)| a * b);
    prop_oneof![dense, low_rank]
}

fn eigenvalues(max_d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..10.0, 1..=max_d)
}

fn spectrum(max_d: usize) -> impl Strategy<Value = Spectrum> {
    eigenvalues(max_d).prop_map(|e| Spectrum::new(e).unwrap())
}

fn profile_kind() -> impl Strategy<Value = ProfileKind> {
    prop::sample::select(ProfileKind::ALL.to_vec())
}

fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
    (a - b).amax() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn penrose_conditions(a in any_matrix()) {
        let p = pseudo_inverse(&a).unwrap();
        let scale = a.amax().max(1.0) * p.amax().max(1.0);
        let tol = 1e-10 * scale * scale;
        prop_assert!(close(&(&a * &p * &a), &a, tol));
        prop_assert!(close(&(&p * &a * &p), &p, tol));
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!(close(&ap, &ap.transpose(), tol));
        prop_assert!(close(&pa, &pa.transpose(), tol));
    }

    #[test]
    fn pseudo_determinant_is_rotation_invariant(
        a in (2usize..6).prop_flat_map(|d| (matrix(d, d), Just(d))),
        seed in any::<u64>(),
    ) {
        let (b, d) = a;
        // Ill-conditioned inputs lose relative accuracy in any floating-point
        // pseudo-determinant, so keep the spectrum away from zero.
        let sym = &b * b.transpose() + Matrix::identity(d, d) * 0.1;
        let q = random_orthogonal(d, &mut trial_rng(seed, 0, 0));
        let rotated = q.transpose() * &sym * &q;
        let p0 = pseudo_determinant(&sym).unwrap();
        let p1 = pseudo_determinant(&rotated).unwrap();
        prop_assert!((p0 - p1).abs() <= 1e-8 * p0.abs().max(1e-300), "{p0} vs {p1}");
    }

    #[test]
    fn projection_complement_is_an_orthogonal_projector(x in any_matrix()) {
        let p = projection_complement(&x).unwrap();
        let d = x.ncols();
        prop_assert!(close(&p, &p.transpose(), 1e-10));
        prop_assert!(close(&(&p * &p), &p, 1e-10));
        let rank = RowSpace::of(&x).unwrap().rank();
        prop_assert!((p.trace() - (d - rank) as f64).abs() <= 1e-10);
    }

    #[test]
    fn min_norm_solution_is_no_longer_than_any_solution(
        dims in (1usize..5).prop_flat_map(|n| (Just(n), (n + 1)..8)),
        seed in any::<u64>(),
    ) {
        let (n, d) = dims;
        let mut rng = trial_rng(seed, 1, 0);
        let x = ddlab_core::MeasureSpec::gaussian(Spectrum::isotropic(d, 1.0).unwrap()).draw_rows(n, &mut rng);
        let w0 = ddlab_core::MeasureSpec::gaussian(Spectrum::isotropic(d, 1.0).unwrap())
            .draw_rows(1, &mut rng)
            .row(0)
            .transpose();
        let w = min_norm_solve(&x, &(&x * &w0)).unwrap();
        prop_assert!(w.norm() <= w0.norm() * (1.0 + 1e-10));
    }

    #[test]
    fn profiles_hit_endpoints_and_decrease(
        kind in profile_kind(),
        d in 2usize..200,
        lo in 1e-6f64..1.0,
        ratio in 1.01f64..1e5,
    ) {
        let hi = lo * ratio;
        let s = make_profile(kind, d, hi, lo).unwrap();
        let e = s.eigenvalues();
        prop_assert!((e[0] - hi).abs() <= 1e-12 * hi);
        prop_assert!((e[d - 1] - lo).abs() <= 1e-12 * lo);
        prop_assert!(e.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn trace_inverse_scaling_keeps_ratios(s in spectrum(20), target in 0.1f64..100.0) {
        let t = scale_trace_inverse(&s, target).unwrap();
        prop_assert!((t.trace_inverse() - target).abs() <= 1e-10 * target);
        let (a, b) = (s.eigenvalues(), t.eigenvalues());
        for i in 1..a.len() {
            prop_assert!((a[i] / a[0] - b[i] / b[0]).abs() <= 1e-12 * (a[i] / a[0]));
        }
    }

    #[test]
    fn elementary_polynomials_match_generating_function(e in eigenvalues(12), gamma in 0.01f64..5.0) {
        let polys = elem_sym_polys(&e, e.len()).unwrap();
        let series: f64 = polys.iter().enumerate().map(|(k, p)| p * gamma.powi(k as i32)).sum();
        let product: f64 = e.iter().map(|t| 1.0 + gamma * t).product();
        prop_assert!((series - product).abs() <= 1e-10 * product);
    }

    #[test]
    fn ridge_parameter_solves_its_equation(s in spectrum(40), frac in 0.01f64..0.99) {
        let d = s.dim();
        prop_assume!(d >= 2);
        let n = frac * d as f64;
        let lam = solve_lambda(&s, n).unwrap();
        let eff: f64 = s.eigenvalues().iter().map(|t| t / (t + lam)).sum();
        prop_assert!((eff - n).abs() < 1e-10 * n);
    }

    #[test]
    fn under_determined_parameters_are_consistent(s in spectrum(30), frac in 0.01f64..0.99) {
        let d = s.dim();
        let n = ((frac * d as f64) as usize).max(1);
        prop_assume!(n < d);
        let p = surrogate_params(&s, n).unwrap();
        prop_assert!((p.lambda * p.gamma - 1.0).abs() < 1e-12);
        let alpha: f64 = s.eigenvalues().iter().map(|t| t / (t + p.lambda)).product();
        prop_assert!((p.alpha - alpha).abs() <= 1e-10 * alpha.max(1e-300));
    }

    #[test]
    fn over_determined_parameters(s in spectrum(20), extra in 1usize..50) {
        let n = s.dim() + extra;
        let p = surrogate_params(&s, n).unwrap();
        prop_assert_eq!(p.gamma, extra as f64);
        prop_assert!((p.beta - (-(extra as f64)).exp()).abs() <= 1e-15);
        let at = surrogate_params(&s, s.dim()).unwrap();
        prop_assert_eq!((at.lambda, at.alpha), (0.0, 1.0));
    }

    #[test]
    fn risk_peaks_at_the_threshold(
        s in spectrum(25),
        w in prop::collection::vec(-2.0f64..2.0, 25),
        signal in 0.0f64..1.0,
        sigma2 in 0.01f64..4.0,
    ) {
        let d = s.dim();
        prop_assume!(d >= 2);
        let peak = sigma2 * s.trace_inverse();
        // A signal stronger than the peak variance makes the n = 1 risk, which
        // is close to ||w*||^2, exceed it; keep ||w*||^2 = signal * peak.
        let mut w = Vector::from_column_slice(&w[..d]);
        prop_assume!(w.norm() > 1e-3);
        w *= (signal * peak).sqrt() / w.norm();
        let p = RegressionProblem::new(s.clone(), w, sigma2).unwrap();
        prop_assert!((surrogate_mse(&p, d).unwrap() - peak).abs() <= 1e-12 * peak);
        prop_assert!(surrogate_mse(&p, d + 1).unwrap() < peak);
        for n in 1..=2 * d {
            if n != d {
                let m = surrogate_mse(&p, n).unwrap();
                prop_assert!(m < peak, "n = {n}: {m} >= {peak}");
            }
        }
    }

    #[test]
    fn isotropic_bias_factors_are_linear(d in 2usize..120, c in 0.01f64..100.0, frac in 0.0f64..1.0) {
        let n = 1 + (frac * (d - 1) as f64) as usize;
        prop_assume!(n < d);
        let f = bias_factors(&Spectrum::isotropic(d, c).unwrap(), n).unwrap();
        let want = 1.0 - n as f64 / d as f64;
        prop_assert!(f.iter().all(|v| (v - want).abs() <= 1e-12));
    }

    #[test]
    fn size_pmf_normalization_and_mean(s in spectrum(30), frac in 0.0f64..1.0) {
        let d = s.dim();
        prop_assume!(d >= 2);
        let n = 1 + (frac * (d - 1) as f64) as usize;
        prop_assume!(n < d);
        let pmf = surrogate_size_pmf(&s, n, EntryLaw::Gaussian).unwrap();
        prop_assert_eq!(pmf.len(), d + 1);
        prop_assert!(pmf.iter().all(|p| *p >= 0.0));
        let total: f64 = pmf.iter().sum();
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
        prop_assert!((mean - n as f64).abs() < 1e-8 * n as f64);
    }

    #[test]
    fn spectrum_text_round_trips(s in spectrum(15)) {
        prop_assert_eq!(Spectrum::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>()) {
        prop_assume!(v.is_finite());
        prop_assert_eq!(ddlab_core::csv_float(v).parse::<f64>().unwrap(), v);
    }
}
