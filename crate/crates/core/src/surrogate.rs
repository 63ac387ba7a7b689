//! Closed-form quantities of the surrogate design: the implicit ridge
//! parameter, the exact MSE, its variance/bias split, the implicit
//! regularization mean and the distribution of the surrogate sample size.
//!
//! Everything is evaluated in the eigenbasis of the covariance, so every
//! `(Sigma + lambda I)^{-1}` is a per-eigenvalue scalar operation.

use crate::covariance::Spectrum;
use crate::designs::EntryLaw;
use crate::error::{invalid, Error, Result};
use crate::linalg::Vector;

/// `tr(Sigma (Sigma + lambda I)^{-1})`.
pub fn effective_dimension(eigs: &[f64], lambda: f64) -> f64 {
    eigs.iter().map(|t| t / (t + lambda)).sum()
}

/// Solves `sum tau_i / (tau_i + lambda) = n` for `lambda >= 0`, `0 < n < d`.
///
/// Safeguarded Newton on a bisection bracket `[0, d tau_max / n]`; the
/// effective dimension is strictly decreasing and convex in `lambda`.
pub fn solve_lambda(s: &Spectrum, n: f64) -> Result<f64> {
    let eigs = s.eigenvalues();
    let d = eigs.len() as f64;
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain(format!("need n > 0, got {n}")));
    }
    if n >= d {
        return Err(Error::Domain(format!(
            "no implicit ridge parameter for n = {n} >= d = {d}"
        )));
    }
    let f = |lam: f64| effective_dimension(eigs, lam) - n;
    let df = |lam: f64| -> f64 { -eigs.iter().map(|t| t / ((t + lam) * (t + lam))).sum::<f64>() };

    let mut lo = 0.0;
    let mut hi = d * eigs[0] / n;
    // Start from the isotropic guess, clamped into the bracket.
    let mean_tau = s.trace() / d;
    let mut lam = (mean_tau * (d / n - 1.0)).clamp(lo, hi);
    for _ in 0..200 {
        let r = f(lam);
        if r == 0.0 {
            return Ok(lam);
        }
        if r > 0.0 {
            lo = lam;
        } else {
            hi = lam;
        }
        let newton = lam - r / df(lam);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - lam).abs() <= 1e-15 * next.abs() || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        lam = next;
    }
    Err(Error::Numerical(format!(
        "ridge parameter solve did not converge for n = {n}"
    )))
}

/// Which side of the interpolation threshold a sample size falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Under,
    Interpolating,
    Over,
}

/// Scalars parameterizing the surrogate design of expected size `n`.
///
/// * `n < d`: `gamma = 1 / lambda`, `alpha = prod tau_i / (tau_i + lambda)`, `beta = 1`.
/// * `n = d`: `lambda = 0`, `alpha = beta = 1`, `gamma = inf` (the size is fixed at `d`).
/// * `n > d`: `gamma = n - d`, `beta = e^{d - n}`, `lambda = 0`, `alpha = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub n: f64,
    pub d: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// `ln(alpha)`; `alpha` itself underflows for large `d`.
    pub log_alpha: f64,
    pub beta: f64,
    pub regime: Regime,
}

pub fn surrogate_params(s: &Spectrum, n: usize) -> Result<SurrogateParams> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    surrogate_params_real(s, n as f64)
}

/// Same as [`surrogate_params`] for a real-valued expected size, used by sweeps.
pub fn surrogate_params_real(s: &Spectrum, n: f64) -> Result<SurrogateParams> {
    let d = s.dim();
    let df = d as f64;
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid(format!("sample size must be positive, got {n}")));
    }
    if n < df {
        let lambda = solve_lambda(s, n)?;
        let log_alpha: f64 = s
            .eigenvalues()
            .iter()
            .map(|t| (t / (t + lambda)).ln())
            .sum();
        Ok(SurrogateParams {
            n,
            d,
            gamma: 1.0 / lambda,
            lambda,
            alpha: log_alpha.exp(),
            log_alpha,
            beta: 1.0,
            regime: Regime::Under,
        })
    } else if n == df {
        Ok(SurrogateParams {
            n,
            d,
            gamma: f64::INFINITY,
            lambda: 0.0,
            alpha: 1.0,
            log_alpha: 0.0,
            beta: 1.0,
            regime: Regime::Interpolating,
        })
    } else {
        Ok(SurrogateParams {
            n,
            d,
            gamma: n - df,
            lambda: 0.0,
            alpha: 1.0,
            log_alpha: 0.0,
            beta: (df - n).exp(),
            regime: Regime::Over,
        })
    }
}

/// A linear regression task: covariance, true weights in the covariance
/// eigenbasis, and homoscedastic noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub spectrum: Spectrum,
    pub w_star: Vector,
    pub sigma2: f64,
}

impl RegressionProblem {
    pub fn new(spectrum: Spectrum, w_star: Vector, sigma2: f64) -> Result<Self> {
        if w_star.len() != spectrum.dim() {
            return Err(invalid(format!(
                "w* has {} entries but the spectrum has dimension {}",
                w_star.len(),
                spectrum.dim()
            )));
        }
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(invalid(format!("noise variance must be >= 0, got {sigma2}")));
        }
        if w_star.iter().any(|v| !v.is_finite()) {
            return Err(invalid("w* has non-finite entries"));
        }
        Ok(Self {
            spectrum,
            w_star,
            sigma2,
        })
    }

    /// `w* = 1/sqrt(d) * ones`.
    pub fn uniform_weights(spectrum: Spectrum, sigma2: f64) -> Result<Self> {
        let d = spectrum.dim();
        let w = Vector::from_element(d, 1.0 / (d as f64).sqrt());
        Self::new(spectrum, w, sigma2)
    }

    /// `v = Sigma w*`, the population cross-covariance under a linear model.
    pub fn cross_covariance(&self) -> Vector {
        Vector::from_iterator(
            self.w_star.len(),
            self.spectrum
                .eigenvalues()
                .iter()
                .zip(self.w_star.iter())
                .map(|(t, w)| t * w),
        )
    }

    /// MSE of the null estimator, `||w*||^2`.
    pub fn null_mse(&self) -> f64 {
        self.w_star.norm_squared()
    }
}

/// Exact MSE of the minimum-norm estimator under the surrogate design.
pub fn surrogate_mse(p: &RegressionProblem, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    surrogate_mse_real(p, n as f64)
}

pub fn surrogate_mse_real(p: &RegressionProblem, n: f64) -> Result<f64> {
    let s = &p.spectrum;
    let params = surrogate_params_real(s, n)?;
    let d = s.dim() as f64;
    Ok(match params.regime {
        Regime::Under => {
            let lam = params.lambda;
            let tr_inv: f64 = s.eigenvalues().iter().map(|t| 1.0 / (t + lam)).sum();
            let quad: f64 = s
                .eigenvalues()
                .iter()
                .zip(p.w_star.iter())
                .map(|(t, w)| w * w / (t + lam))
                .sum();
            let one_minus_alpha = -params.log_alpha.exp_m1();
            p.sigma2 * tr_inv * one_minus_alpha / (d - n) + quad / tr_inv * (d - n)
        }
        Regime::Interpolating => p.sigma2 * s.trace_inverse(),
        Regime::Over => {
            let gamma = params.gamma;
            p.sigma2 * s.trace_inverse() * (-(-gamma).exp_m1()) / gamma
        }
    })
}

/// Variance factor `(1 - alpha_n) / lambda_n` for `n < d`.
pub fn variance_term(s: &Spectrum, n: usize) -> Result<f64> {
    let params = under_params(s, n)?;
    Ok(-params.log_alpha.exp_m1() / params.lambda)
}

/// Eigen-factors `lambda_n / (tau_i + lambda_n)` of the bias matrix for `n < d`.
pub fn bias_factors(s: &Spectrum, n: usize) -> Result<Vector> {
    let params = under_params(s, n)?;
    let lam = params.lambda;
    Ok(Vector::from_iterator(
        s.dim(),
        s.eigenvalues().iter().map(|t| lam / (t + lam)),
    ))
}

fn under_params(s: &Spectrum, n: usize) -> Result<SurrogateParams> {
    if n == 0 || n >= s.dim() {
        return Err(Error::Domain(format!(
            "variance/bias split needs 0 < n < d, got n = {n}, d = {}",
            s.dim()
        )));
    }
    surrogate_params(s, n)
}

/// Expected minimum-norm estimator under a linear response model, `v = Sigma w*`.
pub fn implicit_reg_mean(p: &RegressionProblem, n: usize) -> Result<Vector> {
    implicit_reg_mean_with(&p.spectrum, &p.cross_covariance(), n)
}

/// Expected minimum-norm estimator for an arbitrary response with
/// cross-covariance `v = E[y(x) x]` (eigenbasis coordinates):
/// `(Sigma + lambda_n I)^{-1} v` below the threshold, `Sigma^{-1} v` otherwise.
pub fn implicit_reg_mean_with(s: &Spectrum, v: &Vector, n: usize) -> Result<Vector> {
    if v.len() != s.dim() {
        return Err(invalid("cross-covariance has the wrong dimension"));
    }
    let params = surrogate_params(s, n)?;
    let lam = params.lambda;
    Ok(Vector::from_iterator(
        v.len(),
        s.eigenvalues().iter().zip(v.iter()).map(|(t, vi)| vi / (t + lam)),
    ))
}

/// Distribution of the surrogate sample size `k = 0..=d` for `n < d`:
/// `P(k) = gamma^k e_k(tau) / det(I + gamma Sigma)`.
///
/// Evaluated as a Poisson-binomial recursion over eigen-directions with
/// success probabilities `tau_i / (tau_i + lambda_n)`, which is the same
/// quantity normalized at every step. Needs rows in general position.
pub fn surrogate_size_pmf(s: &Spectrum, n: usize, law: EntryLaw) -> Result<Vec<f64>> {
    if !law.general_position() {
        return Err(Error::UnsupportedMeasure(format!(
            "{law} rows are not in general position; the determinantal size law needs a continuous measure"
        )));
    }
    let params = under_params(s, n)?;
    let lam = params.lambda;
    let d = s.dim();
    let mut pmf = vec![0.0; d + 1];
    pmf[0] = 1.0;
    for (seen, t) in s.eigenvalues().iter().enumerate() {
        let q = t / (t + lam);
        for k in (1..=seen + 1).rev() {
            pmf[k] = pmf[k] * (1.0 - q) + pmf[k - 1] * q;
        }
        pmf[0] *= 1.0 - q;
    }
    Ok(pmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{elem_sym_polys, make_profile, ProfileKind};
    use approx::assert_relative_eq;

    fn iso(d: usize) -> Spectrum {
        Spectrum::isotropic(d, 1.0).unwrap()
    }

    #[test]
    fn lambda_isotropic_closed_form() {
        assert_relative_eq!(solve_lambda(&iso(100), 50.0).unwrap(), 1.0, max_relative = 1e-12);
        for n in [1.0, 13.0, 99.0, 99.5] {
            let want = 100.0 / n - 1.0;
            assert_relative_eq!(solve_lambda(&iso(100), n).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn lambda_two_eigenvalue_quadratic() {
        // 1/(1+l) + 2/(2+l) = 1  <=>  l^2 = 2
        let s = Spectrum::new(vec![1.0, 2.0]).unwrap();
        assert_relative_eq!(solve_lambda(&s, 1.0).unwrap(), 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn lambda_residual() {
        for kind in ProfileKind::ALL {
            let s = make_profile(kind, 60, 1.0, 1e-4).unwrap();
            for n in [0.5, 3.0, 30.0, 59.0, 59.9] {
                let lam = solve_lambda(&s, n).unwrap();
                assert!((effective_dimension(s.eigenvalues(), lam) - n).abs() < 1e-10 * n);
            }
        }
    }

    #[test]
    fn lambda_domain_errors() {
        assert!(matches!(solve_lambda(&iso(4), 4.0), Err(Error::Domain(_))));
        assert!(matches!(solve_lambda(&iso(4), 5.0), Err(Error::Domain(_))));
        assert!(solve_lambda(&iso(4), 0.0).is_err());
    }

    #[test]
    fn params_regimes() {
        let p = surrogate_params(&iso(100), 50).unwrap();
        assert_relative_eq!(p.gamma, 1.0, max_relative = 1e-12);
        assert_relative_eq!(p.lambda, 1.0, max_relative = 1e-12);
        assert_relative_eq!(p.log_alpha, 100.0 * 0.5f64.ln(), max_relative = 1e-12);
        let p = surrogate_params(&iso(100), 100).unwrap();
        assert_eq!((p.lambda, p.alpha), (0.0, 1.0));
        let p = surrogate_params(&iso(100), 101).unwrap();
        assert_eq!(p.gamma, 1.0);
        assert_relative_eq!(p.beta, (-1f64).exp());
        assert!(surrogate_params(&iso(3), 0).is_err());
    }

    #[test]
    fn mse_threshold_and_beyond() {
        let s = scale_unit(100);
        let p = RegressionProblem::uniform_weights(s, 1.0).unwrap();
        assert_relative_eq!(surrogate_mse(&p, 100).unwrap(), 100.0, max_relative = 1e-12);
        let want = 100.0 * (1.0 - (-1f64).exp());
        assert_relative_eq!(surrogate_mse(&p, 101).unwrap(), want, max_relative = 1e-12);
    }

    fn scale_unit(d: usize) -> Spectrum {
        crate::covariance::scale_trace_inverse(&iso(d), d as f64).unwrap()
    }

    #[test]
    fn mse_noiseless_isotropic_is_bias_only() {
        let w = Vector::from_fn(40, |i, _| (i as f64 * 0.37).cos());
        let p = RegressionProblem::new(iso(40), w.clone(), 0.0).unwrap();
        for n in [1, 10, 39] {
            let want = (1.0 - n as f64 / 40.0) * w.norm_squared();
            assert_relative_eq!(surrogate_mse(&p, n).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn variance_bias_isotropic() {
        let v = variance_term(&iso(100), 50).unwrap();
        assert_relative_eq!(v, 1.0 - 2f64.powi(-100), max_relative = 1e-14);
        let b = bias_factors(&iso(100), 50).unwrap();
        assert!(b.iter().all(|f| (f - 0.5).abs() < 1e-12));
        let v = variance_term(&iso(100), 99).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(variance_term(&iso(10), 10).is_err());
    }

    #[test]
    fn recombination_identity() {
        let s = make_profile(ProfileKind::Exponential, 30, 2.0, 1e-3).unwrap();
        let w = Vector::from_fn(30, |i, _| ((i * 7 % 5) as f64) - 2.0);
        let p = RegressionProblem::new(s.clone(), w.clone(), 0.7).unwrap();
        for n in [1, 5, 15, 29] {
            let b = bias_factors(&s, n).unwrap();
            let quad: f64 = b.iter().zip(w.iter()).map(|(f, wi)| f * wi * wi).sum();
            let split = 0.7 * variance_term(&s, n).unwrap() + quad;
            assert_relative_eq!(split, surrogate_mse(&p, n).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn implicit_mean_cases() {
        let w = Vector::from_fn(20, |i, _| i as f64 - 3.0);
        let p = RegressionProblem::new(iso(20), w.clone(), 1.0).unwrap();
        let m = implicit_reg_mean(&p, 5).unwrap();
        assert!((m - &w * 0.25).amax() < 1e-12);
        assert!((implicit_reg_mean(&p, 20).unwrap() - &w).amax() < 1e-12);
        assert!((implicit_reg_mean(&p, 31).unwrap() - &w).amax() < 1e-12);

        let s = Spectrum::new(vec![1.0, 2.0]).unwrap();
        let p = RegressionProblem::new(s, Vector::from_vec(vec![1.0, 1.0]), 1.0).unwrap();
        let m = implicit_reg_mean(&p, 1).unwrap();
        let r2 = 2f64.sqrt();
        // eigenvalues sorted as (2, 1)
        assert_relative_eq!(m[0], 2.0 / (2.0 + r2), max_relative = 1e-12);
        assert_relative_eq!(m[1], 1.0 / (1.0 + r2), max_relative = 1e-12);
    }

    #[test]
    fn size_pmf_small_case() {
        let pmf = surrogate_size_pmf(&iso(2), 1, EntryLaw::Gaussian).unwrap();
        for (got, want) in pmf.iter().zip([0.25, 0.5, 0.25]) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        assert!(matches!(
            surrogate_size_pmf(&iso(2), 1, EntryLaw::Rademacher),
            Err(Error::UnsupportedMeasure(_))
        ));
    }

    #[test]
    fn size_pmf_matches_esp_formula_and_mean() {
        let s = make_profile(ProfileKind::PowerLaw, 9, 3.0, 0.01).unwrap();
        for n in [1, 4, 8] {
            let pmf = surrogate_size_pmf(&s, n, EntryLaw::Gaussian).unwrap();
            let gamma = surrogate_params(&s, n).unwrap().gamma;
            let e = elem_sym_polys(s.eigenvalues(), 9).unwrap();
            let norm: f64 = s.eigenvalues().iter().map(|t| 1.0 + gamma * t).product();
            for k in 0..=9 {
                let direct = gamma.powi(k as i32) * e[k] / norm;
                assert_relative_eq!(pmf[k], direct, max_relative = 1e-9, epsilon = 1e-300);
            }
            assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            assert!((mean - n as f64).abs() < 1e-8);
            assert!(pmf[9] > 0.0);
        }
    }
}
