//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a flat `Float64Array`; the page unpacks it.

use ddlab_core::covariance::profile_with_condition;
use ddlab_core::experiments::{curve_double_descent, mse_monte_carlo_iid, scaled_problem};
use ddlab_core::surrogate::surrogate_size_pmf;
use ddlab_core::{EntryLaw, MeasureSpec, ProfileKind, Spectrum};
use wasm_bindgen::prelude::*;

const MAX_D: usize = 400;

fn profile(name: &str) -> Result<ProfileKind, String> {
    if name == "identity" {
        return Ok(ProfileKind::Linear);
    }
    name.parse().map_err(|e: ddlab_core::Error| e.to_string())
}

fn kappa_for(name: &str, kappa: f64) -> f64 {
    if name == "identity" {
        1.0
    } else {
        kappa
    }
}

fn check_d(d: usize) -> Result<(), String> {
    if d < 2 || d > MAX_D {
        return Err(format!("d must be in 2..={MAX_D}, got {d}"));
    }
    Ok(())
}

/// Eigenvalues of the profile with `lambda_max = 1`, largest first.
pub fn spectrum_values(name: &str, d: usize, kappa: f64) -> Result<Vec<f64>, String> {
    check_d(d)?;
    let s = profile_with_condition(profile(name)?, d, kappa_for(name, kappa)).map_err(|e| e.to_string())?;
    Ok(s.eigenvalues().to_vec())
}

/// `[n, mse, lambda_n, n, mse, lambda_n, ...]` for `n = 1..=2d`, on the
/// problem normalized to `tr(Sigma^{-1}) = d` and `||w*||^2 = snr sigma2`.
pub fn mse_curve_values(name: &str, d: usize, kappa: f64, sigma2: f64, snr: f64) -> Result<Vec<f64>, String> {
    check_d(d)?;
    let p = scaled_problem(profile(name)?, d, kappa_for(name, kappa), sigma2, snr).map_err(|e| e.to_string())?;
    let m = MeasureSpec::gaussian(p.spectrum.clone());
    let ns: Vec<usize> = (1..=2 * d).collect();
    let pts = curve_double_descent(&p, &m, &ns, None, 0).map_err(|e| e.to_string())?;
    Ok(pts.iter().flat_map(|pt| [pt.n as f64, pt.mse_surrogate, pt.lambda_n]).collect())
}

/// `[mean, std_error]` of the simulated i.i.d. MSE at one sample size.
pub fn mse_simulation_values(
    name: &str,
    d: usize,
    kappa: f64,
    sigma2: f64,
    snr: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    check_d(d)?;
    if n == 0 {
        return Err("n must be positive".to_string());
    }
    let p = scaled_problem(profile(name)?, d, kappa_for(name, kappa), sigma2, snr).map_err(|e| e.to_string())?;
    let m = MeasureSpec::gaussian(p.spectrum.clone());
    let est = mse_monte_carlo_iid(&p, &m, n, trials, seed).map_err(|e| e.to_string())?;
    Ok(vec![est.estimate.mean, est.estimate.std_error])
}

/// Probabilities of `K = 0..=d` rows for the determinantal design with `n < d`.
pub fn size_pmf_values(name: &str, d: usize, kappa: f64, n: usize) -> Result<Vec<f64>, String> {
    check_d(d)?;
    let s: Spectrum = profile_with_condition(profile(name)?, d, kappa_for(name, kappa)).map_err(|e| e.to_string())?;
    surrogate_size_pmf(&s, n, EntryLaw::Gaussian).map_err(|e| e.to_string())
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spectrum(profile: &str, d: usize, kappa: f64) -> Result<Vec<f64>, JsError> {
    js(spectrum_values(profile, d, kappa))
}

#[wasm_bindgen]
pub fn mse_curve(profile: &str, d: usize, kappa: f64, sigma2: f64, snr: f64) -> Result<Vec<f64>, JsError> {
    js(mse_curve_values(profile, d, kappa, sigma2, snr))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn mse_simulation(
    profile: &str,
    d: usize,
    kappa: f64,
    sigma2: f64,
    snr: f64,
    n: usize,
    trials: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    js(mse_simulation_values(profile, d, kappa, sigma2, snr, n, trials, seed as u64))
}

#[wasm_bindgen]
pub fn size_pmf(profile: &str, d: usize, kappa: f64, n: usize) -> Result<Vec<f64>, JsError> {
    js(size_pmf_values(profile, d, kappa, n))
}
