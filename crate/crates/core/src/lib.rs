//! Determinantal surrogate designs for linear regression: closed-form risk of
//! the surrogate, exact samplers, Monte Carlo oracles and discrepancy studies
//! against i.i.d. designs.

pub mod covariance;
pub mod designs;
pub mod dpcheck;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod montecarlo;
pub mod surrogate;

pub use covariance::{make_profile, profile_with_condition, ProfileKind, Spectrum};
pub use designs::{EntryLaw, MeasureSpec};
pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use montecarlo::MonteCarloEstimate;
pub use surrogate::{surrogate_mse, surrogate_params, RegressionProblem, Regime, SurrogateParams};

/// Shortest round-trip text for a float, switching to exponent notation for
/// very small or very large magnitudes.
pub fn csv_float(v: f64) -> String {
    let a = v.abs();
    if v != 0.0 && v.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
