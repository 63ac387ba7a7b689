//! Population covariance spectra.
//!
//! Formula-level code only ever looks at eigenvalues; the optional basis is
//! used when sampling rows `x = Sigma^{1/2} z` in the original coordinates.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::montecarlo::Rng;

/// Eigenvalues of a positive definite covariance, sorted in descending order,
/// with an optional orthonormal eigenbasis (columns match eigenvalues).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    basis: Option<Matrix>,
}

impl Spectrum {
    /// Sorts the eigenvalues in descending order.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        check_eigenvalues(&eigenvalues)?;
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            eigenvalues,
            basis: None,
        })
    }

    pub fn isotropic(d: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; d])
    }

    /// Attaches an orthonormal basis; column `i` is the eigenvector of the
    /// `i`-th eigenvalue before sorting.
    pub fn with_basis(eigenvalues: Vec<f64>, basis: Matrix) -> Result<Self> {
        check_eigenvalues(&eigenvalues)?;
        let d = eigenvalues.len();
        if basis.shape() != (d, d) {
            return Err(invalid(format!("basis must be {d} x {d}")));
        }
        let gram = basis.transpose() * &basis;
        if (gram - Matrix::identity(d, d)).amax() > 1e-10 {
            return Err(invalid("basis is not orthonormal"));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
        let sorted = order.iter().map(|&i| eigenvalues[i]).collect();
        let q = Matrix::from_fn(d, d, |r, c| basis[(r, order[c])]);
        Ok(Self {
            eigenvalues: sorted,
            basis: Some(q),
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn basis(&self) -> Option<&Matrix> {
        self.basis.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn condition_number(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[self.dim() - 1]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn trace_inverse(&self) -> f64 {
        self.eigenvalues.iter().map(|t| 1.0 / t).sum()
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|t| t.ln()).sum()
    }

    /// Dense covariance `Q diag(eigenvalues) Q^T` (diagonal without a basis).
    pub fn covariance(&self) -> Matrix {
        let diag = Matrix::from_diagonal(&Vector::from_column_slice(&self.eigenvalues));
        match &self.basis {
            Some(q) => q * diag * q.transpose(),
            None => diag,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.iter().map(|t| c * t).collect(),
            basis: self.basis.clone(),
        }
    }

    /// Plain-text form: one eigenvalue per line in shortest round-trip
    /// decimal notation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.eigenvalues {
            out.push_str(&format!("{t}\n"));
        }
        out
    }

    /// Parses the plain-text form. Blank lines are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let eigs = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .map_err(|e| invalid(format!("line {}: {e} ({l:?})", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(eigs)
    }
}

fn check_eigenvalues(eigs: &[f64]) -> Result<()> {
    if eigs.is_empty() {
        return Err(invalid("spectrum needs at least one eigenvalue"));
    }
    if let Some(bad) = eigs.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(invalid(format!(
            "eigenvalues must be finite and positive, got {bad}"
        )));
    }
    Ok(())
}

/// Eigenvalue decay profiles with `lambda_1 = lambda_max`, `lambda_d = lambda_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProfileKind {
    /// `b - a i`
    Linear,
    /// `b 10^(-a i)`
    Exponential,
    /// `(b - a i)^2`
    Polynomial,
    /// `b i^(-a)`
    PowerLaw,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [
        ProfileKind::Linear,
        ProfileKind::Exponential,
        ProfileKind::Polynomial,
        ProfileKind::PowerLaw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Linear => "diag_linear",
            ProfileKind::Exponential => "diag_exp",
            ProfileKind::Polynomial => "diag_poly",
            ProfileKind::PowerLaw => "diag_poly_2",
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProfileKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown profile {s:?} (expected diag_linear, diag_exp, diag_poly or diag_poly_2)"
                ))
            })
    }
}

/// Builds a decay profile whose two constants are solved from the endpoint
/// equations at `i = 1` and `i = d`.
pub fn make_profile(kind: ProfileKind, d: usize, lambda_max: f64, lambda_min: f64) -> Result<Spectrum> {
    if d < 2 {
        return Err(invalid(format!("profiles need d >= 2, got {d}")));
    }
    if !(lambda_min > 0.0 && lambda_max > lambda_min && lambda_max.is_finite()) {
        return Err(invalid(format!(
            "need lambda_max > lambda_min > 0, got {lambda_max} and {lambda_min}"
        )));
    }
    let steps = (d - 1) as f64;
    let value = |i: usize| -> f64 {
        let i = i as f64;
        match kind {
            ProfileKind::Linear => {
                let a = (lambda_max - lambda_min) / steps;
                (lambda_max + a) - a * i
            }
            ProfileKind::Exponential => {
                let a = (lambda_max / lambda_min).log10() / steps;
                lambda_max * 10f64.powf(-a * (i - 1.0))
            }
            ProfileKind::Polynomial => {
                let (hi, lo) = (lambda_max.sqrt(), lambda_min.sqrt());
                let a = (hi - lo) / steps;
                let r = (hi + a) - a * i;
                r * r
            }
            ProfileKind::PowerLaw => {
                let a = (lambda_max / lambda_min).ln() / (d as f64).ln();
                lambda_max * i.powf(-a)
            }
        }
    };
    let mut eigs: Vec<f64> = (1..=d).map(value).collect();
    eigs[0] = lambda_max;
    eigs[d - 1] = lambda_min;
    Spectrum::new(eigs)
}

/// Profile with `lambda_max = 1` and the given condition number. `kappa = 1`
/// yields the identity.
pub fn profile_with_condition(kind: ProfileKind, d: usize, kappa: f64) -> Result<Spectrum> {
    if kappa == 1.0 || d == 1 {
        return Spectrum::isotropic(d, 1.0);
    }
    if !(kappa > 1.0) {
        return Err(invalid(format!("condition number must be >= 1, got {kappa}")));
    }
    make_profile(kind, d, 1.0, 1.0 / kappa)
}

/// Rescales so that `sum 1/tau_i = target`.
pub fn scale_trace_inverse(s: &Spectrum, target: f64) -> Result<Spectrum> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(invalid(format!("target must be positive, got {target}")));
    }
    Ok(s.scaled(s.trace_inverse() / target))
}

/// Elementary symmetric polynomials `e_0..=e_k` of `eigs`, built one value at
/// a time with `e_j <- e_j + t e_{j-1}`.
pub fn elem_sym_polys(eigs: &[f64], up_to: usize) -> Result<Vec<f64>> {
    if up_to > eigs.len() {
        return Err(invalid(format!(
            "cannot form e_{up_to} from {} values",
            eigs.len()
        )));
    }
    let mut e = vec![0.0; up_to + 1];
    e[0] = 1.0;
    for (seen, &t) in eigs.iter().enumerate() {
        let top = (seen + 1).min(up_to);
        for j in (1..=top).rev() {
            e[j] += t * e[j - 1];
        }
    }
    Ok(e)
}

/// `Z Sigma^{1/2}`, using `Q diag(sqrt(tau)) Q^T` when a basis is present.
pub fn apply_sqrt(s: &Spectrum, z: &Matrix) -> Result<Matrix> {
    let d = s.dim();
    if z.ncols() != d {
        return Err(invalid(format!(
            "expected {d} columns, got {}",
            z.ncols()
        )));
    }
    let roots: Vec<f64> = s.eigenvalues.iter().map(|t| t.sqrt()).collect();
    match &s.basis {
        None => {
            let mut out = z.clone();
            for (c, r) in roots.iter().enumerate() {
                out.column_mut(c).scale_mut(*r);
            }
            Ok(out)
        }
        Some(q) => {
            let mut zq = z * q;
            for (c, r) in roots.iter().enumerate() {
                zq.column_mut(c).scale_mut(*r);
            }
            Ok(zq * q.transpose())
        }
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the sign convention that makes `R` positive.
pub fn random_orthogonal(d: usize, rng: &mut Rng) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}
