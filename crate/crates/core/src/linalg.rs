//! Dense kernels shared by the rest of the crate: pseudo-inverse,
//! pseudo-determinant, minimum-norm solves, row-space projections and
//! log-scale Gram determinants.
//!
//! Rank decisions all use the same cutoff: a singular value `s` counts as
//! zero when `s <= eps * s_max * max(rows, cols)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values at or below this value are treated as zero.
pub fn zero_threshold(max_singular_value: f64, rows: usize, cols: usize) -> f64 {
    f64::EPSILON * max_singular_value * rows.max(cols) as f64
}

fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} has non-finite entries")))
    }
}

/// Thin SVD `X = U diag(s) V^T` with `min(k, d)` columns, computed by faer.
/// nalgebra's own SVD returns inaccurate factors for some rank-deficient
/// square inputs, which breaks rank decisions.
struct Svd {
    u: Matrix,
    s: Vec<f64>,
    v: Matrix,
}

fn svd(x: &Matrix) -> Svd {
    let (k, d) = x.shape();
    let a = faer::Mat::<f64>::from_fn(k, d, |i, j| x[(i, j)]);
    let f = a.thin_svd().expect("SVD of a finite matrix converges");
    let r = k.min(d);
    let s = f.S().column_vector();
    Svd {
        u: Matrix::from_fn(k, r, |i, j| f.U()[(i, j)]),
        s: (0..r).map(|i| s[i]).collect(),
        v: Matrix::from_fn(d, r, |i, j| f.V()[(i, j)]),
    }
}

/// Thin description of the row space of a `k x d` matrix obtained from its SVD.
///
/// `basis` is `d x r` with orthonormal columns spanning the row space and
/// `singular_values` holds the `r` retained (non-zero) singular values in the
/// same order. `left` is the matching `k x r` block of left singular vectors.
#[derive(Debug, Clone)]
pub struct RowSpace {
    pub singular_values: Vec<f64>,
    pub basis: Matrix,
    pub left: Matrix,
}

impl RowSpace {
    pub fn of(x: &Matrix) -> Result<Self> {
        ensure_finite(x, "matrix")?;
        let (k, d) = x.shape();
        if k == 0 || d == 0 {
            return Ok(Self {
                singular_values: Vec::new(),
                basis: Matrix::zeros(d, 0),
                left: Matrix::zeros(k, 0),
            });
        }
        let svd = svd(x);
        let s_max = svd.s.iter().fold(0.0f64, |m, v| m.max(*v));
        let cut = zero_threshold(s_max, k, d);
        let keep: Vec<usize> = (0..svd.s.len()).filter(|&i| svd.s[i] > cut).collect();
        let mut basis = Matrix::zeros(d, keep.len());
        let mut left = Matrix::zeros(k, keep.len());
        for (c, &i) in keep.iter().enumerate() {
            basis.set_column(c, &svd.v.column(i));
            left.set_column(c, &svd.u.column(i));
        }
        Ok(Self {
            singular_values: keep.iter().map(|&i| svd.s[i]).collect(),
            basis,
            left,
        })
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `tr((X^T X)^+)`, the sum of inverse squared non-zero singular values.
    pub fn trace_pinv_gram(&self) -> f64 {
        self.singular_values.iter().map(|s| 1.0 / (s * s)).sum()
    }

    /// `I - X^+ X`.
    pub fn complement(&self) -> Matrix {
        let d = self.basis.nrows();
        Matrix::identity(d, d) - &self.basis * self.basis.transpose()
    }

    /// Diagonal of `I - X^+ X` without forming the full matrix.
    pub fn complement_diagonal(&self) -> Vector {
        let d = self.basis.nrows();
        Vector::from_fn(d, |i, _| 1.0 - self.basis.row(i).norm_squared())
    }

    /// `||(I - X^+ X) w||^2`.
    pub fn complement_norm_squared(&self, w: &Vector) -> f64 {
        let coeffs = self.basis.transpose() * w;
        (w.norm_squared() - coeffs.norm_squared()).max(0.0)
    }

    /// `X^+ = V S^-1 U^T`.
    pub fn pinv(&self) -> Matrix {
        let mut scaled = self.basis.clone();
        for (c, s) in self.singular_values.iter().enumerate() {
            scaled.column_mut(c).scale_mut(1.0 / s);
        }
        scaled * self.left.transpose()
    }

    /// `X^+ y`.
    pub fn solve(&self, y: &Vector) -> Vector {
        let mut coeffs = self.left.transpose() * y;
        for (c, s) in self.singular_values.iter().enumerate() {
            coeffs[c] /= s;
        }
        &self.basis * coeffs
    }
}

/// Moore-Penrose inverse via the singular value decomposition.
pub fn pseudo_inverse(a: &Matrix) -> Result<Matrix> {
    Ok(RowSpace::of(a)?.pinv())
}

/// Product of the non-zero eigenvalues of a symmetric positive semi-definite
/// matrix. The empty matrix has pseudo-determinant one.
pub fn pseudo_determinant(a: &Matrix) -> Result<f64> {
    ensure_finite(a, "matrix")?;
    if !a.is_square() {
        return Err(invalid("pseudo-determinant needs a square matrix"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(1.0);
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(invalid(format!(
            "pseudo-determinant needs a symmetric matrix (asymmetry {asym:e})"
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let top = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = zero_threshold(top, n, n);
    Ok(eig.iter().filter(|v| v.abs() > cut).product())
}

/// Minimum-norm least-squares solution `X^+ y`.
pub fn min_norm_solve(x: &Matrix, y: &Vector) -> Result<Vector> {
    if x.nrows() != y.len() {
        return Err(invalid(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    ensure_finite(&Matrix::from_column_slice(y.len(), 1, y.as_slice()), "response")?;
    Ok(RowSpace::of(x)?.solve(y))
}

/// `I - X^+ X`, the orthogonal projection onto the complement of the row span.
pub fn projection_complement(x: &Matrix) -> Result<Matrix> {
    Ok(RowSpace::of(x)?.complement())
}

/// `log det(X X^T)` for a `k x d` matrix with `k <= d`.
///
/// Returns negative infinity when `X` is rank deficient and `0` for `k = 0`.
pub fn log_det_gram(x: &Matrix) -> Result<f64> {
    let (k, d) = x.shape();
    if k > d {
        return Err(invalid(format!("log_det_gram needs k <= d, got {k} x {d}")));
    }
    ensure_finite(x, "matrix")?;
    Ok(log_det_gram_unchecked(x))
}

/// `log det(X^T X)` for a `k x d` matrix with `k >= d`.
pub fn log_det_gram_t(x: &Matrix) -> Result<f64> {
    log_det_gram(&x.transpose())
}

/// Cholesky fast path with an SVD fallback whenever the factorization fails
/// or a pivot is small enough that the rank cutoff might apply.
pub(crate) fn log_det_gram_unchecked(x: &Matrix) -> f64 {
    let (k, d) = x.shape();
    if k == 0 {
        return 0.0;
    }
    let gram = x * x.transpose();
    let trace: f64 = gram.diagonal().sum();
    if trace == 0.0 {
        return f64::NEG_INFINITY;
    }
    if let Some(chol) = gram.cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..k).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
        // Rounding alone leaves pivots near sqrt(eps) * scale on a singular
        // Gram matrix, so anything below a multiple of that goes to the SVD.
        let guard = (64.0 * zero_threshold(trace, k, d)).sqrt();
        if min_pivot > guard {
            return 2.0 * (0..k).map(|i| l[(i, i)].ln()).sum::<f64>();
        }
    }
    let sv = svd(x).s;
    let cut = zero_threshold(sv.iter().fold(0.0f64, |m, v| m.max(*v)), k, d);
    if sv.iter().any(|&s| s <= cut) {
        f64::NEG_INFINITY
    } else {
        2.0 * sv.iter().map(|s| s.ln()).sum::<f64>()
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &Matrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.is_square() && (a - a.transpose()).amax() <= 1e-12 * a.amax() {
        return a
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
    }
    svd(a).s.iter().fold(0.0f64, |m, v| m.max(*v))
}

/// Plain determinant with the convention `det([]) = 1`.
pub fn det(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        1.0
    } else {
        a.determinant()
    }
}

/// Adjugate of a square matrix, from cofactors.
pub fn adjugate(a: &Matrix) -> Matrix {
    let n = a.nrows();
    if n <= 1 {
        return Matrix::identity(n, n);
    }
    Matrix::from_fn(n, n, |i, j| {
        let minor = a.clone().remove_row(j).remove_column(i);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}
