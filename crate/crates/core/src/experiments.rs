//! Monte Carlo protocol comparing i.i.d. Gaussian designs with the surrogate
//! closed forms: MSE curves, variance and bias discrepancies, bootstrap
//! intervals, adaptive trial escalation and log-log slope fits.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use statrs::statistics::{Data, OrderStatistics};

use crate::covariance::{profile_with_condition, scale_trace_inverse, ProfileKind, Spectrum};
use crate::designs::MeasureSpec;
use crate::csv_float;
use crate::error::{invalid, Error, Result};
use crate::linalg::{spectral_norm, Matrix, RowSpace, Vector};
use crate::montecarlo::{derive_seed, map_chunks, trial_rng, MeanAccumulator, MonteCarloEstimate};
use crate::surrogate::{
    bias_factors, implicit_reg_mean, surrogate_mse, surrogate_params, variance_term,
    RegressionProblem, Regime,
};

const STREAM_MSE: u64 = 0x35e;
const STREAM_VARIANCE: u64 = 0x7a2;
const STREAM_BIAS: u64 = 0xb1a5;
const STREAM_BOOTSTRAP: u64 = 0xb007;

pub const MIN_TRIALS: usize = 30;
pub const DEFAULT_RESAMPLES: usize = 2000;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Relative CI half-width at which adaptive escalation stops.
pub const DEFAULT_TARGET_REL_HALFWIDTH: f64 = 0.125;
/// Bias trials are bootstrapped over this many contiguous batch means.
pub const BIAS_BATCHES: usize = 200;
/// Fraction trimmed from each tail for the trimmed mean.
pub const TRIM_FRACTION: f64 = 0.1;

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(invalid(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

/// Cholesky factor of `X X^T` (`k <= d`) or `X^T X` (`k > d`), whichever is
/// the smaller Gram matrix; `None` when it is numerically singular.
fn small_gram_cholesky(x: &Matrix) -> Option<(Matrix, bool)> {
    let wide = x.nrows() <= x.ncols();
    let g = if wide { x * x.transpose() } else { x.transpose() * x };
    let chol = g.cholesky()?;
    let l = chol.l();
    let dmin = l.diagonal().min();
    let dmax = l.diagonal().max();
    // Past this conditioning the SVD route is more trustworthy.
    if !(dmin > dmax * 1e-7) {
        return None;
    }
    Some((l, wide))
}

/// `(tr((X^T X)^+), ||(I - X^+ X) w||^2)` for one design.
pub fn design_statistics(x: &Matrix, w: &Vector) -> (f64, f64) {
    if x.nrows() != x.ncols() {
        if let Some((l, wide)) = small_gram_cholesky(x) {
            let k = l.nrows();
            let linv = l
                .solve_lower_triangular(&Matrix::identity(k, k))
                .expect("non-singular factor");
            let tr = linv.norm_squared();
            let bias = if wide {
                let c = &linv * (x * w);
                (w.norm_squared() - c.norm_squared()).max(0.0)
            } else {
                0.0
            };
            return (tr, bias);
        }
    }
    let rs = RowSpace::of(x).expect("finite design");
    (rs.trace_pinv_gram(), rs.complement_norm_squared(w))
}

/// Diagonal of `I - X^+ X` for a design with fewer rows than columns.
fn complement_diagonal(x: &Matrix) -> Vector {
    if let Some((l, true)) = small_gram_cholesky(x) {
        let y = l.solve_lower_triangular(x).expect("non-singular factor");
        return Vector::from_fn(x.ncols(), |i, _| 1.0 - y.column(i).norm_squared());
    }
    RowSpace::of(x).expect("finite design").complement_diagonal()
}

/// True weights in the coordinates rows are drawn in.
fn ambient_weights(p: &RegressionProblem) -> Vector {
    match p.spectrum.basis() {
        Some(q) => q * &p.w_star,
        None => p.w_star.clone(),
    }
}

/// Per-trial MSE statistics of the minimum-norm estimator on i.i.d. designs.
#[derive(Debug, Clone, PartialEq)]
pub struct MseEstimate {
    pub estimate: MonteCarloEstimate<f64>,
    pub median: f64,
    pub trimmed_mean: f64,
    pub samples: Vec<f64>,
}

/// Monte Carlo MSE of `X^+ y` with `X ~ mu^n`, integrating the noise out
/// exactly: each trial contributes `sigma2 tr((X^T X)^+) + ||(I - X^+ X) w*||^2`.
pub fn mse_monte_carlo_iid(
    p: &RegressionProblem,
    m: &MeasureSpec,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MseEstimate> {
    check_trials(trials)?;
    if m.spectrum != p.spectrum {
        return Err(invalid("measure and problem use different covariances"));
    }
    let w = ambient_weights(p);
    let chunks = map_chunks(trials, |range| {
        range
            .map(|i| {
                let x = m.draw_rows(n, &mut trial_rng(seed, STREAM_MSE, i as u64));
                let (tr, bias) = design_statistics(&x, &w);
                p.sigma2 * tr + bias
            })
            .collect::<Vec<f64>>()
    });
    let samples: Vec<f64> = chunks.into_iter().flatten().collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite MSE statistic".to_string()));
    }
    let mut acc = MeanAccumulator::new(1);
    for v in &samples {
        acc.push(&[*v]);
    }
    Ok(MseEstimate {
        estimate: acc.finish(&0.0),
        median: quantile(&samples, 0.5),
        trimmed_mean: trimmed_mean(&samples, TRIM_FRACTION),
        samples,
    })
}

/// Linear-interpolation quantile.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    Data::new(samples.to_vec()).quantile(q)
}

pub fn trimmed_mean(samples: &[f64], fraction: f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (v.len() as f64 * fraction).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    kept.iter().sum::<f64>() / kept.len() as f64
}

fn percentile_interval(mut stats: Vec<f64>, level: f64) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let mut data = Data::new(stats);
    (data.quantile(tail), data.quantile(1.0 - tail))
}

fn check_bootstrap(n: usize, resamples: usize, level: f64) -> Result<()> {
    if n < MIN_TRIALS {
        return Err(invalid(format!(
            "bootstrap needs at least {MIN_TRIALS} samples, got {n}"
        )));
    }
    if resamples == 0 {
        return Err(invalid("bootstrap needs at least one resample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("confidence level must be in (0, 1), got {level}")));
    }
    Ok(())
}

/// Bootstrap distribution of `stat(mean of resampled rows)`.
fn bootstrap_stat<F>(rows: &[Vector], resamples: usize, seed: u64, stat: F) -> Vec<f64>
where
    F: Fn(&Vector) -> f64 + Sync + Send,
{
    let n = rows.len();
    let len = rows[0].len();
    map_chunks(resamples, |range| {
        range
            .map(|b| {
                let mut rng = trial_rng(seed, STREAM_BOOTSTRAP, b as u64);
                let mut mean = Vector::zeros(len);
                for _ in 0..n {
                    mean += &rows[rng.random_range(0..n)];
                }
                mean /= n as f64;
                stat(&mean)
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Percentile bootstrap interval for the mean.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    check_bootstrap(samples.len(), resamples, level)?;
    let rows: Vec<Vector> = samples.iter().map(|v| Vector::from_element(1, *v)).collect();
    Ok(percentile_interval(bootstrap_stat(&rows, resamples, seed, |m| m[0]), level))
}

/// Standard deviation of bootstrap means.
pub fn bootstrap_se(samples: &[f64], resamples: usize, seed: u64) -> Result<f64> {
    check_bootstrap(samples.len(), resamples, DEFAULT_LEVEL)?;
    let rows: Vec<Vector> = samples.iter().map(|v| Vector::from_element(1, *v)).collect();
    let stats = bootstrap_stat(&rows, resamples, seed, |m| m[0]);
    let mut acc = MeanAccumulator::new(1);
    for s in &stats {
        acc.push(&[*s]);
    }
    let est = acc.finish(&0.0);
    Ok(est.std_error * (stats.len() as f64).sqrt())
}

/// Percentile bootstrap interval for the spectral norm of the mean matrix.
pub fn bootstrap_opnorm_ci(
    samples: &[Matrix],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    check_bootstrap(samples.len(), resamples, level)?;
    let (r, c) = samples[0].shape();
    if samples.iter().any(|m| m.shape() != (r, c)) {
        return Err(invalid("bootstrap samples have different shapes"));
    }
    let rows: Vec<Vector> = samples
        .iter()
        .map(|m| Vector::from_column_slice(m.as_slice()))
        .collect();
    let stats = bootstrap_stat(&rows, resamples, seed, |v| {
        spectral_norm(&Matrix::from_column_slice(r, c, v.as_slice()))
    });
    Ok(percentile_interval(stats, level))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscrepancyKind {
    Variance,
    Bias,
}

impl DiscrepancyKind {
    pub fn name(self) -> &'static str {
        match self {
            DiscrepancyKind::Variance => "variance",
            DiscrepancyKind::Bias => "bias",
        }
    }
}

impl fmt::Display for DiscrepancyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiscrepancyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(DiscrepancyKind::Variance),
            "bias" => Ok(DiscrepancyKind::Bias),
            _ => Err(invalid(format!("unknown discrepancy kind {s:?} (expected variance or bias)"))),
        }
    }
}

/// One discrepancy measurement with its bootstrap interval.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyPoint {
    pub kind: DiscrepancyKind,
    pub d: usize,
    pub n: usize,
    pub aspect: f64,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials_used: usize,
    /// The requested precision was not reached (trial cap or dimension cap).
    pub flagged: bool,
}

impl DiscrepancyPoint {
    pub fn rel_halfwidth(&self) -> f64 {
        let hw = 0.5 * (self.ci_high - self.ci_low);
        if hw == 0.0 {
            0.0
        } else {
            hw / self.value
        }
    }

    pub const CSV_HEADER: &'static str = "d,n,aspect,kind,value,ci_low,ci_high,trials,flagged";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.d,
            self.n,
            self.aspect,
            self.kind,
            csv_float(self.value),
            csv_float(self.ci_low),
            csv_float(self.ci_high),
            self.trials_used,
            self.flagged
        )
    }
}

/// `n = round(aspect d)`, required to satisfy `1 <= n < d`.
pub fn under_size(d: usize, aspect: f64) -> Result<usize> {
    if !(aspect > 0.0 && aspect.is_finite()) {
        return Err(invalid(format!("aspect ratio must be positive, got {aspect}")));
    }
    let n = (aspect * d as f64).round() as usize;
    if n == 0 || n >= d {
        return Err(Error::Domain(format!(
            "discrepancies need 1 <= n < d, got n = {n} at d = {d}, aspect {aspect}"
        )));
    }
    Ok(n)
}

/// `|estimate / V(Sigma, n) - 1|`.
pub fn variance_discrepancy_of(s: &Spectrum, n: usize, estimate: f64) -> Result<f64> {
    Ok((estimate / variance_term(s, n)? - 1.0).abs())
}

/// `||B^{-1/2} M B^{-1/2} - I||` for a mean projection complement `M` given in
/// the eigenbasis of the covariance.
pub fn bias_discrepancy_of(s: &Spectrum, n: usize, mean: &Matrix) -> Result<f64> {
    let b = bias_factors(s, n)?;
    let d = b.len();
    if mean.shape() != (d, d) {
        return Err(invalid("mean complement has the wrong shape"));
    }
    let w = Matrix::from_fn(d, d, |i, j| {
        mean[(i, j)] / (b[i] * b[j]).sqrt() - if i == j { 1.0 } else { 0.0 }
    });
    Ok(spectral_norm(&w))
}

fn diagonal_bias_discrepancy(b: &Vector, diag: &Vector) -> f64 {
    diag.iter()
        .zip(b.iter())
        .map(|(p, bi)| (p / bi - 1.0).abs())
        .fold(0.0, f64::max)
}

fn clamp_point(value: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    (lo.min(value), hi.max(value))
}

/// Variance discrepancy `|E tr((X^T X)^+) / V - 1|` for Gaussian designs with
/// `n = round(aspect d) < d` rows.
pub fn variance_discrepancy(
    s: &Spectrum,
    aspect: f64,
    trials: usize,
    seed: u64,
) -> Result<DiscrepancyPoint> {
    check_trials(trials)?;
    let d = s.dim();
    let n = under_size(d, aspect)?;
    let v = variance_term(s, n)?;
    let m = MeasureSpec::gaussian(s.clone());
    let samples: Vec<f64> = map_chunks(trials, |range| {
        range
            .map(|i| {
                let x = m.draw_rows(n, &mut trial_rng(seed, STREAM_VARIANCE, i as u64));
                design_statistics(&x, &Vector::zeros(d)).0
            })
            .collect::<Vec<f64>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let value = (mean / v - 1.0).abs();
    let rows: Vec<Vector> = samples.iter().map(|x| Vector::from_element(1, *x)).collect();
    let stats = bootstrap_stat(&rows, DEFAULT_RESAMPLES, derive_seed(seed, 1), |m| {
        (m[0] / v - 1.0).abs()
    });
    let (ci_low, ci_high) = clamp_point(value, percentile_interval(stats, DEFAULT_LEVEL));
    Ok(DiscrepancyPoint {
        kind: DiscrepancyKind::Variance,
        d,
        n,
        aspect,
        value,
        ci_low,
        ci_high,
        trials_used: trials,
        flagged: false,
    })
}

/// Bias discrepancy `||B^{-1/2} E[I - X^+ X] B^{-1/2} - I||` for Gaussian
/// designs with `n = round(aspect d) < d` rows.
///
/// Works in the eigenbasis of the covariance. There the rows have independent
/// sign-symmetric coordinates, so `E[I - X^+ X]` is diagonal and only the
/// diagonal is estimated; the off-diagonal entries would add noise, not
/// signal. The operator-norm interval bootstraps over batch means.
pub fn bias_discrepancy(
    s: &Spectrum,
    aspect: f64,
    trials: usize,
    seed: u64,
) -> Result<DiscrepancyPoint> {
    check_trials(trials)?;
    let d = s.dim();
    let n = under_size(d, aspect)?;
    let b = bias_factors(s, n)?;
    let m = MeasureSpec::gaussian(Spectrum::new(s.eigenvalues().to_vec())?);
    let batches = BIAS_BATCHES.min(trials);
    let diags: Vec<Vector> = map_chunks(trials, |range| {
        range
            .map(|i| {
                let x = m.draw_rows(n, &mut trial_rng(seed, STREAM_BIAS, i as u64));
                complement_diagonal(&x)
            })
            .collect::<Vec<Vector>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let mut batch_means = vec![Vector::zeros(d); batches];
    let mut counts = vec![0usize; batches];
    for (i, v) in diags.iter().enumerate() {
        let k = i * batches / trials;
        batch_means[k] += v;
        counts[k] += 1;
    }
    let mut total = Vector::zeros(d);
    for (bm, c) in batch_means.iter_mut().zip(&counts) {
        total += &*bm;
        *bm /= *c as f64;
    }
    total /= trials as f64;
    let value = diagonal_bias_discrepancy(&b, &total);
    let stats = bootstrap_stat(&batch_means, DEFAULT_RESAMPLES, derive_seed(seed, 2), |mean| {
        diagonal_bias_discrepancy(&b, mean)
    });
    let (ci_low, ci_high) = clamp_point(value, percentile_interval(stats, DEFAULT_LEVEL));
    Ok(DiscrepancyPoint {
        kind: DiscrepancyKind::Bias,
        d,
        n,
        aspect,
        value,
        ci_low,
        ci_high,
        trials_used: trials,
        flagged: false,
    })
}

pub fn discrepancy(
    kind: DiscrepancyKind,
    s: &Spectrum,
    aspect: f64,
    trials: usize,
    seed: u64,
) -> Result<DiscrepancyPoint> {
    match kind {
        DiscrepancyKind::Variance => variance_discrepancy(s, aspect, trials, seed),
        DiscrepancyKind::Bias => bias_discrepancy(s, aspect, trials, seed),
    }
}

/// Reruns `point` with doubling trial counts, starting at `min_trials`, until
/// the relative CI half-width is at most `target` or `cap` is reached. A
/// capped result is flagged rather than rejected.
pub fn adaptive_trials<F>(
    mut point: F,
    min_trials: usize,
    target: f64,
    cap: usize,
) -> Result<DiscrepancyPoint>
where
    F: FnMut(usize) -> Result<DiscrepancyPoint>,
{
    if !(target > 0.0) {
        return Err(invalid(format!("target half-width must be positive, got {target}")));
    }
    let mut trials = min_trials.min(cap).max(1);
    loop {
        let mut p = point(trials)?;
        if p.rel_halfwidth() <= target {
            return Ok(p);
        }
        if trials >= cap {
            p.flagged = true;
            return Ok(p);
        }
        trials = (trials * 2).min(cap);
    }
}

/// Least-squares fit of `log(value)` on `log(d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Points left out for having a non-positive value.
    pub excluded: usize,
}

pub fn loglog_slope(points: &[DiscrepancyPoint]) -> Result<SlopeFit> {
    let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.d as f64, p.value)).collect();
    loglog_fit(&xy)
}

/// Same fit on raw `(x, y)` pairs.
pub fn loglog_fit(xy: &[(f64, f64)]) -> Result<SlopeFit> {
    let logs: Vec<(f64, f64)> = xy
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let excluded = xy.len() - logs.len();
    if logs.len() < 3 {
        return Err(invalid(format!(
            "slope fit needs at least 3 positive points, got {}",
            logs.len()
        )));
    }
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("slope fit needs at least two distinct dimensions"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        r2,
        excluded,
    })
}

/// Monte Carlo summary attached to a curve point.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    pub std_error: f64,
    pub median: f64,
    pub trimmed_mean: f64,
    pub trials: usize,
}

impl McSummary {
    /// Error bars at three standard errors.
    pub fn ci(&self) -> (f64, f64) {
        (self.mean - 3.0 * self.std_error, self.mean + 3.0 * self.std_error)
    }
}

impl From<&MseEstimate> for McSummary {
    fn from(e: &MseEstimate) -> Self {
        Self {
            mean: e.estimate.mean,
            std_error: e.estimate.std_error,
            median: e.median,
            trimmed_mean: e.trimmed_mean,
            trials: e.estimate.trials,
        }
    }
}

/// One row of an MSE curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub d: usize,
    pub mse_surrogate: f64,
    pub mse_mc: Option<McSummary>,
    /// `lambda_n`; zero at and above the threshold.
    pub lambda_n: f64,
    /// `alpha_n` below the threshold, `beta_n` above, one at `n = d`.
    pub alpha_or_beta: f64,
    pub norm_implicit_mean: f64,
}

impl CurvePoint {
    pub const CSV_HEADER: &'static str =
        "n,d,mse_surrogate,mse_mc,mse_mc_se,ci_low,ci_high,lambda_n,alpha_or_beta,norm_implicit_mean";

    /// Monte Carlo columns are left empty when no simulation was run.
    pub fn csv_row(&self) -> String {
        let mc = match &self.mse_mc {
            Some(s) => {
                let (lo, hi) = s.ci();
                [s.mean, s.std_error, lo, hi].map(csv_float).join(",")
            }
            None => ",,,".to_string(),
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            self.d,
            csv_float(self.mse_surrogate),
            mc,
            csv_float(self.lambda_n),
            csv_float(self.alpha_or_beta),
            csv_float(self.norm_implicit_mean)
        )
    }
}

/// Closed-form quantities of a curve point without simulation.
pub fn curve_point(p: &RegressionProblem, n: usize) -> Result<CurvePoint> {
    let params = surrogate_params(&p.spectrum, n)?;
    let alpha_or_beta = match params.regime {
        Regime::Under => params.alpha,
        Regime::Interpolating => 1.0,
        Regime::Over => params.beta,
    };
    Ok(CurvePoint {
        n,
        d: p.spectrum.dim(),
        mse_surrogate: surrogate_mse(p, n)?,
        mse_mc: None,
        lambda_n: params.lambda,
        alpha_or_beta,
        norm_implicit_mean: implicit_reg_mean(p, n)?.norm(),
    })
}

/// MSE as a function of `n` at fixed `d`. `trials = None` skips simulation.
pub fn curve_double_descent(
    p: &RegressionProblem,
    m: &MeasureSpec,
    n_values: &[usize],
    trials: Option<usize>,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    n_values
        .iter()
        .map(|&n| {
            let mut point = curve_point(p, n)?;
            if let Some(t) = trials {
                let est = mse_monte_carlo_iid(p, m, n, t, derive_seed(seed, n as u64))?;
                point.mse_mc = Some(McSummary::from(&est));
            }
            Ok(point)
        })
        .collect()
}

/// Problem used by the MSE curves: a `kind` profile with condition number
/// `kappa`, scaled so that `tr(Sigma^{-1}) = d`, noise `sigma2`, and
/// `w* ∝ ones` with `||w*||^2 = snr * sigma2`.
pub fn scaled_problem(
    kind: ProfileKind,
    d: usize,
    kappa: f64,
    sigma2: f64,
    snr: f64,
) -> Result<RegressionProblem> {
    if !(snr >= 0.0 && snr.is_finite()) {
        return Err(invalid(format!("SNR must be >= 0, got {snr}")));
    }
    let s = scale_trace_inverse(&profile_with_condition(kind, d, kappa)?, d as f64)?;
    let scale = (snr * sigma2 / d as f64).sqrt();
    RegressionProblem::new(s, Vector::from_element(d, scale), sigma2)
}

/// MSE as a function of `d` at fixed `n`, rebuilding the problem per `d`.
#[allow(clippy::too_many_arguments)]
pub fn curve_d_sweep(
    kind: ProfileKind,
    kappa: f64,
    n: usize,
    d_values: &[usize],
    sigma2: f64,
    snr: f64,
    trials: Option<usize>,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    d_values
        .iter()
        .map(|&d| {
            let p = scaled_problem(kind, d, kappa, sigma2, snr)?;
            let mut point = curve_point(&p, n)?;
            if let Some(t) = trials {
                let m = MeasureSpec::gaussian(p.spectrum.clone());
                let est = mse_monte_carlo_iid(&p, &m, n, t, derive_seed(seed, d as u64))?;
                point.mse_mc = Some(McSummary::from(&est));
            }
            Ok(point)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::make_profile;
    use crate::linalg::projection_complement;

    fn iso(d: usize) -> Spectrum {
        Spectrum::isotropic(d, 1.0).unwrap()
    }

    #[test]
    fn design_statistics_match_svd_route() {
        let m = MeasureSpec::gaussian(make_profile(ProfileKind::Linear, 6, 3.0, 0.5).unwrap());
        let w = Vector::from_vec(vec![1.0, -1.0, 0.5, 0.0, 2.0, 0.3]);
        for k in [1, 3, 5, 6, 7, 12] {
            let x = m.draw_rows(k, &mut trial_rng(1, 0, k as u64));
            let (tr, bias) = design_statistics(&x, &w);
            let rs = RowSpace::of(&x).unwrap();
            assert!((tr - rs.trace_pinv_gram()).abs() < 1e-9 * tr);
            assert!((bias - rs.complement_norm_squared(&w)).abs() < 1e-9);
            if k < 6 {
                let diag = complement_diagonal(&x);
                let p = projection_complement(&x).unwrap();
                assert!((diag - p.diagonal()).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn noiseless_overdetermined_mse_is_zero() {
        let p = RegressionProblem::uniform_weights(iso(5), 0.0).unwrap();
        let m = MeasureSpec::gaussian(iso(5));
        let est = mse_monte_carlo_iid(&p, &m, 12, 50, 3).unwrap();
        assert_eq!(est.estimate.mean, 0.0);
        assert!(mse_monte_carlo_iid(&p, &m, 12, 29, 3).is_err());
    }

    #[test]
    fn interpolation_threshold_stays_finite() {
        let p = RegressionProblem::uniform_weights(iso(20), 1.0).unwrap();
        let m = MeasureSpec::gaussian(iso(20));
        let est = mse_monte_carlo_iid(&p, &m, 20, 200, 9).unwrap();
        assert!(est.estimate.mean.is_finite() && est.estimate.std_error.is_finite());
        assert!(est.median <= est.estimate.mean);
    }

    #[test]
    fn discrepancy_of_exact_values_is_zero() {
        let s = make_profile(ProfileKind::Exponential, 6, 10.0, 0.1).unwrap();
        let v = variance_term(&s, 3).unwrap();
        assert_eq!(variance_discrepancy_of(&s, 3, v).unwrap(), 0.0);
        let b = Matrix::from_diagonal(&bias_factors(&s, 3).unwrap());
        assert!(bias_discrepancy_of(&s, 3, &b).unwrap() < 1e-15);
    }

    #[test]
    fn points_bracket_their_value() {
        let s = make_profile(ProfileKind::Linear, 2, 2.0, 1.0).unwrap();
        let p = bias_discrepancy(&s, 0.5, 2000, 1).unwrap();
        assert!(p.value > 0.0 && p.value.is_finite());
        assert!(p.ci_low <= p.value && p.value <= p.ci_high);
        let v = variance_discrepancy(&iso(10), 0.5, 200, 1).unwrap();
        assert!(v.ci_low <= v.value && v.value <= v.ci_high);
        assert!(variance_discrepancy(&iso(10), 1.0, 200, 1).is_err());
        assert!(variance_discrepancy(&iso(10), 0.01, 200, 1).is_err());
    }

    #[test]
    fn bootstrap_degenerate_cases() {
        assert_eq!(bootstrap_ci(&[2.5; 40], 500, 0.95, 1).unwrap(), (2.5, 2.5));
        assert_eq!(bootstrap_se(&[2.5; 40], 500, 1).unwrap(), 0.0);
        assert!(bootstrap_ci(&[1.0; 29], 500, 0.95, 1).is_err());
        let a = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        let (lo, hi) = bootstrap_opnorm_ci(&vec![a; 30], 200, 0.95, 1).unwrap();
        assert!((lo - 4.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
    }

    fn fake(d: usize, value: f64, half: f64) -> DiscrepancyPoint {
        DiscrepancyPoint {
            kind: DiscrepancyKind::Variance,
            d,
            n: d / 2,
            aspect: 0.5,
            value,
            ci_low: value - half,
            ci_high: value + half,
            trials_used: 0,
            flagged: false,
        }
    }

    #[test]
    fn adaptive_semantics() {
        let mut calls = Vec::new();
        let p = adaptive_trials(
            |t| {
                calls.push(t);
                Ok(fake(10, 1.0, 0.0))
            },
            100,
            0.125,
            10_000,
        )
        .unwrap();
        assert_eq!(calls, vec![100]);
        assert!(!p.flagged);
        let p = adaptive_trials(|_| Ok(fake(10, 1.0, 0.5)), 30, 0.125, 100).unwrap();
        assert!(p.flagged);
        let mut seen = Vec::new();
        adaptive_trials(
            |t| {
                seen.push(t);
                Ok(fake(10, 1.0, 4.0 / t as f64))
            },
            4,
            0.125,
            1000,
        )
        .unwrap();
        assert_eq!(seen, vec![4, 8, 16, 32]);
    }

    #[test]
    fn slope_of_power_laws() {
        let pts: Vec<DiscrepancyPoint> = [10, 20, 40, 80].iter().map(|&d| fake(d, 1.0 / d as f64, 0.0)).collect();
        let fit = loglog_slope(&pts).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
        let pts: Vec<DiscrepancyPoint> = [10, 20, 40].iter().map(|&d| fake(d, (d as f64).powi(-2), 0.0)).collect();
        assert!((loglog_slope(&pts).unwrap().slope + 2.0).abs() < 1e-12);
        let mut pts = pts;
        pts.push(fake(80, 0.0, 0.0));
        assert_eq!(loglog_slope(&pts).unwrap().excluded, 1);
        assert!(loglog_slope(&pts[..2]).is_err());
    }

    #[test]
    fn isotropic_curve_columns() {
        let p = RegressionProblem::uniform_weights(iso(100), 1.0).unwrap();
        let m = MeasureSpec::gaussian(iso(100));
        let pts = curve_double_descent(&p, &m, &[10, 50, 100, 150], None, 0).unwrap();
        for pt in &pts[..2] {
            assert!((pt.norm_implicit_mean - pt.n as f64 / 100.0).abs() < 1e-12);
        }
        assert_eq!(pts[2].mse_surrogate, 100.0);
        assert!(pts[3].csv_row().contains(",,,"));
        assert_eq!(CurvePoint::CSV_HEADER.split(',').count(), pts[0].csv_row().split(',').count());
    }

    #[test]
    fn scaled_problem_normalization() {
        let p = scaled_problem(ProfileKind::Exponential, 50, 1e4, 2.0, 0.5).unwrap();
        assert!((p.spectrum.trace_inverse() - 50.0).abs() < 1e-9);
        assert!((p.null_mse() - 1.0).abs() < 1e-12);
    }
}
