//! Statistical checks that a random square matrix is determinant preserving:
//! `E[det(A_{I,J})] = det(E[A_{I,J}])` for every tested pair of index sets.
//!
//! The left side is estimated on one random stream, the mean matrix on an
//! independent one. The uncertainty of `det(mean)` enters through the
//! linearization `tr(adj(M) (A_t - M))`, computed in a second pass over the
//! same stream.

use std::fmt;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::csv_float;
use crate::error::{invalid, Error, Result};
use crate::linalg::{adjugate, det, log_det_gram_unchecked, Matrix, Vector};
use crate::designs::MeasureSpec;
use crate::montecarlo::{map_chunks, trial_rng, z_score, MeanAccumulator, MonteCarloEstimate, Rng};

const STREAM_DET: u64 = 0xde7;
const STREAM_MEAN: u64 = 0x3ea2;
const STREAM_MINORS: u64 = 0x312;
const STREAM_NORMALIZER: u64 = 0x2a11;

/// Family-wise significance level of the minor-by-minor comparison.
pub const FAMILY_LEVEL: f64 = 0.01;
/// Dimensions up to this size get every minor; larger ones a random subset.
pub const EXHAUSTIVE_MAX_DIM: usize = 6;
/// Minors tested per size when sampling.
pub const SAMPLED_MINORS: usize = 200;
pub const MIN_DP_TRIALS: usize = 10_000;
pub const MIN_NORMALIZATION_TRIALS: usize = 1_000;

type DrawFn = dyn Fn(&mut Rng) -> Matrix + Send + Sync;

/// Named procedure producing i.i.d. draws of a random square matrix.
#[derive(Clone)]
pub struct MatrixGenerator {
    name: String,
    dim: usize,
    draw: Arc<DrawFn>,
}

impl fmt::Debug for MatrixGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixGenerator")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl MatrixGenerator {
    pub fn new<F>(name: impl Into<String>, dim: usize, draw: F) -> Self
    where
        F: Fn(&mut Rng) -> Matrix + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            draw: Arc::new(draw),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn draw(&self, rng: &mut Rng) -> Matrix {
        (self.draw)(rng)
    }

    /// Always returns `a`.
    pub fn fixed(a: Matrix) -> Result<Self> {
        check_square(&a)?;
        Ok(Self::new("fixed", a.nrows(), move |_| a.clone()))
    }

    /// I.i.d. standard Gaussian entries.
    pub fn gaussian_entries(d: usize) -> Self {
        Self::new("gaussian", d, move |rng| {
            Matrix::from_fn(d, d, |_, _| StandardNormal.sample(rng))
        })
    }

    /// `s Z` with `s` uniform on `values`.
    pub fn scaled(z: Matrix, values: Vec<f64>) -> Result<Self> {
        check_square(&z)?;
        if values.is_empty() {
            return Err(invalid("scale law needs at least one value"));
        }
        Ok(Self::new("scaled", z.nrows(), move |rng| {
            let s = values[rng.random_range(0..values.len())];
            &z * s
        }))
    }

    /// `X^T X` for `X ~ mu^K`, `K ~ Poisson(gamma)` or fixed.
    pub fn gram(m: MeasureSpec, size: SizeLaw) -> Result<Self> {
        size.validate()?;
        let d = m.dim();
        Ok(Self::new(format!("gram[{size}]"), d, move |rng| {
            let k = size.draw(rng);
            let x = m.draw_rows(k, rng);
            x.transpose() * x
        }))
    }

    /// `A + B` with independent draws.
    pub fn sum(a: Self, b: Self) -> Result<Self> {
        check_same_dim(&a, &b)?;
        let name = format!("({} + {})", a.name, b.name);
        Ok(Self::new(name, a.dim, move |rng| a.draw(rng) + b.draw(rng)))
    }

    /// `A B` with independent draws.
    pub fn product(a: Self, b: Self) -> Result<Self> {
        check_same_dim(&a, &b)?;
        let name = format!("({} * {})", a.name, b.name);
        Ok(Self::new(name, a.dim, move |rng| a.draw(rng) * b.draw(rng)))
    }
}

fn check_square(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(invalid(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn check_same_dim(a: &MatrixGenerator, b: &MatrixGenerator) -> Result<()> {
    if a.dim != b.dim {
        return Err(invalid(format!(
            "generators have dimensions {} and {}",
            a.dim, b.dim
        )));
    }
    Ok(())
}

/// Number of rows of a Gram design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeLaw {
    Poisson(f64),
    Fixed(usize),
}

impl SizeLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            SizeLaw::Poisson(g) if !(g > 0.0 && g.is_finite()) => {
                Err(invalid(format!("Poisson rate must be positive, got {g}")))
            }
            _ => Ok(()),
        }
    }

    pub fn draw(&self, rng: &mut Rng) -> usize {
        match *self {
            SizeLaw::Poisson(g) => Poisson::new(g).expect("validated rate").sample(rng) as usize,
            SizeLaw::Fixed(k) => k,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SizeLaw::Poisson(g) => g,
            SizeLaw::Fixed(k) => k as f64,
        }
    }
}

impl fmt::Display for SizeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeLaw::Poisson(g) => write!(f, "poisson({g})"),
            SizeLaw::Fixed(k) => write!(f, "fixed({k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Violated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Violated => "violated",
        })
    }
}

/// One tested pair of row/column index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorRecord {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub det_of_mean: f64,
    pub det_of_mean_se: f64,
    pub z: f64,
}

impl MinorRecord {
    pub fn size(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpReport {
    pub generator: String,
    pub trials: usize,
    pub records: Vec<MinorRecord>,
    /// Bonferroni-corrected two-sided threshold on `|z|`.
    pub threshold: f64,
    pub verdict: Verdict,
    pub max_abs_z: f64,
    /// Closed-form value of the full determinant's expectation, when known.
    pub target: Option<f64>,
    pub note: Option<String>,
}

impl DpReport {
    /// Columns `I,J,size,mc_mean,mc_se,det_of_mean,z`; index sets are
    /// space-separated and 1-based.
    pub fn to_csv(&self) -> String {
        let idx = |v: &[usize]| {
            v.iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = String::from("I,J,size,mc_mean,mc_se,det_of_mean,z\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                idx(&r.rows),
                idx(&r.cols),
                r.size(),
                csv_float(r.mc_mean),
                csv_float(r.mc_se),
                csv_float(r.det_of_mean),
                csv_float(r.z)
            ));
        }
        out
    }

    /// The record for the full matrix, if it was tested.
    pub fn full_minor(&self, d: usize) -> Option<&MinorRecord> {
        self.records.iter().find(|r| r.size() == d)
    }
}

/// Two-sided Bonferroni threshold for `m` simultaneous z-tests.
pub fn bonferroni_threshold(m: usize, level: f64) -> f64 {
    let m = m.max(1) as f64;
    Normal::standard().inverse_cdf(1.0 - level / (2.0 * m))
}

/// All `k`-subsets of `0..d` in lexicographic order.
pub fn combinations(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

fn minor_pairs(d: usize, sizes: &[usize], seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut pairs = Vec::new();
    for (si, &k) in sizes.iter().enumerate() {
        if d <= EXHAUSTIVE_MAX_DIM {
            let sets = combinations(d, k);
            for i in &sets {
                for j in &sets {
                    pairs.push((i.clone(), j.clone()));
                }
            }
        } else {
            let mut rng = trial_rng(seed, STREAM_MINORS, si as u64);
            for _ in 0..SAMPLED_MINORS {
                let mut i = sample_indices(&mut rng, d, k).into_vec();
                let mut j = sample_indices(&mut rng, d, k).into_vec();
                i.sort_unstable();
                j.sort_unstable();
                pairs.push((i, j));
            }
        }
    }
    pairs
}

fn minor(a: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |r, c| a[(rows[r], cols[c])])
}

/// Compares Monte Carlo `E[det(A_{I,J})]` with `det(E[A_{I,J}])` over every
/// pair of index sets of the given sizes (a random subset when `d > 6`).
pub fn verify_dp(
    g: &MatrixGenerator,
    minor_sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<DpReport> {
    let d = g.dim();
    if trials < MIN_DP_TRIALS {
        return Err(invalid(format!(
            "determinant-preservation check needs at least {MIN_DP_TRIALS} trials, got {trials}"
        )));
    }
    if minor_sizes.is_empty() {
        return Err(invalid("no minor sizes requested"));
    }
    if let Some(&k) = minor_sizes.iter().find(|&&k| k == 0 || k > d) {
        return Err(invalid(format!("minor size {k} outside 1..={d}")));
    }
    let pairs = minor_pairs(d, minor_sizes, seed);
    let np = pairs.len();

    // Stream A: determinants of minors.
    let det_acc = reduce(trials, np, |acc, i| {
        let a = g.draw(&mut trial_rng(seed, STREAM_DET, i));
        let dets: Vec<f64> = pairs.iter().map(|(r, c)| det(&minor(&a, r, c))).collect();
        acc.push(&dets);
    });
    // Stream B: mean matrix.
    let mean_acc = reduce(trials, d * d, |acc, i| {
        let a = g.draw(&mut trial_rng(seed, STREAM_MEAN, i));
        acc.push(a.as_slice());
    });
    let mean = Matrix::from_column_slice(d, d, mean_acc.mean());
    let adjs: Vec<Matrix> = pairs
        .iter()
        .map(|(r, c)| adjugate(&minor(&mean, r, c)))
        .collect();
    // Stream B again: linearized fluctuation of det(mean) per minor.
    let lin_acc = reduce(trials, np, |acc, i| {
        let a = g.draw(&mut trial_rng(seed, STREAM_MEAN, i));
        let lin: Vec<f64> = pairs
            .iter()
            .zip(&adjs)
            .map(|((r, c), adj)| (adj * minor(&a, r, c)).trace())
            .collect();
        acc.push(&lin);
    });
    let det_est = det_acc.finish(&Vector::zeros(np));
    let lin_est = lin_acc.finish(&Vector::zeros(np));

    let threshold = bonferroni_threshold(np, FAMILY_LEVEL);
    let mut max_abs_z: f64 = 0.0;
    let records: Vec<MinorRecord> = pairs
        .into_iter()
        .enumerate()
        .map(|(t, (rows, cols))| {
            let det_of_mean = det(&minor(&mean, &rows, &cols));
            let mc_mean = det_est.mean[t];
            let mc_se = det_est.std_error[t];
            let det_of_mean_se = lin_est.std_error[t];
            let z = z_score(mc_mean - det_of_mean, mc_se.hypot(det_of_mean_se));
            max_abs_z = max_abs_z.max(z.abs());
            MinorRecord {
                rows,
                cols,
                mc_mean,
                mc_se,
                det_of_mean,
                det_of_mean_se,
                z,
            }
        })
        .collect::<Vec<_>>();
    if records.iter().any(|r| !(r.mc_mean.is_finite() && r.det_of_mean.is_finite())) {
        return Err(Error::Numerical(format!(
            "non-finite minor determinants for {}",
            g.name()
        )));
    }
    let verdict = if max_abs_z > threshold {
        Verdict::Violated
    } else {
        Verdict::Consistent
    };
    Ok(DpReport {
        generator: g.name().to_string(),
        trials,
        records,
        threshold,
        verdict,
        max_abs_z,
        target: None,
        note: None,
    })
}

fn reduce<F>(trials: usize, len: usize, body: F) -> MeanAccumulator
where
    F: Fn(&mut MeanAccumulator, u64) + Sync + Send,
{
    let chunks = map_chunks(trials, |range| {
        let mut acc = MeanAccumulator::new(len);
        for i in range {
            body(&mut acc, i as u64);
        }
        acc
    });
    let mut total = MeanAccumulator::new(len);
    for c in &chunks {
        total.merge(c);
    }
    total
}

/// Every minor size `1..=d`.
pub fn all_sizes(d: usize) -> Vec<usize> {
    (1..=d).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosureMode {
    Sum,
    Product,
}

/// Checks the sum or product of two independent generators. Whether each
/// factor is determinant preserving on its own is not verified here.
pub fn verify_closure(
    a: &MatrixGenerator,
    b: &MatrixGenerator,
    mode: ClosureMode,
    trials: usize,
    seed: u64,
) -> Result<DpReport> {
    let combined = match mode {
        ClosureMode::Sum => MatrixGenerator::sum(a.clone(), b.clone())?,
        ClosureMode::Product => MatrixGenerator::product(a.clone(), b.clone())?,
    };
    let mut report = verify_dp(&combined, &all_sizes(combined.dim()), trials, seed)?;
    report.note = Some(format!(
        "assumes {} and {} are independent and each determinant preserving",
        a.name(),
        b.name()
    ));
    Ok(report)
}

/// Checks `E[det(X^T X)] = det(E[X^T X])` for `X ~ mu^K`. With a Poisson size
/// the common value is `det(gamma Sigma)`, which is attached as the target.
pub fn verify_poisson_identity(
    m: &MeasureSpec,
    size: SizeLaw,
    trials: usize,
    seed: u64,
) -> Result<DpReport> {
    let d = m.dim();
    let g = MatrixGenerator::gram(m.clone(), size)?;
    let mut report = verify_dp(&g, &all_sizes(d), trials, seed)?;
    if let SizeLaw::Poisson(gamma) = size {
        let target: f64 = m.spectrum.eigenvalues().iter().map(|t| gamma * t).product();
        if !target.is_finite() {
            return Err(Error::Numerical("target determinant overflows".to_string()));
        }
        report.target = Some(target);
    }
    Ok(report)
}

/// Monte Carlo `E[det(X X^T)]` for `X ~ mu^K`, `K ~ Poisson(gamma)`, and the
/// closed form `exp(-gamma) det(I + gamma Sigma)`. Designs with more rows than
/// columns contribute zero; the empty design contributes one.
pub fn verify_normalization(
    m: &MeasureSpec,
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<(MonteCarloEstimate<f64>, f64)> {
    SizeLaw::Poisson(gamma).validate()?;
    if trials < MIN_NORMALIZATION_TRIALS {
        return Err(invalid(format!(
            "normalization check needs at least {MIN_NORMALIZATION_TRIALS} trials, got {trials}"
        )));
    }
    let d = m.dim();
    let size = SizeLaw::Poisson(gamma);
    let acc = reduce(trials, 1, |acc, i| {
        let mut rng = trial_rng(seed, STREAM_NORMALIZER, i);
        let k = size.draw(&mut rng);
        let v = if k > d {
            0.0
        } else {
            log_det_gram_unchecked(&m.draw_rows(k, &mut rng)).exp()
        };
        acc.push(&[v]);
    });
    let target = (-gamma
        + m.spectrum
            .eigenvalues()
            .iter()
            .map(|t| (gamma * t).ln_1p())
            .sum::<f64>())
    .exp();
    Ok((acc.finish(&0.0), target))
}
