//! Random designs: i.i.d. rows `x = Sigma^{1/2} z`, the self-normalized
//! importance-weighting oracle for surrogate expectations, and explicit
//! surrogate samplers built from a size draw plus a Metropolis row-swap chain.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::covariance::{apply_sqrt, Spectrum};
use crate::csv_float;
use crate::error::{invalid, Error, Result};
use crate::linalg::{log_det_gram_unchecked, Matrix, Vector};
use crate::montecarlo::{map_chunks, trial_rng, MonteCarloEstimate, Observable, Rng, WeightedAccumulator};
use crate::surrogate::{surrogate_params, surrogate_size_pmf, Regime};

const STREAM_IID: u64 = 0x11d;
const STREAM_NOISE: u64 = 0x2015e;
const STREAM_ORACLE: u64 = 0x0_7ac1e;
const STREAM_CHAIN: u64 = 0xc4a1;

/// Law of the independent standardized entries of `z` (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryLaw {
    Gaussian,
    Rademacher,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    UniformPmSqrt3,
}

impl EntryLaw {
    pub fn name(self) -> &'static str {
        match self {
            EntryLaw::Gaussian => "gaussian",
            EntryLaw::Rademacher => "rademacher",
            EntryLaw::UniformPmSqrt3 => "uniform_pm_sqrt3",
        }
    }

    /// Whether `k <= d` i.i.d. rows are linearly independent almost surely.
    pub fn general_position(self) -> bool {
        !matches!(self, EntryLaw::Rademacher)
    }

    pub fn sample(self, rng: &mut Rng) -> f64 {
        match self {
            EntryLaw::Gaussian => StandardNormal.sample(rng),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::UniformPmSqrt3 => {
                let r3 = 3f64.sqrt();
                rng.random_range(-r3..r3)
            }
        }
    }
}

impl fmt::Display for EntryLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(EntryLaw::Gaussian),
            "rademacher" => Ok(EntryLaw::Rademacher),
            "uniform_pm_sqrt3" | "uniform" => Ok(EntryLaw::UniformPmSqrt3),
            _ => Err(invalid(format!(
                "unknown entry law {s:?} (expected gaussian, rademacher or uniform_pm_sqrt3)"
            ))),
        }
    }
}

/// Row distribution `mu`: `x = Sigma^{1/2} z` with i.i.d. standardized entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSpec {
    pub spectrum: Spectrum,
    pub law: EntryLaw,
}

impl MeasureSpec {
    pub fn new(spectrum: Spectrum, law: EntryLaw) -> Self {
        Self { spectrum, law }
    }

    pub fn gaussian(spectrum: Spectrum) -> Self {
        Self::new(spectrum, EntryLaw::Gaussian)
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// Standardized entries before covariance mixing.
    pub fn draw_standard(&self, k: usize, rng: &mut Rng) -> Matrix {
        let law = self.law;
        Matrix::from_fn(k, self.dim(), |_, _| law.sample(rng))
    }

    /// `k` i.i.d. rows from `mu`.
    pub fn draw_rows(&self, k: usize, rng: &mut Rng) -> Matrix {
        let z = self.draw_standard(k, rng);
        apply_sqrt(&self.spectrum, &z).expect("dimensions agree by construction")
    }

    fn draw_row(&self, rng: &mut Rng) -> Vector {
        self.draw_rows(1, rng).row(0).transpose()
    }
}

/// `n` i.i.d. rows from `mu`, reproducible from `seed`.
pub fn sample_iid(m: &MeasureSpec, n: usize, seed: u64) -> Matrix {
    m.draw_rows(n, &mut trial_rng(seed, STREAM_IID, 0))
}

/// `y = X w* + xi` with `xi ~ N(0, sigma2)` i.i.d.
pub fn gen_responses(x: &Matrix, w_star: &Vector, sigma2: f64, seed: u64) -> Result<Vector> {
    if x.ncols() != w_star.len() {
        return Err(invalid(format!(
            "design has {} columns but w* has {} entries",
            x.ncols(),
            w_star.len()
        )));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(invalid(format!("noise variance must be >= 0, got {sigma2}")));
    }
    let mut y = x * w_star;
    if sigma2 > 0.0 {
        let mut rng = trial_rng(seed, STREAM_NOISE, 0);
        let noise = Normal::new(0.0, sigma2.sqrt()).expect("finite positive scale");
        y.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(y)
}

/// A design matrix with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSample {
    pub x: Matrix,
    pub y: Vector,
}

impl DesignSample {
    pub fn new(x: Matrix, y: Vector) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(invalid("design and responses disagree on the number of rows"));
        }
        Ok(Self { x, y })
    }

    pub fn k(&self) -> usize {
        self.x.nrows()
    }

    /// CSV with header `x_1,...,x_d,y`, one row per sample.
    pub fn to_csv(&self) -> String {
        let d = self.x.ncols();
        let mut out = String::new();
        let header: Vec<String> = (1..=d).map(|j| format!("x_{j}")).chain(["y".to_string()]).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.x.nrows() {
            let fields: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(std::iter::once(&self.y[i]))
                .map(|v| csv_float(*v))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

fn poisson(gamma: f64, rng: &mut Rng) -> usize {
    if gamma <= 0.0 {
        return 0;
    }
    let p = Poisson::new(gamma).expect("positive finite rate");
    p.sample(rng) as usize
}

/// Minimum number of trials accepted by the weighted oracle.
pub const MIN_ORACLE_TRIALS: usize = 100;

/// Estimates `E[f(Xbar)]` for `Xbar ~ S_mu^n` by self-normalized importance
/// weighting of i.i.d. designs of Poisson size:
///
/// * `n < d`: `K ~ Poisson(gamma_n)`, weight `det(X X^T)` (zero once `K > d`);
/// * `n = d`: `K = d`, weight `det(X)^2`;
/// * `n > d`: `K ~ Poisson(n - d)`, weight `det(X^T X)` (zero while `K < d`).
///
/// `f` is only evaluated on designs with non-zero weight.
pub fn surrogate_expectation_oracle<T, F>(
    f: F,
    m: &MeasureSpec,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate<T>>
where
    T: Observable,
    F: Fn(&Matrix) -> T + Sync + Send,
{
    if trials < MIN_ORACLE_TRIALS {
        return Err(invalid(format!(
            "weighted oracle needs at least {MIN_ORACLE_TRIALS} trials, got {trials}"
        )));
    }
    let d = m.dim();
    let params = surrogate_params(&m.spectrum, n)?;
    let chunks = map_chunks(trials, |range| {
        let mut acc = WeightedAccumulator::new(0);
        let mut template: Option<T> = None;
        for i in range {
            let mut rng = trial_rng(seed, STREAM_ORACLE, i as u64);
            let k = match params.regime {
                Regime::Interpolating => d,
                _ => poisson(params.gamma, &mut rng),
            };
            let admissible = match params.regime {
                Regime::Under => k <= d,
                Regime::Interpolating => true,
                Regime::Over => k >= d,
            };
            if !admissible {
                acc.push_zero();
                continue;
            }
            let x = m.draw_rows(k, &mut rng);
            let log_w = if k <= d {
                log_det_gram_unchecked(&x)
            } else {
                log_det_gram_unchecked(&x.transpose())
            };
            if log_w == f64::NEG_INFINITY {
                acc.push_zero();
                continue;
            }
            let value = f(&x);
            acc.push(log_w, &value.to_flat());
            template.get_or_insert(value);
        }
        (acc, template)
    });
    let mut total = WeightedAccumulator::new(0);
    let mut template = None;
    for (acc, t) in &chunks {
        total.merge(acc);
        if template.is_none() {
            template = t.clone();
        }
    }
    let template = template.ok_or_else(|| {
        Error::Numerical("every importance weight vanished".to_string())
    })?;
    total
        .finish(&template)
        .ok_or_else(|| Error::Numerical("every importance weight vanished".to_string()))
}

/// One surrogate draw with chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateDraw {
    pub x: Matrix,
    /// Rows produced by the determinantal chain (`k` below the threshold,
    /// `d` above it).
    pub chain_rows: usize,
    pub proposals: usize,
    pub accepted: usize,
}

impl SurrogateDraw {
    pub fn k(&self) -> usize {
        self.x.nrows()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Metropolis acceptance probability for a row replacement whose Gram
/// log-determinant moves from `current` to `proposed`.
pub fn acceptance_probability(current: f64, proposed: f64) -> f64 {
    if proposed == f64::NEG_INFINITY {
        0.0
    } else {
        (proposed - current).exp().min(1.0)
    }
}

/// Runs the row-replacement chain on `k x d` designs (`k <= d`) with
/// stationary density proportional to `det(X X^T) prod mu(x_i)`.
fn determinantal_chain(
    m: &MeasureSpec,
    k: usize,
    steps: usize,
    rng: &mut Rng,
) -> Result<SurrogateDraw> {
    let d = m.dim();
    if k == 0 {
        return Ok(SurrogateDraw {
            x: Matrix::zeros(0, d),
            chain_rows: 0,
            proposals: 0,
            accepted: 0,
        });
    }
    let mut x = m.draw_rows(k, rng);
    let mut log_det = log_det_gram_unchecked(&x);
    let mut attempts = 1;
    while log_det == f64::NEG_INFINITY {
        if attempts >= 1000 {
            return Err(Error::Numerical(
                "could not draw a full-rank initial design".to_string(),
            ));
        }
        x = m.draw_rows(k, rng);
        log_det = log_det_gram_unchecked(&x);
        attempts += 1;
    }
    let mut accepted = 0;
    for _ in 0..steps {
        let i = rng.random_range(0..k);
        let old = x.row(i).clone_owned();
        let fresh = m.draw_row(rng);
        x.set_row(i, &fresh.transpose());
        let proposed = log_det_gram_unchecked(&x);
        let a = acceptance_probability(log_det, proposed);
        if a >= 1.0 || rng.random::<f64>() < a {
            log_det = proposed;
            accepted += 1;
        } else {
            x.set_row(i, &old);
        }
    }
    Ok(SurrogateDraw {
        x,
        chain_rows: k,
        proposals: steps,
        accepted,
    })
}

/// Default chain length: `100 k` steps.
pub fn default_chain_steps(k: usize) -> usize {
    100 * k
}

/// Reusable surrogate sampler for a fixed measure and expected size.
#[derive(Debug, Clone)]
pub struct SurrogateSampler {
    measure: MeasureSpec,
    n: usize,
    chain_steps: Option<usize>,
    size_law: Option<WeightedIndex<f64>>,
}

impl SurrogateSampler {
    /// `chain_steps = None` uses [`default_chain_steps`].
    pub fn new(measure: MeasureSpec, n: usize, chain_steps: Option<usize>) -> Result<Self> {
        let d = measure.dim();
        if n == 0 {
            return Err(invalid("sample size must be at least 1"));
        }
        let size_law = if n < d {
            let pmf = surrogate_size_pmf(&measure.spectrum, n, measure.law)?;
            Some(WeightedIndex::new(&pmf).map_err(|e| Error::Numerical(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            measure,
            n,
            chain_steps,
            size_law,
        })
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn draw(&self, rng: &mut Rng) -> Result<SurrogateDraw> {
        let d = self.measure.dim();
        let steps = |k: usize| self.chain_steps.unwrap_or_else(|| default_chain_steps(k));
        match &self.size_law {
            Some(law) => {
                let k = law.sample(rng);
                determinantal_chain(&self.measure, k, steps(k), rng)
            }
            None => {
                let block = determinantal_chain(&self.measure, d, steps(d), rng)?;
                let extra = poisson((self.n - d) as f64, rng);
                let tail = self.measure.draw_rows(extra, rng);
                let mut rows: Vec<Vector> = (0..d)
                    .map(|i| block.x.row(i).transpose())
                    .chain((0..extra).map(|i| tail.row(i).transpose()))
                    .collect();
                rows.shuffle(rng);
                let x = Matrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
                Ok(SurrogateDraw { x, ..block })
            }
        }
    }

    /// Draw number `index` of the family identified by `seed`.
    pub fn draw_indexed(&self, seed: u64, index: u64) -> Result<SurrogateDraw> {
        self.draw(&mut trial_rng(seed, STREAM_CHAIN, index))
    }
}

/// Surrogate draw for `n < d`: size from the determinantal size law, then the
/// row-replacement chain. Needs rows in general position.
pub fn sample_surrogate_under(
    m: &MeasureSpec,
    n: usize,
    chain_steps: Option<usize>,
    seed: u64,
) -> Result<SurrogateDraw> {
    if n >= m.dim() {
        return Err(Error::Domain(format!(
            "under-determined sampler needs n < d, got n = {n}, d = {}",
            m.dim()
        )));
    }
    SurrogateSampler::new(m.clone(), n, chain_steps)?.draw_indexed(seed, 0)
}

/// Surrogate draw for `n > d`: a `d x d` determinantal block, `Poisson(n - d)`
/// extra i.i.d. rows, and a uniformly random row order.
pub fn sample_surrogate_over(
    m: &MeasureSpec,
    n: usize,
    chain_steps: Option<usize>,
    seed: u64,
) -> Result<SurrogateDraw> {
    if n <= m.dim() {
        return Err(Error::Domain(format!(
            "over-determined sampler needs n > d, got n = {n}, d = {}",
            m.dim()
        )));
    }
    SurrogateSampler::new(m.clone(), n, chain_steps)?.draw_indexed(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projection_complement;

    fn iso_gauss(d: usize) -> MeasureSpec {
        MeasureSpec::gaussian(Spectrum::isotropic(d, 1.0).unwrap())
    }

    #[test]
    fn iid_shapes_and_determinism() {
        let m = iso_gauss(3);
        assert_eq!(sample_iid(&m, 0, 1).shape(), (0, 3));
        assert_eq!(sample_iid(&m, 5, 9), sample_iid(&m, 5, 9));
        assert_ne!(sample_iid(&m, 5, 9), sample_iid(&m, 5, 10));
    }

    #[test]
    fn rademacher_support() {
        let m = MeasureSpec::new(Spectrum::isotropic(4, 1.0).unwrap(), EntryLaw::Rademacher);
        let z = m.draw_standard(50, &mut trial_rng(3, 0, 0));
        assert!(z.iter().all(|v| *v == 1.0 || *v == -1.0));
    }

    #[test]
    fn uniform_support_and_variance() {
        let m = MeasureSpec::new(Spectrum::isotropic(1, 1.0).unwrap(), EntryLaw::UniformPmSqrt3);
        let z = m.draw_standard(200_000, &mut trial_rng(4, 0, 0));
        assert!(z.iter().all(|v| v.abs() <= 3f64.sqrt()));
        let var = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        assert!((var - 1.0).abs() < 0.01);
    }

    #[test]
    fn responses() {
        let x = sample_iid(&iso_gauss(3), 4, 2);
        let w = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(gen_responses(&x, &w, 0.0, 1).unwrap(), &x * &w);
        assert_eq!(gen_responses(&x, &w, 1.0, 1).unwrap(), gen_responses(&x, &w, 1.0, 1).unwrap());
        assert!(gen_responses(&x, &Vector::zeros(2), 1.0, 1).is_err());
    }

    #[test]
    fn csv_layout() {
        let s = DesignSample::new(
            Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.5]),
            Vector::from_vec(vec![0.5, -1.0]),
        )
        .unwrap();
        assert_eq!(s.to_csv(), "x_1,x_2,y\n1,2,0.5\n3,4.5,-1\n");
    }

    #[test]
    fn oracle_constant_functional() {
        let est = surrogate_expectation_oracle(|_| 1.0, &iso_gauss(3), 2, 1000, 5).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert!(est.effective_sample_size <= est.trials as f64);
        assert!(surrogate_expectation_oracle(|_| 1.0, &iso_gauss(3), 2, 99, 5).is_err());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn oracle_is_thread_independent() {
        let m = iso_gauss(3);
        let f = |x: &Matrix| projection_complement(x).unwrap();
        let a = surrogate_expectation_oracle(f, &m, 1, 3000, 8).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| surrogate_expectation_oracle(f, &m, 1, 3000, 8).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rank_deficient_proposal_is_rejected() {
        assert_eq!(acceptance_probability(1.0, f64::NEG_INFINITY), 0.0);
        assert_eq!(acceptance_probability(1.0, 2.0), 1.0);
        assert!((acceptance_probability(2.0, 1.0) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn samplers_respect_structure() {
        let m = iso_gauss(4);
        for seed in 0..20 {
            let under = sample_surrogate_under(&m, 2, Some(50), seed).unwrap();
            assert!(under.k() <= 4);
            let over = sample_surrogate_over(&m, 6, Some(50), seed).unwrap();
            assert!(over.k() >= 4);
            assert_eq!(over.chain_rows, 4);
        }
        assert!(sample_surrogate_under(&m, 4, None, 0).is_err());
        assert!(sample_surrogate_over(&m, 4, None, 0).is_err());
        let rad = MeasureSpec::new(Spectrum::isotropic(4, 1.0).unwrap(), EntryLaw::Rademacher);
        assert!(matches!(
            sample_surrogate_under(&rad, 2, None, 0),
            Err(Error::UnsupportedMeasure(_))
        ));
        assert!(sample_surrogate_over(&rad, 6, Some(20), 0).is_ok());
    }
}
