//! Deterministic Monte Carlo plumbing.
//!
//! Every trial owns a random stream derived from `(seed, stream, index)`, and
//! trials are reduced in fixed-size chunks whose partial results are merged
//! in index order. Results therefore do not depend on the number of worker
//! threads.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, Vector};

pub type Rng = ChaCha8Rng;

/// Trials per reduction chunk. Part of the reproducibility contract: changing
/// it changes floating-point summation order.
pub const CHUNK: usize = 512;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labelled sub-run, e.g. one point of a sweep.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(tag ^ 0x5eed))
}

/// Random stream for one trial.
pub fn trial_rng(seed: u64, stream: u64, index: u64) -> Rng {
    let key = splitmix(splitmix(seed ^ splitmix(stream)).wrapping_add(index));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Applies `f` to consecutive index ranges of length [`CHUNK`] and returns the
/// per-chunk results in order. Runs on the rayon pool when the `parallel`
/// feature is enabled.
pub fn map_chunks<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let ranges: Vec<Range<usize>> = (0..n)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(n))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ranges.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(f).collect()
    }
}

/// Values a Monte Carlo functional may return: scalars, vectors, matrices.
pub trait Observable: Clone + Send + Sync {
    fn len(&self) -> usize;
    fn write_flat(&self, out: &mut [f64]);
    /// Builds a value with the shape of `self` from flat data.
    fn with_flat(&self, data: &[f64]) -> Self;

    fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.write_flat(&mut v);
        v
    }
}

impl Observable for f64 {
    fn len(&self) -> usize {
        1
    }
    fn write_flat(&self, out: &mut [f64]) {
        out[0] = *self;
    }
    fn with_flat(&self, data: &[f64]) -> Self {
        data[0]
    }
}

impl Observable for Vector {
    fn len(&self) -> usize {
        self.nrows()
    }
    fn write_flat(&self, out: &mut [f64]) {
        out.copy_from_slice(self.as_slice());
    }
    fn with_flat(&self, data: &[f64]) -> Self {
        Vector::from_column_slice(data)
    }
}

impl Observable for Matrix {
    fn len(&self) -> usize {
        self.nrows() * self.ncols()
    }
    fn write_flat(&self, out: &mut [f64]) {
        out.copy_from_slice(self.as_slice());
    }
    fn with_flat(&self, data: &[f64]) -> Self {
        Matrix::from_column_slice(self.nrows(), self.ncols(), data)
    }
}

/// Mean, standard error and bookkeeping of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub trials: usize,
    /// `(sum w)^2 / sum w^2` for weighted runs, `trials` otherwise.
    pub effective_sample_size: f64,
}

impl MonteCarloEstimate<f64> {
    /// `|mean - target| / std_error`, with `0/0 = 0`.
    pub fn z_score(&self, target: f64) -> f64 {
        z_score(self.mean - target, self.std_error)
    }

    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

pub(crate) fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Unweighted running moments, merged with the pairwise update of Chan et al.
#[derive(Debug, Clone)]
pub struct MeanAccumulator {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MeanAccumulator {
    pub fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn finish<T: Observable>(&self, template: &T) -> MonteCarloEstimate<T> {
        let n = self.count as f64;
        let se: Vec<f64> = self
            .m2
            .iter()
            .map(|m2| {
                if self.count > 1 {
                    (m2.max(0.0) / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        MonteCarloEstimate {
            mean: template.with_flat(&self.mean),
            std_error: template.with_flat(&se),
            trials: self.count,
            effective_sample_size: n,
        }
    }
}

/// Self-normalized importance-weighting sums kept relative to a running
/// maximum log-weight so that determinant weights never overflow.
#[derive(Debug, Clone)]
pub struct WeightedAccumulator {
    trials: usize,
    shift: f64,
    sum_w: f64,
    sum_w2: f64,
    sum_wf: Vec<f64>,
    sum_w2f: Vec<f64>,
    sum_w2f2: Vec<f64>,
}

impl WeightedAccumulator {
    /// `len` may be zero; the value length is then taken from the first push.
    pub fn new(len: usize) -> Self {
        Self {
            trials: 0,
            shift: f64::NEG_INFINITY,
            sum_w: 0.0,
            sum_w2: 0.0,
            sum_wf: vec![0.0; len],
            sum_w2f: vec![0.0; len],
            sum_w2f2: vec![0.0; len],
        }
    }

    fn ensure_len(&mut self, len: usize) {
        if self.sum_wf.len() < len {
            self.sum_wf.resize(len, 0.0);
            self.sum_w2f.resize(len, 0.0);
            self.sum_w2f2.resize(len, 0.0);
        }
    }

    fn rescale(&mut self, new_shift: f64) {
        if new_shift <= self.shift {
            return;
        }
        if self.shift.is_finite() {
            let r = (self.shift - new_shift).exp();
            let r2 = r * r;
            self.sum_w *= r;
            self.sum_w2 *= r2;
            self.sum_wf.iter_mut().for_each(|v| *v *= r);
            self.sum_w2f.iter_mut().for_each(|v| *v *= r2);
            self.sum_w2f2.iter_mut().for_each(|v| *v *= r2);
        }
        self.shift = new_shift;
    }

    /// Records a trial whose weight vanished.
    pub fn push_zero(&mut self) {
        self.trials += 1;
    }

    /// Records a trial with log-weight `log_w` and value `f`.
    pub fn push(&mut self, log_w: f64, f: &[f64]) {
        self.trials += 1;
        if log_w == f64::NEG_INFINITY {
            return;
        }
        self.ensure_len(f.len());
        self.rescale(log_w);
        let w = (log_w - self.shift).exp();
        let w2 = w * w;
        self.sum_w += w;
        self.sum_w2 += w2;
        for (i, &v) in f.iter().enumerate() {
            self.sum_wf[i] += w * v;
            self.sum_w2f[i] += w2 * v;
            self.sum_w2f2[i] += w2 * v * v;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.trials += other.trials;
        if other.sum_w == 0.0 {
            return;
        }
        self.ensure_len(other.sum_wf.len());
        let mut o = other.clone();
        o.ensure_len(self.sum_wf.len());
        if o.shift > self.shift {
            self.rescale(o.shift);
        } else {
            o.rescale(self.shift);
        }
        self.sum_w += o.sum_w;
        self.sum_w2 += o.sum_w2;
        for i in 0..self.sum_wf.len() {
            self.sum_wf[i] += o.sum_wf[i];
            self.sum_w2f[i] += o.sum_w2f[i];
            self.sum_w2f2[i] += o.sum_w2f2[i];
        }
    }

    /// Ratio estimate with delta-method standard errors. `None` when every
    /// weight vanished.
    pub fn finish<T: Observable>(&self, template: &T) -> Option<MonteCarloEstimate<T>> {
        if self.sum_w == 0.0 {
            return None;
        }
        let mean: Vec<f64> = self.sum_wf.iter().map(|s| s / self.sum_w).collect();
        let se: Vec<f64> = (0..mean.len())
            .map(|i| {
                let r = mean[i];
                let num = self.sum_w2f2[i] - 2.0 * r * self.sum_w2f[i] + r * r * self.sum_w2;
                num.max(0.0).sqrt() / self.sum_w
            })
            .collect();
        Some(MonteCarloEstimate {
            mean: template.with_flat(&mean),
            std_error: template.with_flat(&se),
            trials: self.trials,
            effective_sample_size: self.sum_w * self.sum_w / self.sum_w2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_distinct_and_repeatable() {
        let a: u64 = trial_rng(1, 0, 0).random();
        let b: u64 = trial_rng(1, 0, 0).random();
        let c: u64 = trial_rng(1, 0, 1).random();
        let d: u64 = trial_rng(1, 1, 0).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn chunk_ranges_cover_everything() {
        let parts = map_chunks(CHUNK * 2 + 3, |r| r.len());
        assert_eq!(parts, vec![CHUNK, CHUNK, 3]);
        assert!(map_chunks(0, |r| r.len()).is_empty());
    }

    #[test]
    fn mean_accumulator_merge_matches_direct() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let mut all = MeanAccumulator::new(1);
        xs.iter().for_each(|x| all.push(&[*x]));
        let mut a = MeanAccumulator::new(1);
        let mut b = MeanAccumulator::new(1);
        xs[..37].iter().for_each(|x| a.push(&[*x]));
        xs[37..].iter().for_each(|x| b.push(&[*x]));
        a.merge(&b);
        let (ea, eb) = (all.finish(&0.0), a.finish(&0.0));
        assert!((ea.mean - eb.mean).abs() < 1e-14);
        assert!((ea.std_error - eb.std_error).abs() < 1e-14);
    }

    #[test]
    fn weighted_constant_functional_is_exact() {
        let mut acc = WeightedAccumulator::new(1);
        for i in 0..50 {
            acc.push(i as f64 * 7.0 - 100.0, &[1.0]);
        }
        acc.push_zero();
        let est = acc.finish(&0.0).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.trials, 51);
        assert!(est.effective_sample_size <= 51.0);
    }

    #[test]
    fn weighted_merge_handles_shift() {
        let mut a = WeightedAccumulator::new(1);
        let mut b = WeightedAccumulator::new(1);
        a.push(0.0, &[1.0]);
        b.push(800.0, &[3.0]);
        b.push(800.0, &[5.0]);
        a.merge(&b);
        let est = a.finish(&0.0).unwrap();
        assert!((est.mean - 4.0).abs() < 1e-12);
        assert!((est.effective_sample_size - 2.0).abs() < 1e-12);
    }
}
