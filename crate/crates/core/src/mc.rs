//! Reproducible Monte Carlo execution.
//!
//! Every trial draws from its own ChaCha8 stream, addressed by
//! `(seed, trial index)`. Trials are split into contiguous blocks, one per
//! worker, and the per-block states are merged in block order, so a run is
//! a pure function of `(seed, workers, trials, task)`.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Address of an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// State that can be combined with the state of another block of trials.
pub trait Mergeable {
    fn merge(&mut self, other: Self);
}

impl Mergeable for u64 {
    fn merge(&mut self, other: Self) {
        *self += other;
    }
}

impl Mergeable for () {
    fn merge(&mut self, _other: Self) {}
}

impl<T: Mergeable, const N: usize> Mergeable for [T; N] {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

/// Elementwise merge; an empty vector acts as the identity.
impl<T: Mergeable> Mergeable for Vec<T> {
    fn merge(&mut self, other: Self) {
        if self.is_empty() {
            *self = other;
            return;
        }
        assert_eq!(self.len(), other.len(), "merging vectors of different lengths");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl<A: Mergeable, B: Mergeable> Mergeable for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

impl<A: Mergeable, B: Mergeable, C: Mergeable> Mergeable for (A, B, C) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
        self.2.merge(other.2);
    }
}

/// Streaming count, mean and centered power sums up to order four.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    min: f64,
    max: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut acc = Self::new();
        xs.iter().for_each(|&x| acc.push(x));
        acc
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    /// Pairwise merge of two accumulators.
    pub fn combine(a: &Self, b: &Self) -> Self {
        if a.count == 0 {
            return *b;
        }
        if b.count == 0 {
            return *a;
        }
        let (na, nb) = (a.count as f64, b.count as f64);
        let n = na + nb;
        let delta = b.mean - a.mean;
        let d2 = delta * delta;
        let mean = a.mean + delta * nb / n;
        let m2 = a.m2 + b.m2 + d2 * na * nb / n;
        let m3 = a.m3
            + b.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * b.m2 - nb * a.m2) / n;
        let m4 = a.m4
            + b.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * b.m2 + nb * nb * a.m2) / (n * n)
            + 4.0 * delta * (na * b.m3 - nb * a.m3) / n;
        Self {
            count: a.count + b.count,
            mean,
            m2,
            m3,
            m4,
            min: a.min.min(b.min),
            max: a.max.max(b.max),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn m3(&self) -> f64 {
        self.m3
    }

    pub fn m4(&self) -> f64 {
        self.m4
    }

    /// Unbiased sample variance (`NaN` below two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn population_variance(&self) -> f64 {
        self.m2 / self.count as f64
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Plain (non-excess) sample kurtosis `n m4 / m2^2`.
    pub fn kurtosis(&self) -> f64 {
        self.count as f64 * self.m4 / (self.m2 * self.m2)
    }

    pub fn skewness(&self) -> f64 {
        let n = self.count as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Mean with a normal-theory interval at quantile `z`.
    pub fn report(&self, z: f64) -> EstimateReport {
        EstimateReport::from_mean_se(self.mean, self.se(), self.count, z)
    }
}

impl Mergeable for Accumulator {
    fn merge(&mut self, other: Self) {
        *self = Self::combine(self, &other);
    }
}

/// Point estimate with standard error and confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
}

impl EstimateReport {
    pub fn from_mean_se(point: f64, se: f64, trials: u64, z: f64) -> Self {
        Self {
            point,
            se,
            ci_low: point - z * se,
            ci_high: point + z * se,
            trials,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn scaled(&self, c: f64) -> Self {
        let (lo, hi) = (c * self.ci_low, c * self.ci_high);
        Self {
            point: c * self.point,
            se: c.abs() * self.se,
            ci_low: lo.min(hi),
            ci_high: lo.max(hi),
            trials: self.trials,
        }
    }
}

/// Wilson score interval for a binomial proportion. The point is the raw
/// proportion and `se` its plug-in standard error.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<EstimateReport> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidArgument(format!(
            "wilson interval needs 0 <= successes <= trials and trials >= 1, got {successes}/{trials}"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let ci_low = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let ci_high = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok(EstimateReport {
        point: p,
        se: (p * (1.0 - p) / n).sqrt(),
        ci_low: ci_low.min(p),
        ci_high: ci_high.max(p),
        trials,
    })
}

/// Half-open trial range handled by `worker` out of `workers`.
pub fn block_range(trials: u64, workers: usize, worker: usize) -> (u64, u64) {
    let w = workers as u128;
    let t = trials as u128;
    let lo = t * worker as u128 / w;
    let hi = t * (worker as u128 + 1) / w;
    (lo as u64, hi as u64)
}

fn run_block<S, F>(seed: u64, lo: u64, hi: u64, worker: usize, task: &F) -> Result<S>
where
    S: Mergeable + Default,
    F: Fn(&mut ChaCha8Rng, u64, &mut S) -> Result<()>,
{
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut state = S::default();
        let base = ChaCha8Rng::seed_from_u64(seed);
        for trial in lo..hi {
            let mut rng = base.clone();
            rng.set_stream(trial);
            task(&mut rng, trial, &mut state)?;
        }
        Ok(state)
    }));
    match outcome {
        Ok(result) => result,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            Err(Error::TaskFailure { worker, message })
        }
    }
}

fn check_run_args(trials: u64, workers: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if workers == 0 {
        return Err(Error::InvalidArgument("workers must be at least 1".into()));
    }
    Ok(())
}

fn merge_blocks<S: Mergeable + Default>(blocks: Vec<Result<S>>) -> Result<S> {
    let mut total = S::default();
    for block in blocks {
        total.merge(block?);
    }
    Ok(total)
}

/// Runs `task` for every trial on a single thread.
pub fn run_sequential<S, F>(trials: u64, seed: u64, task: F) -> Result<S>
where
    S: Mergeable + Default,
    F: Fn(&mut ChaCha8Rng, u64, &mut S) -> Result<()>,
{
    check_run_args(trials, 1)?;
    run_block(seed, 0, trials, 0, &task)
}

/// Runs `task` for every trial on `workers` threads, one contiguous block of
/// trials per worker. Without the `parallel` feature the blocks run one
/// after another on the calling thread, with identical results.
pub fn run_parallel<S, F>(trials: u64, workers: usize, seed: u64, task: F) -> Result<S>
where
    S: Mergeable + Default + Send,
    F: Fn(&mut ChaCha8Rng, u64, &mut S) -> Result<()> + Sync,
{
    check_run_args(trials, workers)?;
    let blocks = run_blocks(trials, workers, seed, &task)?;
    merge_blocks(blocks)
}

#[cfg(feature = "parallel")]
fn run_blocks<S, F>(trials: u64, workers: usize, seed: u64, task: &F) -> Result<Vec<Result<S>>>
where
    S: Mergeable + Default + Send,
    F: Fn(&mut ChaCha8Rng, u64, &mut S) -> Result<()> + Sync,
{
    use rayon::prelude::*;
    if workers == 1 {
        return Ok(vec![run_block(seed, 0, trials, 0, task)]);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..workers)
            .into_par_iter()
            .map(|w| {
                let (lo, hi) = block_range(trials, workers, w);
                run_block(seed, lo, hi, w, task)
            })
            .collect()
    }))
}

#[cfg(not(feature = "parallel"))]
fn run_blocks<S, F>(trials: u64, workers: usize, seed: u64, task: &F) -> Result<Vec<Result<S>>>
where
    S: Mergeable + Default + Send,
    F: Fn(&mut ChaCha8Rng, u64, &mut S) -> Result<()> + Sync,
{
    Ok((0..workers)
        .map(|w| {
            let (lo, hi) = block_range(trials, workers, w);
            run_block(seed, lo, hi, w, task)
        })
        .collect())
}

/// Number of hardware threads, at least one.
pub fn available_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    fn two_pass(xs: &[f64]) -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>();
        (mean, m(2), m(3), m(4))
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map(|_| RngStream::new(1, 0).rng().random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut r0 = RngStream::new(1, 0).rng();
        let mut r1 = RngStream::new(1, 1).rng();
        let x: Vec<u64> = (0..16).map(|_| r0.random()).collect();
        let y: Vec<u64> = (0..16).map(|_| r1.random()).collect();
        assert_ne!(x, y);
    }

    #[test]
    fn accumulator_matches_two_pass() {
        let mut rng = RngStream::new(3, 0).rng();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() * 10.0 - 2.0).collect();
        let acc = Accumulator::from_slice(&xs);
        let (mean, m2, m3, m4) = two_pass(&xs);
        assert!(rel(acc.mean(), mean) < 1e-9);
        assert!(rel(acc.m2(), m2) < 1e-9);
        assert!(rel(acc.m3(), m3) < 1e-7);
        assert!(rel(acc.m4(), m4) < 1e-9);
        assert!(rel(acc.variance(), m2 / 9999.0) < 1e-9);
    }

    #[test]
    fn combine_identity_and_split() {
        let mut rng = RngStream::new(4, 0).rng();
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>().powi(3)).collect();
        let whole = Accumulator::from_slice(&xs);
        assert_eq!(Accumulator::combine(&whole, &Accumulator::new()), whole);
        assert_eq!(Accumulator::combine(&Accumulator::new(), &whole), whole);
        for _ in 0..20 {
            let cut = rng.random_range(0..xs.len());
            let m = Accumulator::combine(
                &Accumulator::from_slice(&xs[..cut]),
                &Accumulator::from_slice(&xs[cut..]),
            );
            assert_eq!(m.count(), whole.count());
            assert!(rel(m.mean(), whole.mean()) < 1e-9);
            assert!(rel(m.m2(), whole.m2()) < 1e-9);
            assert!(rel(m.m3(), whole.m3()) < 1e-9);
            assert!(rel(m.m4(), whole.m4()) < 1e-9);
            assert_eq!(m.min(), whole.min());
            assert_eq!(m.max(), whole.max());
        }
    }

    #[test]
    fn normal_kurtosis() {
        let mut rng = RngStream::new(5, 0).rng();
        let n = 1_000_000;
        let mut acc = Accumulator::new();
        for _ in 0..n {
            let x: f64 = StandardNormal.sample(&mut rng);
            acc.push(x);
        }
        // asymptotic variance of the sample kurtosis of a normal is 24/n
        let se = (24.0 / n as f64).sqrt();
        assert!((acc.kurtosis() - 3.0).abs() < 4.0 * se, "kurtosis {}", acc.kurtosis());
    }

    #[test]
    fn wilson_examples() {
        let r = wilson_interval(0, 50, Z95).unwrap();
        assert_eq!(r.ci_low, 0.0);
        let r = wilson_interval(50, 50, Z95).unwrap();
        assert_eq!(r.ci_high, 1.0);
        let r = wilson_interval(50, 100, 1.96).unwrap();
        assert!(r.contains(0.5));
        assert!((r.ci_high - r.ci_low - 0.1923).abs() < 1e-3);
        assert!(wilson_interval(3, 2, Z95).is_err());
        assert!(wilson_interval(0, 0, Z95).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let r: Result<u64> = run_parallel(0, 2, 1, |_, _, s: &mut u64| {
            *s += 1;
            Ok(())
        });
        assert!(r.is_err());
        let r: Result<u64> = run_sequential(0, 1, |_, _, s: &mut u64| {
            *s += 1;
            Ok(())
        });
        assert!(r.is_err());
    }

    #[test]
    fn counting_tasks_agree_across_workers() {
        let task = |rng: &mut ChaCha8Rng, _t: u64, s: &mut [u64; 2]| {
            s[(rng.random::<f64>() < 0.3) as usize] += 1;
            Ok(())
        };
        let one: [u64; 2] = run_parallel(10_001, 1, 9, task).unwrap();
        let eight: [u64; 2] = run_parallel(10_001, 8, 9, task).unwrap();
        let seq: [u64; 2] = run_sequential(10_001, 9, task).unwrap();
        assert_eq!(one, eight);
        assert_eq!(one, seq);
        assert_eq!(one[0] + one[1], 10_001);
    }

    #[test]
    fn accumulators_are_deterministic_per_workers() {
        let task = |rng: &mut ChaCha8Rng, _t: u64, s: &mut Accumulator| {
            s.push(rng.random::<f64>());
            Ok(())
        };
        let a: Accumulator = run_parallel(5000, 3, 2, task).unwrap();
        let b: Accumulator = run_parallel(5000, 3, 2, task).unwrap();
        assert_eq!(a, b);
        let c: Accumulator = run_parallel(5000, 5, 2, task).unwrap();
        assert_eq!(a.count(), c.count());
        assert!(rel(a.mean(), c.mean()) < 1e-9);
    }

    #[test]
    fn panics_become_task_failures() {
        let r: Result<u64> = run_parallel(100, 4, 1, |_, t, s: &mut u64| {
            if t == 60 {
                panic!("trial sixty");
            }
            *s += 1;
            Ok(())
        });
        match r {
            Err(Error::TaskFailure { worker, message }) => {
                assert_eq!(worker, 2);
                assert!(message.contains("sixty"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blocks_cover_all_trials() {
        for (trials, workers) in [(1u64, 8usize), (7, 3), (100, 8), (1_000_003, 7)] {
            let mut next = 0;
            for w in 0..workers {
                let (lo, hi) = block_range(trials, workers, w);
                assert_eq!(lo, next);
                next = hi;
            }
            assert_eq!(next, trials);
        }
    }

    proptest! {
        #[test]
        fn merge_tree_shape_is_irrelevant(
            xs in prop::collection::vec(-100.0f64..100.0, 2..200),
            cuts in prop::collection::vec(any::<prop::sample::Index>(), 1..6),
        ) {
            let whole = Accumulator::from_slice(&xs);
            let mut idx: Vec<usize> = cuts.iter().map(|c| c.index(xs.len())).collect();
            idx.push(0);
            idx.push(xs.len());
            idx.sort_unstable();
            let parts: Vec<Accumulator> = idx
                .windows(2)
                .map(|w| Accumulator::from_slice(&xs[w[0]..w[1]]))
                .collect();
            let left = parts.iter().fold(Accumulator::new(), |a, b| Accumulator::combine(&a, b));
            let right = parts.iter().rev().fold(Accumulator::new(), |a, b| Accumulator::combine(b, &a));
            for m in [left, right] {
                prop_assert_eq!(m.count(), whole.count());
                prop_assert!((m.mean() - whole.mean()).abs() <= 1e-9 * whole.mean().abs().max(1.0));
                prop_assert!((m.m2() - whole.m2()).abs() <= 1e-9 * whole.m2().abs().max(1.0));
                prop_assert!((m.m4() - whole.m4()).abs() <= 1e-9 * whole.m4().abs().max(1.0));
            }
        }
    }
}
