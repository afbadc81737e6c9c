//! Dice, interval conventions and the beats relation.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Face interval `[z1, z2]` together with the number of faces.
///
/// The balance target `n (z1 + z2) / 2` is always recomputed from the
/// endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    z1: f64,
    z2: f64,
    n: usize,
}

impl IntervalSpec {
    pub fn new(z1: f64, z2: f64, n: usize) -> Result<Self> {
        if !(z1.is_finite() && z2.is_finite() && z1 < z2 && n >= 2) {
            return Err(Error::InvalidInterval { z1, z2, n });
        }
        Ok(Self { z1, z2, n })
    }

    /// `[0, 1]`, balanced face-sum `n/2`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n)
    }

    /// `[0, n]`, balanced face-sum `n^2/2`.
    pub fn wide(n: usize) -> Result<Self> {
        Self::new(0.0, n as f64, n)
    }

    /// `[-sqrt 3, sqrt 3]`: centered faces of unit variance, balanced face-sum 0.
    pub fn symmetric(n: usize) -> Result<Self> {
        let s = 3f64.sqrt();
        Self::new(-s, s, n)
    }

    pub fn z1(&self) -> f64 {
        self.z1
    }

    pub fn z2(&self) -> f64 {
        self.z2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> f64 {
        self.z2 - self.z1
    }

    pub fn balance_target(&self) -> f64 {
        self.n as f64 * (self.z1 + self.z2) / 2.0
    }

    /// Absolute face-sum tolerance used to validate balanced dice.
    pub fn balance_tolerance(&self) -> f64 {
        1e-9 * self.n as f64 * self.width().max(1.0)
    }

    /// Uniform cdf on the interval, clamped to `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        ((x - self.z1) / self.width()).clamp(0.0, 1.0)
    }

    /// Variance of a single uniform face, `(z2 - z1)^2 / 12`.
    pub fn face_variance(&self) -> f64 {
        self.width() * self.width() / 12.0
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.z1, self.z2, n)
    }

    pub fn same_interval(&self, other: &Self) -> bool {
        self.z1 == other.z1 && self.z2 == other.z2
    }

    pub fn is_symmetric_unit_variance(&self) -> bool {
        let s = 3f64.sqrt();
        (self.z1 + s).abs() < 1e-12 && (self.z2 - s).abs() < 1e-12
    }

    /// Increasing affine map from this interval onto `target`.
    pub fn map_to(&self, target: &Self, x: f64) -> f64 {
        target.z1 + (x - self.z1) * (target.width() / self.width())
    }
}

/// An `n`-faced die. Faces are kept both in insertion order and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Die {
    faces: Vec<f64>,
    sorted: Vec<f64>,
    spec: IntervalSpec,
    balanced: bool,
}

impl Die {
    /// Builds a die from explicit faces. The balanced flag is set when the
    /// face-sum is within [`IntervalSpec::balance_tolerance`] of the target.
    pub fn new(faces: Vec<f64>, spec: IntervalSpec) -> Result<Self> {
        if faces.len() != spec.n {
            return Err(Error::DimensionMismatch {
                left: faces.len(),
                right: spec.n,
            });
        }
        if let Some(&value) = faces
            .iter()
            .find(|&&f| !(f >= spec.z1 && f <= spec.z2))
        {
            return Err(Error::FaceOutOfRange {
                value,
                z1: spec.z1,
                z2: spec.z2,
            });
        }
        let balanced = (neumaier_sum(&faces) - spec.balance_target()).abs()
            <= spec.balance_tolerance();
        Ok(Self::from_parts(faces, spec, balanced))
    }

    fn from_parts(faces: Vec<f64>, spec: IntervalSpec, balanced: bool) -> Self {
        let mut sorted = faces.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        Self {
            faces,
            sorted,
            spec,
            balanced,
        }
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn sorted_faces(&self) -> &[f64] {
        &self.sorted
    }

    pub fn spec(&self) -> &IntervalSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    pub fn face_sum(&self) -> f64 {
        neumaier_sum(&self.faces)
    }

    /// Deviation of the face-sum from the balance target.
    pub fn balance_deviation(&self) -> f64 {
        self.face_sum() - self.spec.balance_target()
    }

    pub fn has_ties_with(&self, other: &Die) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.sorted.len() && j < other.sorted.len() {
            match self.sorted[i].total_cmp(&other.sorted[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Result of comparing two dice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    FirstWins,
    SecondWins,
    Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatsOutcome {
    /// `sum_{i,j} sign(a_i - b_j)`.
    pub margin: i64,
    pub result: Outcome,
}

impl BeatsOutcome {
    pub fn from_margin(margin: i64) -> Self {
        let result = match margin.cmp(&0) {
            Ordering::Greater => Outcome::FirstWins,
            Ordering::Less => Outcome::SecondWins,
            Ordering::Equal => Outcome::Draw,
        };
        Self { margin, result }
    }
}

/// `n` iid uniform faces.
pub fn sample_iid<R: Rng + ?Sized>(spec: &IntervalSpec, rng: &mut R) -> Die {
    let w = spec.width();
    let faces = (0..spec.n)
        .map(|_| spec.z1 + w * rng.random::<f64>())
        .collect();
    Die::from_parts(faces, *spec, false)
}

/// Default rejection budget, `100 * ceil(sqrt n)`.
pub fn default_max_attempts(n: usize) -> usize {
    100 * (n as f64).sqrt().ceil() as usize
}

/// Balanced die by rejection: draw `n - 1` iid faces, set the last face to
/// the balance target minus their sum and accept when it lands in the
/// interval.
pub fn sample_balanced<R: Rng + ?Sized>(
    spec: &IntervalSpec,
    rng: &mut R,
    max_attempts: usize,
) -> Result<Die> {
    let mut faces = vec![0.0; spec.n];
    let last = try_fill_balanced(spec, rng, max_attempts, &mut faces)?;
    faces[spec.n - 1] = last;
    Ok(Die::from_parts(faces, *spec, true))
}

/// Balanced face vector written into `faces`, without building a [`Die`].
/// Used on hot paths where only the raw roll vector is needed.
pub fn sample_balanced_into<R: Rng + ?Sized>(
    spec: &IntervalSpec,
    rng: &mut R,
    max_attempts: usize,
    faces: &mut [f64],
) -> Result<()> {
    assert_eq!(faces.len(), spec.n);
    let last = try_fill_balanced(spec, rng, max_attempts, faces)?;
    faces[spec.n - 1] = last;
    Ok(())
}

fn try_fill_balanced<R: Rng + ?Sized>(
    spec: &IntervalSpec,
    rng: &mut R,
    max_attempts: usize,
    faces: &mut [f64],
) -> Result<f64> {
    let target = spec.balance_target();
    let w = spec.width();
    let free = spec.n - 1;
    for _ in 0..max_attempts.max(1) {
        let mut sum = Neumaier::default();
        for face in faces[..free].iter_mut() {
            *face = spec.z1 + w * rng.random::<f64>();
            sum.add(*face);
        }
        let last = target - sum.value();
        if last >= spec.z1 && last <= spec.z2 {
            return Ok(last);
        }
    }
    Err(Error::AttemptsExhausted {
        attempts: max_attempts.max(1),
    })
}

fn check_dims(a: &Die, b: &Die) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    Ok(())
}

/// Reference O(n^2) margin.
pub fn beats_naive(a: &Die, b: &Die) -> Result<BeatsOutcome> {
    check_dims(a, b)?;
    let mut margin = 0i64;
    for &x in &a.faces {
        for &y in &b.faces {
            margin += match x.partial_cmp(&y) {
                Some(Ordering::Greater) => 1,
                Some(Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    Ok(BeatsOutcome::from_margin(margin))
}

/// Same margin as [`beats_naive`], by a merge over the sorted faces.
pub fn beats_fast(a: &Die, b: &Die) -> Result<BeatsOutcome> {
    check_dims(a, b)?;
    Ok(BeatsOutcome::from_margin(sorted_margin(&a.sorted, &b.sorted)))
}

/// Margin between two ascending face slices of arbitrary lengths.
pub fn sorted_margin(a: &[f64], b: &[f64]) -> i64 {
    let m = b.len() as i64;
    let (mut below, mut at_or_below) = (0usize, 0usize);
    let mut margin = 0i64;
    for &x in a {
        while below < b.len() && b[below] < x {
            below += 1;
        }
        if at_or_below < below {
            at_or_below = below;
        }
        while at_or_below < b.len() && b[at_or_below] <= x {
            at_or_below += 1;
        }
        margin += below as i64 - (m - at_or_below as i64);
    }
    margin
}

/// Maps every face through the increasing affine map onto `target`.
pub fn rescale(a: &Die, target: &IntervalSpec) -> Result<Die> {
    if target.n != a.n() {
        return Err(Error::DimensionMismatch {
            left: a.n(),
            right: target.n,
        });
    }
    let faces = a
        .faces
        .iter()
        .map(|&x| a.spec.map_to(target, x).clamp(target.z1, target.z2))
        .collect();
    Ok(Die::from_parts(faces, *target, a.balanced))
}

/// `|{i : a_i <= x}|`.
pub fn f_count(a: &Die, x: f64) -> usize {
    a.sorted.partition_point(|&f| f <= x)
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    compensation: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub(crate) fn neumaier_sum(xs: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    xs.iter().for_each(|&x| acc.add(x));
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::RngStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn die(faces: &[f64], z1: f64, z2: f64) -> Die {
        Die::new(faces.to_vec(), IntervalSpec::new(z1, z2, faces.len()).unwrap()).unwrap()
    }

    #[test]
    fn interval_validation() {
        assert!(IntervalSpec::new(1.0, 0.0, 5).is_err());
        assert!(IntervalSpec::new(0.0, 1.0, 1).is_err());
        assert!(IntervalSpec::new(0.0, f64::NAN, 3).is_err());
        let s = IntervalSpec::symmetric(10).unwrap();
        assert_eq!(s.balance_target(), 0.0);
        assert_eq!(IntervalSpec::wide(101).unwrap().balance_target(), 101.0 * 101.0 / 2.0);
    }

    #[test]
    fn iid_faces_in_range() {
        let spec = IntervalSpec::unit(6).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        for _ in 0..100 {
            let d = sample_iid(&spec, &mut rng);
            assert!(d.faces().iter().all(|&f| (0.0..=1.0).contains(&f)));
            assert!(!d.is_balanced());
        }
    }

    #[test]
    fn iid_mean_matches_clt_bound() {
        // one die with a million faces: sample mean within 5 standard errors
        let n = 1_000_000;
        let spec = IntervalSpec::symmetric(n).unwrap();
        let d = sample_iid(&spec, &mut RngStream::new(11, 0).rng());
        let mean = d.face_sum() / n as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "mean {mean}");

        let n = 100;
        let spec = IntervalSpec::wide(n).unwrap();
        let d = sample_iid(&spec, &mut RngStream::new(12, 0).rng());
        let mean = d.face_sum() / n as f64;
        let sd = n as f64 / (12.0 * n as f64).sqrt();
        assert!((mean - n as f64 / 2.0).abs() < 5.0 * sd);
    }

    #[test]
    fn balanced_face_sums() {
        let mut rng = RngStream::new(5, 1).rng();
        let spec = IntervalSpec::unit(3).unwrap();
        for _ in 0..1000 {
            let d = sample_balanced(&spec, &mut rng, default_max_attempts(3)).unwrap();
            assert!((d.face_sum() - 1.5).abs() < 1e-9);
            assert!(d.is_balanced());
            assert!(d.faces().iter().all(|&f| (0.0..=1.0).contains(&f)));
        }
        let spec = IntervalSpec::wide(101).unwrap();
        let d = sample_balanced(&spec, &mut rng, default_max_attempts(101)).unwrap();
        assert!((d.face_sum() - 101.0 * 101.0 / 2.0).abs() <= spec.balance_tolerance());
    }

    #[test]
    fn balanced_acceptance_rate() {
        let n = 101;
        let spec = IntervalSpec::symmetric(n).unwrap();
        let mut rng = RngStream::new(8, 0).rng();
        let draws = 10_000;
        let mut attempts = 0usize;
        for _ in 0..draws {
            // one attempt at a time, count until the first success
            loop {
                attempts += 1;
                if sample_balanced(&spec, &mut rng, 1).is_ok() {
                    break;
                }
            }
        }
        let rate = draws as f64 / attempts as f64;
        assert!(rate >= 1.0 / (5.0 * (n as f64).sqrt()), "rate {rate}");
    }

    #[test]
    fn attempts_exhausted() {
        // a single attempt at n = 400 is accepted only about 3% of the time
        let spec = IntervalSpec::unit(400).unwrap();
        let mut rng = RngStream::new(1, 0).rng();
        let failures = (0..50)
            .filter(|_| matches!(sample_balanced(&spec, &mut rng, 1), Err(Error::AttemptsExhausted { attempts: 1 })))
            .count();
        assert!(failures > 25);
    }

    #[test]
    fn efron_margins() {
        let spec = IntervalSpec::new(0.0, 6.0, 6).unwrap();
        let a = Die::new(vec![0., 0., 4., 4., 4., 4.], spec).unwrap();
        let b = Die::new(vec![3.; 6], spec).unwrap();
        let c = Die::new(vec![2., 2., 2., 2., 6., 6.], spec).unwrap();
        let d = Die::new(vec![1., 1., 1., 5., 5., 5.], spec).unwrap();
        for (x, y) in [(&a, &b), (&b, &c), (&c, &d), (&d, &a)] {
            let naive = beats_naive(x, y).unwrap();
            assert_eq!(naive.margin, 12);
            assert_eq!(naive.result, Outcome::FirstWins);
            assert_eq!(beats_fast(x, y).unwrap(), naive);
        }
        assert_eq!(beats_fast(&b, &d).unwrap().result, Outcome::Draw);
    }

    #[test]
    fn small_examples() {
        let a = die(&[2., 4., 9.], 0.0, 10.0);
        let b = die(&[1., 6., 8.], 0.0, 10.0);
        assert_eq!(beats_naive(&a, &b).unwrap().margin, 1);
        assert_eq!(beats_fast(&a, &b).unwrap().margin, 1);
        assert_eq!(beats_fast(&a, &a).unwrap().result, Outcome::Draw);
        let ones = die(&[1., 1.], 0.0, 2.0);
        assert_eq!(beats_fast(&ones, &ones).unwrap().margin, 0);
        let three = die(&[1., 2., 3.], 0.0, 4.0);
        assert!(matches!(beats_naive(&three, &ones), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(beats_fast(&three, &ones), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fast_matches_naive_random() {
        let mut rng = RngStream::new(99, 0).rng();
        for trial in 0..1000 {
            let n = 1 + (trial % 200) + 1;
            let spec = IntervalSpec::unit(n).unwrap();
            // coarse faces force plenty of ties
            let coarse = |d: Die| {
                let faces = d.faces().iter().map(|f| (f * 8.0).round() / 8.0).collect();
                Die::new(faces, spec).unwrap()
            };
            let mut a = sample_iid(&spec, &mut rng);
            let mut b = sample_iid(&spec, &mut rng);
            if trial % 2 == 0 {
                a = coarse(a);
                b = coarse(b);
            }
            assert_eq!(beats_fast(&a, &b).unwrap(), beats_naive(&a, &b).unwrap());
        }
    }

    #[test]
    fn rescale_examples() {
        let a = die(&[0.1, 0.5, 0.9], 0.0, 1.0);
        let r = rescale(&a, &IntervalSpec::new(0.0, 3.0, 3).unwrap()).unwrap();
        for (x, y) in r.faces().iter().zip([0.3, 1.5, 2.7]) {
            assert!((x - y).abs() < 1e-12);
        }
        let n = 51;
        let mut rng = RngStream::new(4, 0).rng();
        let unit = IntervalSpec::unit(n).unwrap();
        let wide = IntervalSpec::wide(n).unwrap();
        let b = sample_balanced(&unit, &mut rng, default_max_attempts(n)).unwrap();
        let rb = rescale(&b, &wide).unwrap();
        assert!(rb.is_balanced());
        assert!((rb.face_sum() - (n * n) as f64 / 2.0).abs() <= wide.balance_tolerance());
        assert!(matches!(
            rescale(&b, &IntervalSpec::unit(3).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rescale_preserves_margins() {
        let mut rng = RngStream::new(21, 0).rng();
        let unit = IntervalSpec::unit(40).unwrap();
        let sym = IntervalSpec::symmetric(40).unwrap();
        for _ in 0..100 {
            let a = sample_iid(&unit, &mut rng);
            let b = sample_iid(&unit, &mut rng);
            let m = beats_fast(&a, &b).unwrap().margin;
            let ra = rescale(&a, &sym).unwrap();
            let rb = rescale(&b, &sym).unwrap();
            assert_eq!(beats_fast(&ra, &rb).unwrap().margin, m);
        }
    }

    #[test]
    fn f_count_examples() {
        let a = die(&[0.2, 0.4, 0.6], 0.0, 1.0);
        assert_eq!(f_count(&a, 0.5), 2);
        assert_eq!(f_count(&a, 0.1), 0);
        assert_eq!(f_count(&a, -3.0), 0);
        assert_eq!(f_count(&a, 0.6), 3);
        assert_eq!(f_count(&a, 7.0), 3);
        let mut rng = RngStream::new(2, 0).rng();
        let d = sample_iid(&IntervalSpec::unit(30).unwrap(), &mut rng);
        for _ in 0..100 {
            let x: f64 = rng.random::<f64>() * 1.2 - 0.1;
            let linear = d.faces().iter().filter(|&&f| f <= x).count();
            assert_eq!(f_count(&d, x), linear);
        }
    }

    #[test]
    fn odd_balanced_dice_never_draw() {
        let n = 21;
        let spec = IntervalSpec::unit(n).unwrap();
        let mut rng = RngStream::new(77, 0).rng();
        for _ in 0..500 {
            let a = sample_balanced(&spec, &mut rng, default_max_attempts(n)).unwrap();
            let b = sample_balanced(&spec, &mut rng, default_max_attempts(n)).unwrap();
            if !a.has_ties_with(&b) {
                assert_ne!(beats_fast(&a, &b).unwrap().result, Outcome::Draw);
            }
        }
    }

    proptest! {
        #[test]
        fn margin_antisymmetric(
            xs in prop::collection::vec(0.0f64..1.0, 1..30),
            seed in any::<u64>(),
        ) {
            let n = xs.len();
            let spec = IntervalSpec::unit(n.max(2)).unwrap();
            prop_assume!(n >= 2);
            let a = Die::new(xs, spec).unwrap();
            let b = sample_iid(&spec, &mut RngStream::new(seed, 0).rng());
            let ab = beats_fast(&a, &b).unwrap().margin;
            let ba = beats_fast(&b, &a).unwrap().margin;
            prop_assert_eq!(ab, -ba);
            prop_assert!(ab.unsigned_abs() <= (n * n) as u64);
            prop_assert_eq!(ab, beats_naive(&a, &b).unwrap().margin);
        }
    }
}
