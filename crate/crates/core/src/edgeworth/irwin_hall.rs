//! Exact density of a sum of iid uniforms on `[-sqrt 3, sqrt 3]`.
//!
//! With `u = (x + n sqrt 3) / (2 sqrt 3)` the sum density is the Irwin-Hall
//! density of `u` divided by `2 sqrt 3`:
//! `f(u) = (n-1)!^{-1} sum_{k <= u} (-1)^k C(n, k) (u - k)^{n-1}`.
//! The alternating sum loses about `n` bits in double precision, so it is
//! evaluated exactly: the float `u` is a dyadic rational and every term is
//! an integer after scaling by a power of two.

use num_bigint::{BigInt, Sign};
use num_traits::{One, ToPrimitive, Zero};

use crate::quadrature::GaussLegendre;
use crate::{Error, Result};

/// Largest face count accepted by [`irwin_hall_density`].
pub const IRWIN_HALL_MAX_N: usize = 40;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// `u = mantissa / 2^shift` exactly.
fn dyadic(u: f64) -> (BigInt, u32) {
    debug_assert!(u.is_finite() && u >= 0.0);
    if u == 0.0 {
        return (BigInt::zero(), 0);
    }
    let bits = u.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mut mant, mut e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    while mant & 1 == 0 && e < 0 {
        mant >>= 1;
        e += 1;
    }
    if e >= 0 {
        (BigInt::from(mant) << e as usize, 0)
    } else {
        (BigInt::from(mant), (-e) as u32)
    }
}

/// `num / den` rounded to double precision.
fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let negative = num.sign() == Sign::Minus;
    let num = num.magnitude();
    let den = den.magnitude();
    let shift = (den.bits() as i64 - num.bits() as i64 + 80).max(0) as u64;
    let q = (num << shift) / den;
    let mut v = q.to_f64().unwrap_or(f64::INFINITY);
    let mut s = shift;
    while s > 0 {
        let step = s.min(1000);
        v /= 2f64.powi(step as i32);
        s -= step;
    }
    if negative {
        -v
    } else {
        v
    }
}

/// Irwin-Hall density of `u` for `n` summands, `0 <= u <= n`, exactly rounded.
fn irwin_hall_unit(n: usize, u: f64) -> f64 {
    if !(u > 0.0 && u < n as f64) {
        return 0.0;
    }
    let u = u.min(n as f64 - u);
    let (m, shift) = dyadic(u);
    let step = BigInt::one() << shift as usize;
    let mut binom = BigInt::one();
    let mut total = BigInt::zero();
    let mut k = 0usize;
    let mut base = m.clone();
    while k <= n && base.sign() == Sign::Plus {
        let term = &binom * num_traits::pow(base.clone(), n - 1);
        if k.is_multiple_of(2) {
            total += term;
        } else {
            total -= term;
        }
        binom = binom * BigInt::from(n - k) / BigInt::from(k + 1);
        base -= &step;
        k += 1;
    }
    let mut den = BigInt::one() << (shift as usize * (n - 1));
    for i in 2..n {
        den *= BigInt::from(i);
    }
    ratio_to_f64(&total, &den)
}

/// Exact sum density for any `n >= 1` (no cap); `0` outside `[-n sqrt 3, n sqrt 3]`.
pub fn uniform_sum_density(n: usize, x: f64) -> f64 {
    let half_width = n as f64 * SQRT3;
    if n == 0 || x.is_nan() || x.abs() >= half_width {
        return 0.0;
    }
    let u = (half_width - x.abs()) / (2.0 * SQRT3);
    irwin_hall_unit(n, u) / (2.0 * SQRT3)
}

/// Exact density of the sum of `n` iid uniforms on `[-sqrt 3, sqrt 3]`,
/// for `2 <= n <= 40`.
pub fn irwin_hall_density(n: usize, x: f64) -> Result<f64> {
    if !(2..=IRWIN_HALL_MAX_N).contains(&n) {
        return Err(Error::UnsupportedN {
            n,
            max: IRWIN_HALL_MAX_N,
        });
    }
    Ok(uniform_sum_density(n, x))
}

/// Piecewise-polynomial density of the uniform sum, with knots every `2 sqrt 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseDensity {
    n: usize,
    breakpoints: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=IRWIN_HALL_MAX_N).contains(&n) {
            return Err(Error::UnsupportedN {
                n,
                max: IRWIN_HALL_MAX_N,
            });
        }
        let breakpoints = (0..=n)
            .map(|j| -(n as f64) * SQRT3 + 2.0 * SQRT3 * j as f64)
            .collect();
        Ok(Self { n, breakpoints })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn density(&self, x: f64) -> f64 {
        uniform_sum_density(self.n, x)
    }

    /// Integral over the support; each piece has degree `n - 1`, so a rule
    /// with `n / 2 + 1` nodes per piece is exact.
    pub fn total_mass(&self) -> f64 {
        let rule = GaussLegendre::new(self.n / 2 + 1);
        rule.integrate_pieces(&self.breakpoints, |x| self.density(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle() {
        assert!((irwin_hall_density(2, 0.0).unwrap() - 1.0 / (2.0 * SQRT3)).abs() < 1e-15);
        assert_eq!(irwin_hall_density(2, 2.0 * SQRT3).unwrap(), 0.0);
        assert_eq!(irwin_hall_density(2, -2.0 * SQRT3).unwrap(), 0.0);
        // triangle on [-2 sqrt 3, 2 sqrt 3] with peak 1 / (2 sqrt 3)
        let x = 1.0;
        let expected = (2.0 * SQRT3 - x) / 12.0;
        assert!((irwin_hall_density(2, x).unwrap() - expected).abs() < 1e-15);
        assert!(matches!(irwin_hall_density(41, 0.0), Err(Error::UnsupportedN { .. })));
        assert!(irwin_hall_density(1, 0.0).is_err());
    }

    #[test]
    fn one_summand_is_uniform() {
        assert!((uniform_sum_density(1, 0.4) - 1.0 / (2.0 * SQRT3)).abs() < 1e-15);
        assert_eq!(uniform_sum_density(1, 2.0), 0.0);
    }

    #[test]
    fn normalization() {
        for n in 2..=10 {
            let d = PiecewiseDensity::new(n).unwrap();
            assert!((d.total_mass() - 1.0).abs() < 1e-9, "n={n}");
        }
        let d = PiecewiseDensity::new(40).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn convolution_recursion() {
        // f_{n+1}(x) = (2 sqrt 3)^{-1} int_{-sqrt 3}^{sqrt 3} f_n(x - s) ds
        let rule = GaussLegendre::new(24);
        for n in [3usize, 7, 20] {
            for x in [0.0, 0.9, 2.5] {
                // pieces of f_n(x - s) split at the knots that fall inside
                let mut breaks = vec![-SQRT3, SQRT3];
                for j in 0..=n {
                    let knot = x - (-(n as f64) * SQRT3 + 2.0 * SQRT3 * j as f64);
                    if knot > -SQRT3 && knot < SQRT3 {
                        breaks.push(knot);
                    }
                }
                breaks.sort_by(f64::total_cmp);
                let conv = rule.integrate_pieces(&breaks, |s| uniform_sum_density(n, x - s)) / (2.0 * SQRT3);
                let direct = uniform_sum_density(n + 1, x);
                assert!((conv - direct).abs() < 1e-13 * direct.max(1e-3), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn symmetric_and_nonnegative() {
        for n in [5usize, 17, 40] {
            for i in 0..50 {
                let x = i as f64 * 0.37;
                let v = irwin_hall_density(n, x).unwrap();
                assert!(v >= 0.0);
                assert_eq!(v, irwin_hall_density(n, -x).unwrap());
            }
        }
    }

    #[test]
    fn dyadic_round_trip() {
        for u in [0.5, 3.0, 1e-300, 12.345, 7.0e10] {
            let (m, s) = dyadic(u);
            assert_eq!(ratio_to_f64(&m, &(BigInt::one() << s as usize)), u);
        }
    }
}
