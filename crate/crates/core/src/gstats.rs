//! The centered counting function `g_A(x) = f_A(x) - n F(x)` and the
//! second moments of `U_A = g_A(V)`, `U_B = g_B(V)` and `V` for a uniform
//! roll `V`.

use serde::{Deserialize, Serialize};

use crate::dice::{f_count, Die, Neumaier};
use crate::{Error, Result};

/// Second-moment statistics of `(U_A, U_B, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GMoments {
    pub mean_a: f64,
    pub mean_b: f64,
    pub var_a: f64,
    pub var_b: f64,
    pub cv_ab: f64,
    pub cv_a: f64,
    pub cv_b: f64,
    pub var_h: f64,
    pub var_a_cond: f64,
    pub var_b_cond: f64,
    pub cv_ab_cond: f64,
    pub sup_a: f64,
    pub sup_b: f64,
    /// Correlation of the conditioned pair; 0 when a conditional variance
    /// is not positive.
    pub rho_cond: f64,
}

impl GMoments {
    /// Fills in the conditional fields from the primitive ones.
    #[allow(clippy::too_many_arguments)]
    pub fn from_primitives(
        mean_a: f64,
        mean_b: f64,
        var_a: f64,
        var_b: f64,
        cv_ab: f64,
        cv_a: f64,
        cv_b: f64,
        var_h: f64,
        sup_a: f64,
        sup_b: f64,
    ) -> Self {
        let var_a_cond = var_a - cv_a * cv_a / var_h;
        let var_b_cond = var_b - cv_b * cv_b / var_h;
        let cv_ab_cond = cv_ab - cv_a * cv_b / var_h;
        let rho_cond = if var_a_cond > 0.0 && var_b_cond > 0.0 {
            cv_ab_cond / (var_a_cond * var_b_cond).sqrt()
        } else {
            0.0
        };
        Self {
            mean_a,
            mean_b,
            var_a,
            var_b,
            cv_ab,
            cv_a,
            cv_b,
            var_h,
            var_a_cond,
            var_b_cond,
            cv_ab_cond,
            sup_a,
            sup_b,
            rho_cond,
        }
    }

    /// Largest relative difference between the fields of two reports.
    pub fn max_relative_difference(&self, other: &Self) -> f64 {
        let pairs = [
            (self.var_a, other.var_a),
            (self.var_b, other.var_b),
            (self.cv_ab, other.cv_ab),
            (self.cv_a, other.cv_a),
            (self.cv_b, other.cv_b),
            (self.var_h, other.var_h),
            (self.var_a_cond, other.var_a_cond),
            (self.var_b_cond, other.var_b_cond),
            (self.cv_ab_cond, other.cv_ab_cond),
            (self.sup_a, other.sup_a),
            (self.sup_b, other.sup_b),
        ];
        pairs
            .iter()
            .map(|&(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0, f64::max)
    }
}

/// `g_A(x)` for `x` in the die's interval.
pub fn g_eval(a: &Die, x: f64) -> Result<f64> {
    let spec = a.spec();
    if !(x >= spec.z1() && x <= spec.z2()) {
        return Err(Error::OutOfRange {
            value: x,
            low: spec.z1(),
            high: spec.z2(),
        });
    }
    Ok(f_count(a, x) as f64 - a.n() as f64 * spec.cdf(x))
}

fn check_pair(a: &Die, b: &Die) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    if !a.spec().same_interval(b.spec()) {
        return Err(Error::IntervalMismatch);
    }
    Ok(())
}

/// `sum_i g_A(b_i)`; positive exactly when B beats A.
pub fn sum_g(a: &Die, b: &Die) -> Result<f64> {
    check_pair(a, b)?;
    let mut acc = Neumaier::default();
    for &x in b.faces() {
        acc.add(g_eval(a, x)?);
    }
    Ok(acc.value())
}

/// Same as [`sum_g`] for a raw vector of rolls on A's interval.
pub fn sum_g_rolls(a: &Die, rolls: &[f64]) -> f64 {
    let spec = a.spec();
    let n = a.n() as f64;
    let mut count = 0usize;
    let mut cdf = Neumaier::default();
    for &x in rolls {
        count += f_count(a, x);
        cdf.add(spec.cdf(x));
    }
    count as f64 - n * cdf.value()
}

/// Exact moments by piecewise integration over the merged face breakpoints.
/// Between consecutive breakpoints both `g_A` and `g_B` are linear, so
/// Simpson's rule is exact on every piece.
pub fn moments_quadrature(a: &Die, b: &Die) -> Result<GMoments> {
    check_pair(a, b)?;
    let spec = a.spec();
    let (z1, z2) = (spec.z1(), spec.z2());
    let w = spec.width();
    let n = a.n() as f64;

    let mut breaks = Vec::with_capacity(2 * a.n() + 2);
    breaks.push(z1);
    breaks.extend_from_slice(a.sorted_faces());
    breaks.extend_from_slice(b.sorted_faces());
    breaks.push(z2);
    breaks.sort_unstable_by(f64::total_cmp);
    breaks.dedup();

    let (mut ia, mut ib) = (0usize, 0usize);
    let (sa, sb) = (a.sorted_faces(), b.sorted_faces());
    let mut ga = Neumaier::default();
    let mut gb = Neumaier::default();
    let mut gaa = Neumaier::default();
    let mut gbb = Neumaier::default();
    let mut gab = Neumaier::default();
    let mut gav = Neumaier::default();
    let mut gbv = Neumaier::default();
    for piece in breaks.windows(2) {
        let (c, d) = (piece[0], piece[1]);
        while ia < sa.len() && sa[ia] <= c {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= c {
            ib += 1;
        }
        let (fa, fb) = (ia as f64, ib as f64);
        let h = d - c;
        let m = 0.5 * (c + d);
        let line = |f: f64, x: f64| f - n * (x - z1) / w;
        let simpson = |p: &dyn Fn(f64) -> f64| h / 6.0 * (p(c) + 4.0 * p(m) + p(d));
        ga.add(simpson(&|x| line(fa, x)));
        gb.add(simpson(&|x| line(fb, x)));
        gaa.add(simpson(&|x| line(fa, x).powi(2)));
        gbb.add(simpson(&|x| line(fb, x).powi(2)));
        gab.add(simpson(&|x| line(fa, x) * line(fb, x)));
        gav.add(simpson(&|x| line(fa, x) * x));
        gbv.add(simpson(&|x| line(fb, x) * x));
    }
    let mean_v = 0.5 * (z1 + z2);
    let e = |acc: Neumaier| acc.value() / w;
    let (mean_a, mean_b) = (e(ga), e(gb));
    Ok(GMoments::from_primitives(
        mean_a,
        mean_b,
        e(gaa) - mean_a * mean_a,
        e(gbb) - mean_b * mean_b,
        e(gab) - mean_a * mean_b,
        e(gav) - mean_a * mean_v,
        e(gbv) - mean_b * mean_v,
        spec.face_variance(),
        sup_norm_g(a),
        sup_norm_g(b),
    ))
}

/// Evaluation strategy for `sum_{i,j} max(a_i, b_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaxSumMethod {
    /// Sorting and suffix sums, `O(n log n)`.
    #[default]
    Sorted,
    /// Double loop, `O(n^2)`.
    Naive,
}

/// `sum_{i,j} max(a_i, b_j)` over two ascending slices.
pub fn pairwise_max_sum(a: &[f64], b: &[f64], method: MaxSumMethod) -> f64 {
    match method {
        MaxSumMethod::Naive => {
            let mut acc = Neumaier::default();
            for &x in a {
                for &y in b {
                    acc.add(x.max(y));
                }
            }
            acc.value()
        }
        MaxSumMethod::Sorted => {
            let mut suffix = vec![0.0; b.len() + 1];
            let mut run = Neumaier::default();
            for j in (0..b.len()).rev() {
                run.add(b[j]);
                suffix[j] = run.value();
            }
            let mut acc = Neumaier::default();
            let mut j = 0;
            for &x in a {
                while j < b.len() && b[j] < x {
                    j += 1;
                }
                acc.add(j as f64 * x);
                acc.add(suffix[j]);
            }
            acc.value()
        }
    }
}

/// Closed forms on the symmetric interval `[-sqrt 3, sqrt 3]` for balanced
/// dice, with the sorted max-sum.
pub fn moments_closed_form(a: &Die, b: &Die) -> Result<GMoments> {
    moments_closed_form_with(a, b, MaxSumMethod::Sorted)
}

pub fn moments_closed_form_with(a: &Die, b: &Die, method: MaxSumMethod) -> Result<GMoments> {
    check_pair(a, b)?;
    let spec = a.spec();
    if !spec.is_symmetric_unit_variance() {
        return Err(Error::UnsupportedInterval);
    }
    for d in [a, b] {
        let deviation = d.balance_deviation();
        if deviation.abs() > spec.balance_tolerance() {
            return Err(Error::NotBalanced { deviation });
        }
    }
    let n = a.n() as f64;
    let r3 = 3f64.sqrt();
    let (sa, sb) = (a.sorted_faces(), b.sorted_faces());
    let sum = |xs: &[f64]| crate::dice::neumaier_sum(xs);
    let sum_sq = |xs: &[f64]| {
        let mut acc = Neumaier::default();
        xs.iter().for_each(|&x| acc.add(x * x));
        acc.value()
    };
    let (s1a, s1b) = (sum(sa), sum(sb));
    let (s2a, s2b) = (sum_sq(sa), sum_sq(sb));
    let mean_a = -s1a / (2.0 * r3);
    let mean_b = -s1b / (2.0 * r3);
    let second = |s1x: f64, s1y: f64, s2x: f64, s2y: f64, max_sum: f64| {
        n * n / 12.0 + n / 24.0 * (s2x + s2y) - max_sum / (2.0 * r3) + n / (4.0 * r3) * (s1x + s1y)
    };
    let e_aa = second(s1a, s1a, s2a, s2a, pairwise_max_sum(sa, sa, method));
    let e_bb = second(s1b, s1b, s2b, s2b, pairwise_max_sum(sb, sb, method));
    let e_ab = second(s1a, s1b, s2a, s2b, pairwise_max_sum(sa, sb, method));
    let cv = |s2: f64| n / (4.0 * r3) - s2 / (4.0 * r3);
    Ok(GMoments::from_primitives(
        mean_a,
        mean_b,
        e_aa - mean_a * mean_a,
        e_bb - mean_b * mean_b,
        e_ab - mean_a * mean_b,
        cv(s2a),
        cv(s2b),
        1.0,
        sup_norm_g(a),
        sup_norm_g(b),
    ))
}

/// `Var U_A` from the closed form for a single balanced symmetric-interval die.
pub fn var_a_closed(a: &Die) -> Result<f64> {
    Ok(moments_closed_form(a, a)?.var_a)
}

/// Exact `sup |g_A|`. Between faces `g_A` is linear with negative slope, so
/// the supremum is attained at a one-sided limit at a face or an endpoint.
pub fn sup_norm_g(a: &Die) -> f64 {
    let spec = a.spec();
    let n = a.n() as f64;
    let sorted = a.sorted_faces();
    let mut best = (f_count(a, spec.z1()) as f64).abs();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let base = n * spec.cdf(x);
        best = best.max((i as f64 - base).abs()).max((j as f64 - base).abs());
        i = j;
    }
    best
}
